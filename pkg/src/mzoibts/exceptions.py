"""Exception types shared across the package.

Input problems (bad parameter values, malformed configs) raise ValueError
subclasses; failures that arise during numerical work (singular matrices,
non-convergence that cannot be recovered, infeasible simulation settings)
raise RuntimeError subclasses.  The command line maps the former to exit
code 2 and the latter to exit code 3.
"""


class MzoibtsError(Exception):
    """Base class for package errors."""


class DomainError(MzoibtsError, ValueError):
    """An argument lies outside its mathematical domain."""


class ConfigError(MzoibtsError, ValueError):
    """A run configuration is malformed or inconsistent."""


class SelectionError(MzoibtsError, ValueError):
    """A candidate set for model selection is empty or invalid."""


class NumericalError(MzoibtsError, RuntimeError):
    """A numerical procedure failed at run time."""


class InitializationError(NumericalError):
    """An iterative procedure could not start (e.g. non-finite objective at x0)."""


class RankDeficiencyError(NumericalError):
    """A matrix that must be inverted is singular or numerically rank deficient."""


class DegenerateTestError(NumericalError):
    """A test statistic cannot be formed because its variance matrix is singular."""


class GenerationError(NumericalError):
    """Simulation was asked to generate data from an infeasible configuration."""


class ConsistencyError(NumericalError):
    """An internal identity that must hold numerically was violated."""
