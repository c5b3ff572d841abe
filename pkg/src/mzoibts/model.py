"""Model layer: regression designs and the marginalized parameter map.

Four linear predictors drive the distribution at each time point:

    logit p1_t   = x1_t' beta1        probability of a positive outcome
    logit p2_t   = x2_t' beta2        probability of a one given positive
    logit v_t    = x3_t' beta3        marginal mean E(Y_t)
    log   phi_t  = x4_t' beta4        Beta precision

The Beta mean is recovered from the marginal mean rather than modeled
directly, which keeps ``beta3`` interpretable as covariate effects on
E(Y_t).  In closed form

    mu_t = (1 + e^{eta2})(1 + e^{-eta1}) / (1 + e^{-eta3}) - e^{eta2},

equal to ((v/p1) - p2)/(1 - p2) evaluated at the linked values.  Nothing
forces mu_t into (0, 1) for arbitrary coefficients, so
:class:`PerTimeParams` carries a feasibility mask that likelihood code
turns into a hard barrier.

The interrupted time-series design places an intercept, a time trend, a
level-change indicator, and a slope-change hinge in the mean design, an
intercept plus the same indicator in the dispersion design, and lone
intercepts in the two inflation designs.
"""

from __future__ import annotations

import dataclasses
import math
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray
from scipy.special import expit

from .exceptions import ConfigError, DomainError

__all__ = [
    "Theta",
    "DesignSet",
    "ItsConfig",
    "PerTimeParams",
    "LinearPredictors",
    "default_tau",
    "its_design",
    "linear_predictors",
    "per_time_params",
    "marginal_mean",
]


def _coef_array(value, name):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError(f"{name} must be a nonempty 1-D coefficient vector")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


@dataclasses.dataclass(frozen=True)
class Theta:
    """Stage-1 coefficient blocks, ordered (beta1, beta2, beta3, beta4)."""

    beta1: NDArray[np.float64]
    beta2: NDArray[np.float64]
    beta3: NDArray[np.float64]
    beta4: NDArray[np.float64]

    def __post_init__(self):
        for name in ("beta1", "beta2", "beta3", "beta4"):
            object.__setattr__(self, name, _coef_array(getattr(self, name), name))

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (self.beta1.size, self.beta2.size, self.beta3.size, self.beta4.size)

    @property
    def size(self) -> int:
        return sum(self.dims)

    def flatten(self) -> NDArray[np.float64]:
        return np.concatenate([self.beta1, self.beta2, self.beta3, self.beta4])

    @classmethod
    def from_flat(cls, flat, dims) -> "Theta":
        flat = np.asarray(flat, dtype=float)
        if flat.size != sum(dims):
            raise DomainError(
                f"flat vector of length {flat.size} does not match blocks {dims}"
            )
        k1, k2, k3, _ = dims
        return cls(
            beta1=flat[:k1],
            beta2=flat[k1:k1 + k2],
            beta3=flat[k1 + k2:k1 + k2 + k3],
            beta4=flat[k1 + k2 + k3:],
        )

    def names(self) -> list[str]:
        out = []
        for block, coefs in zip(("beta1", "beta2", "beta3", "beta4"),
                                (self.beta1, self.beta2, self.beta3, self.beta4)):
            out.extend(f"{block}_{j}" for j in range(coefs.size))
        return out


def _design_matrix(value, name, n=None):
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DomainError(f"{name} must be a 2-D design matrix")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    if n is not None and arr.shape[0] != n:
        raise DomainError(f"{name} has {arr.shape[0]} rows; expected {n}")
    return arr


@dataclasses.dataclass(frozen=True)
class DesignSet:
    """The four design matrices, sharing one time dimension."""

    x1: NDArray[np.float64]
    x2: NDArray[np.float64]
    x3: NDArray[np.float64]
    x4: NDArray[np.float64]

    def __post_init__(self):
        x1 = _design_matrix(self.x1, "x1")
        n = x1.shape[0]
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "x2", _design_matrix(self.x2, "x2", n))
        object.__setattr__(self, "x3", _design_matrix(self.x3, "x3", n))
        object.__setattr__(self, "x4", _design_matrix(self.x4, "x4", n))

    @property
    def n(self) -> int:
        return self.x1.shape[0]

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (self.x1.shape[1], self.x2.shape[1], self.x3.shape[1], self.x4.shape[1])


def default_tau(n: int) -> int:
    """Midpoint changepoint index, ceil((n+1)/2).

    Splits an even-length series into equal halves under the
    post-indicator convention I(t >= tau), and gives index 31 at n = 61.
    """
    return (n + 2) // 2


@dataclasses.dataclass(frozen=True)
class ItsConfig:
    """Interrupted time-series design specification.

    Attributes
    ----------
    n : int
        Series length; time runs 1..n.
    tau : int, optional
        Changepoint index; defaults to the midpoint.
    t0 : int, optional
        Nominal intervention index used for reporting and candidate
        grids; defaults to ``tau``.
    transform : str
        Time scale entering the design, "identity" or "log".
    dispersion_change : bool
        If True the dispersion design is [1, post-indicator]; otherwise
        intercept only.
    """

    n: int
    tau: int | None = None
    t0: int | None = None
    transform: str = "identity"
    dispersion_change: bool = True

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 4:
            raise ConfigError(f"n must be an integer >= 4, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        tau = default_tau(self.n) if self.tau is None else self.tau
        if int(tau) != tau or not 2 <= int(tau) <= self.n - 1:
            raise ConfigError(
                f"tau must be an integer in [2, n-1] = [2, {self.n - 1}], got {tau}"
            )
        object.__setattr__(self, "tau", int(tau))
        t0 = self.tau if self.t0 is None else self.t0
        if int(t0) != t0 or not 1 <= int(t0) <= self.n:
            raise ConfigError(f"t0 must be an integer in [1, n], got {t0}")
        object.__setattr__(self, "t0", int(t0))
        if self.transform not in ("identity", "log"):
            raise ConfigError(
                f"transform must be 'identity' or 'log', got {self.transform!r}"
            )

    def with_tau(self, tau: int) -> "ItsConfig":
        return dataclasses.replace(self, tau=tau)


def its_design(cfg: ItsConfig) -> DesignSet:
    """Build the four design matrices for an ITS configuration.

    The mean design is [1, T(t), I(T(t) >= T(tau)), (T(t) - T(tau))_+],
    with T the configured time transform.
    """
    t = np.arange(1, cfg.n + 1, dtype=float)
    if cfg.transform == "log":
        T = np.log(t)
        T_tau = math.log(cfg.tau)
    else:
        T = t
        T_tau = float(cfg.tau)
    post = (T >= T_tau).astype(float)
    hinge = np.maximum(T - T_tau, 0.0)
    ones = np.ones((cfg.n, 1))
    x3 = np.column_stack([np.ones(cfg.n), T, post, hinge])
    if cfg.dispersion_change:
        x4 = np.column_stack([np.ones(cfg.n), post])
    else:
        x4 = ones.copy()
    return DesignSet(x1=ones, x2=ones.copy(), x3=x3, x4=x4)


class LinearPredictors(NamedTuple):
    eta1: NDArray[np.float64]
    eta2: NDArray[np.float64]
    eta3: NDArray[np.float64]
    eta4: NDArray[np.float64]


def linear_predictors(theta: Theta, designs: DesignSet) -> LinearPredictors:
    """Evaluate the four linear predictors; dimensions must agree."""
    if theta.dims != designs.dims:
        raise DomainError(
            f"coefficient blocks {theta.dims} do not match design columns {designs.dims}"
        )
    return LinearPredictors(
        eta1=designs.x1 @ theta.beta1,
        eta2=designs.x2 @ theta.beta2,
        eta3=designs.x3 @ theta.beta3,
        eta4=designs.x4 @ theta.beta4,
    )


@dataclasses.dataclass(frozen=True)
class PerTimeParams:
    """Per-time distribution parameters with a feasibility mask.

    ``feasible`` is False wherever the recovered Beta mean leaves (0, 1);
    such time points have no valid interior density.
    """

    p1: NDArray[np.float64]
    p2: NDArray[np.float64]
    mu: NDArray[np.float64]
    phi: NDArray[np.float64]
    feasible: NDArray[np.bool_]

    @property
    def all_feasible(self) -> bool:
        return bool(np.all(self.feasible))


def per_time_params(theta: Theta, designs: DesignSet) -> PerTimeParams:
    """Map coefficients to per-time (p1, p2, mu, phi)."""
    eta = linear_predictors(theta, designs)
    p1 = expit(eta.eta1)
    p2 = expit(eta.eta2)
    with np.errstate(over="ignore", invalid="ignore"):
        mu = ((1.0 + np.exp(eta.eta2)) * (1.0 + np.exp(-eta.eta1))
              / (1.0 + np.exp(-eta.eta3)) - np.exp(eta.eta2))
        phi = np.exp(eta.eta4)
    feasible = np.isfinite(mu) & (mu > 0.0) & (mu < 1.0) & np.isfinite(phi) & (phi > 0.0)
    return PerTimeParams(p1=p1, p2=p2, mu=mu, phi=phi, feasible=feasible)


def marginal_mean(theta: Theta, designs: DesignSet) -> NDArray[np.float64]:
    """Fitted marginal means v_t = logistic(x3_t' beta3)."""
    return expit(linear_predictors(theta, designs).eta3)
