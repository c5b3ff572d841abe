"""Trajectory generation and the Monte Carlo study harness.

A series is generated by running the copula's conditional quantile as a
first-order recursion on uniforms and pushing each uniform through the
per-time marginal quantile.  For the Gaussian family the recursion is
carried on the latent normal scale, z_t = rho z_{t-1} + sqrt(1-rho^2)
eps_t, which evaluates the same conditional quantile with fewer
transforms; given the same uniforms the two forms agree pathwise to
floating-point accuracy.

The study harness repeats simulate / (optionally select changepoint) /
fit / standard errors over seeded replicates and aggregates bias, the
sampling spread of the estimates, the mean reported standard error,
interval coverage, and per-coefficient Wald rejection rates.  Replicate
k draws from ``RngStream(seed, k)`` and any bootstrap inside it from
substreams ``1000 + b``, so reports are reproducible bit for bit and
independent of worker scheduling.
"""

import dataclasses
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from functools import partial

import numpy as np

from .copula import FAMILY_KINDS, CopulaFamily, copula_h_inv
from .estimate import fit_stage1, fit_stage2_copula
from .exceptions import ConfigError, GenerationError, MzoibtsError, NumericalError
from .infer import bootstrap_se, hac_covariance, select_changepoint
from .model import ItsConfig, Theta, its_design, per_time_params
from .numkit import RngStream, chi_square_quantile, normal_cdf, normal_quantile
from .zoib import _quantile_arrays

__all__ = ["markov_series", "McStudyConfig", "McStudyReport", "run_mc_study"]

_UNIFORM_CLIP = 1e-12


def markov_series(theta, designs, family, rng):
    """Simulate one trajectory of the copula-linked chain.

    The first uniform feeds the marginal law directly; each later one is
    mapped through the conditional quantile given the previous uniform.
    All coefficients must give a usable Beta mean at every time point.
    """
    params = per_time_params(theta, designs)
    if not params.all_feasible:
        bad = np.nonzero(~params.feasible)[0] + 1
        shown = ", ".join(str(int(b)) for b in bad[:8])
        more = f" (+{bad.size - 8} more)" if bad.size > 8 else ""
        raise GenerationError(
            f"cannot simulate: Beta mean leaves (0, 1) at time {shown}{more}"
        )
    n = designs.n
    w = np.clip(rng.uniform(size=n), _UNIFORM_CLIP, 1.0 - _UNIFORM_CLIP)
    if family.kind == "gaussian":
        rho = family.rho
        eps = normal_quantile(w)
        z = np.empty(n)
        z[0] = eps[0]
        scale = np.sqrt(1.0 - rho * rho)
        for t in range(1, n):
            z[t] = rho * z[t - 1] + scale * eps[t]
        u = normal_cdf(z)
    else:
        u = np.empty(n)
        u[0] = w[0]
        for t in range(1, n):
            u[t] = float(copula_h_inv(family, w[t], u[t - 1]))
    u = np.clip(u, _UNIFORM_CLIP, 1.0 - _UNIFORM_CLIP)
    return _quantile_arrays(u, params.p1, params.p2, params.mu, params.phi)


@dataclasses.dataclass(frozen=True)
class McStudyConfig:
    """One cell of the simulation study.

    ``its`` fixes the series length and design; ``se_method`` chooses
    between the sandwich covariance and the parametric bootstrap with
    ``R`` replicates.  When ``select_tau`` is set, each replicate first
    scores ``candidates`` and refits at the winner.  ``fit_family``
    overrides the copula family used when refitting, which lets a study
    generate under one family and analyze under another; by default the
    generating family is reused.
    """

    theta_true: Theta
    family: CopulaFamily
    its: ItsConfig
    K: int
    se_method: str = "bootstrap"
    R: int = 200
    select_tau: bool = False
    candidates: tuple | None = None
    alpha: float = 0.05
    seed: int = 0
    fit_family: str | None = None

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ConfigError(f"K must be a positive integer, got {self.K}")
        object.__setattr__(self, "K", int(self.K))
        if self.se_method not in ("hac", "bootstrap"):
            raise ConfigError(
                f"se_method must be 'hac' or 'bootstrap', got {self.se_method!r}"
            )
        if self.se_method == "bootstrap" and self.R < 2:
            raise ConfigError(f"bootstrap needs R >= 2, got {self.R}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.fit_family is not None and self.fit_family not in FAMILY_KINDS:
            raise ConfigError(
                f"fit_family must be one of {FAMILY_KINDS}, got {self.fit_family!r}"
            )
        if self.select_tau:
            if not self.candidates:
                raise ConfigError("select_tau needs a nonempty candidate set")
            cands = tuple(int(c) for c in self.candidates)
            if self.its.tau not in cands:
                raise ConfigError(
                    f"candidates {cands} must include the design tau {self.its.tau}"
                )
            object.__setattr__(self, "candidates", cands)

    @property
    def n(self):
        return self.its.n


@dataclasses.dataclass
class McStudyReport:
    """Aggregated study results plus the per-replicate arrays behind them.

    Aggregates are computed over converged replicates only; failed rows
    hold NaN in ``estimates`` and ``std_errors``.
    """

    coef_names: list
    total: int
    converged: int
    estimates: np.ndarray
    std_errors: np.ndarray
    bias: np.ndarray
    se: np.ndarray
    mean_se: np.ndarray
    coverage: np.ndarray
    power: np.ndarray
    selected_taus: np.ndarray | None
    wall_time: float


def _replicate(cfg, k):
    rng = RngStream(cfg.seed, k)
    p = sum(cfg.theta_true.dims)
    try:
        its = cfg.its
        designs = its_design(its)
        y = markov_series(cfg.theta_true, designs, cfg.family, rng)
        selected = -1
        if cfg.select_tau:
            choice = select_changepoint(its, y, cfg.candidates)
            selected = choice.selected_tau
            its = its.with_tau(selected)
            designs = its_design(its)
        fit1 = fit_stage1(designs, y)
        if not fit1.converged:
            raise NumericalError("stage-1 fit did not converge")
        if cfg.se_method == "hac":
            cov = hac_covariance(fit1, designs, y)
        else:
            kind = cfg.fit_family or cfg.family.kind
            fit2 = fit_stage2_copula(kind, fit1.theta, designs, y)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                cov = bootstrap_se(fit1, fit2, designs, cfg.R, rng)
        se = cov.std_errors
        flat = fit1.theta.flatten()
        truth = cfg.theta_true.flatten()
        half = normal_quantile(1.0 - cfg.alpha / 2.0) * se
        cover = np.abs(flat - truth) <= half
        crit = chi_square_quantile(1.0 - cfg.alpha, 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            reject = (flat / se) ** 2 > crit
        return (k, True, selected, flat, se, cover, reject)
    except MzoibtsError:
        nan = np.full(p, np.nan)
        no = np.zeros(p, dtype=bool)
        return (k, False, -1, nan, nan, no, no)


def run_mc_study(cfg, workers=1):
    """Run the study cell and aggregate the usual summary metrics.

    ``workers`` > 1 fans replicates out to processes; results are keyed
    by replicate index, so the report does not depend on scheduling.
    """
    start = time.perf_counter()
    task = partial(_replicate, cfg)
    if workers is None or workers <= 1:
        results = [task(k) for k in range(cfg.K)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, cfg.K // (4 * workers))
            results = list(pool.map(task, range(cfg.K), chunksize=chunk))

    p = sum(cfg.theta_true.dims)
    estimates = np.full((cfg.K, p), np.nan)
    std_errors = np.full((cfg.K, p), np.nan)
    cover = np.zeros((cfg.K, p), dtype=bool)
    reject = np.zeros((cfg.K, p), dtype=bool)
    ok = np.zeros(cfg.K, dtype=bool)
    taus = np.full(cfg.K, -1, dtype=int)
    for k, good, selected, flat, se, cov_k, rej_k in results:
        ok[k] = good
        taus[k] = selected
        estimates[k] = flat
        std_errors[k] = se
        cover[k] = cov_k
        reject[k] = rej_k

    truth = cfg.theta_true.flatten()
    n_ok = int(ok.sum())
    if n_ok > 0:
        est_ok = estimates[ok]
        bias = est_ok.mean(axis=0) - truth
        se_emp = est_ok.std(axis=0, ddof=1) if n_ok > 1 else np.full(p, np.nan)
        mean_se = std_errors[ok].mean(axis=0)
        coverage = cover[ok].mean(axis=0)
        power = reject[ok].mean(axis=0)
    else:
        bias = np.full(p, np.nan)
        se_emp = np.full(p, np.nan)
        mean_se = np.full(p, np.nan)
        coverage = np.full(p, np.nan)
        power = np.full(p, np.nan)

    return McStudyReport(
        coef_names=cfg.theta_true.names(),
        total=cfg.K,
        converged=n_ok,
        estimates=estimates,
        std_errors=std_errors,
        bias=bias,
        se=se_emp,
        mean_se=mean_se,
        coverage=coverage,
        power=power,
        selected_taus=taus if cfg.select_tau else None,
        wall_time=time.perf_counter() - start,
    )
