"""Sandwich and bootstrap covariances, Wald tests, and changepoint scoring.

The sandwich covariance treats the stage-1 estimator as the root of the
composite score: with H the negative mean Hessian and J the
Bartlett-weighted long-run variance of the per-observation scores, the
covariance of the estimate is (1/n) H^{-1} J H^{-1}.  The parametric
bootstrap instead refits simulated trajectories at the fitted model and
reports the sampling spread of the refits.  Both routes produce a
:class:`CovarianceEstimate` so downstream tests and intervals do not
care which one was used.

Changepoint scoring refits the model at each candidate index and ranks
candidates by a composite information criterion,

    -loglik + log(n) * trace(J^{-1} H),

whose penalty replaces the parameter count with an effective dimension;
the trace is unchanged by the per-observation normalization because it
appears in both factors.  A conventional factor-two variant is available
behind a flag.
"""

import dataclasses
import warnings

import numpy as np
from scipy.stats import chi2

from .estimate import fit_stage1, score_contributions
from .exceptions import (
    ConfigError,
    DegenerateTestError,
    MzoibtsError,
    NumericalError,
    RankDeficiencyError,
    SelectionError,
)
from .model import Theta, its_design
from .numkit import normal_quantile

__all__ = [
    "HacConfig",
    "CovarianceEstimate",
    "WaldTest",
    "ChangePointSelection",
    "hac_covariance",
    "bootstrap_se",
    "wald_test",
    "its_wald_tests",
    "confidence_intervals",
    "select_changepoint",
]


@dataclasses.dataclass(frozen=True)
class HacConfig:
    """Long-run variance settings.

    ``max_lag`` is the Bartlett truncation lag L, or ``"auto"`` for the
    bandwidth rule floor(4 (n/100)^{2/9}).
    """

    max_lag: int | str = "auto"

    def __post_init__(self):
        if self.max_lag == "auto":
            return
        if int(self.max_lag) != self.max_lag or self.max_lag < 0:
            raise ConfigError(
                f"max_lag must be a nonnegative integer or 'auto', got {self.max_lag!r}"
            )
        object.__setattr__(self, "max_lag", int(self.max_lag))

    def resolve(self, n):
        if self.max_lag == "auto":
            return int(np.floor(4.0 * (n / 100.0) ** (2.0 / 9.0)))
        return self.max_lag


@dataclasses.dataclass(frozen=True)
class CovarianceEstimate:
    """Covariance of the stage-1 estimate with its ingredients.

    ``H_hat`` and ``J_hat`` are the per-observation sensitivity and
    variability matrices (absent for the bootstrap route); ``G_inv`` is
    the covariance of the estimate itself.
    """

    G_inv: np.ndarray
    method: str
    H_hat: np.ndarray | None = None
    J_hat: np.ndarray | None = None

    @property
    def std_errors(self):
        return np.sqrt(np.clip(np.diag(self.G_inv), 0.0, None))


def bartlett_weights(max_lag):
    """Kernel weights w_0..w_{L}, linearly decaying to zero at L+1."""
    lags = np.arange(max_lag + 1, dtype=float)
    return np.maximum(0.0, 1.0 - lags / (max_lag + 1.0))


def _score_hessian(theta, designs, y, step=1e-5):
    """Central finite differences of the analytic score, symmetrized."""
    flat = theta.flatten()
    p = flat.size
    hess = np.empty((p, p))
    for j in range(p):
        e = np.zeros(p)
        e[j] = step
        gp = score_contributions(Theta.from_flat(flat + e, theta.dims), designs, y).sum(axis=0)
        gm = score_contributions(Theta.from_flat(flat - e, theta.dims), designs, y).sum(axis=0)
        hess[:, j] = (gp - gm) / (2.0 * step)
    return 0.5 * (hess + hess.T)


def _invert_sensitivity(h, names):
    lam, vec = np.linalg.eigh(h)
    lam_max = float(np.max(np.abs(lam)))
    bad = lam <= 1e-10 * max(lam_max, 1e-300)
    if np.any(bad):
        directions = sorted({names[int(np.argmax(np.abs(vec[:, j])))]
                             for j in np.nonzero(bad)[0]})
        raise RankDeficiencyError(
            "sensitivity matrix is singular or indefinite along: "
            + ", ".join(directions)
        )
    return (vec / lam) @ vec.T


def hac_covariance(fit, designs, y, cfg=None):
    """Sandwich covariance with a Bartlett-kernel long-run variance.

    ``fit`` is a converged stage-1 result; the per-observation scores at
    its estimate drive J, and a finite-difference Hessian of the
    analytic score drives H.
    """
    if not fit.converged:
        raise NumericalError("sandwich covariance requires a converged stage-1 fit")
    cfg = HacConfig() if cfg is None else cfg
    u = score_contributions(fit.theta, designs, y)
    n = u.shape[0]
    max_lag = cfg.resolve(n)
    w = bartlett_weights(max_lag)
    j_total = u.T @ u
    for lag in range(1, min(max_lag, n - 1) + 1):
        gamma = u[lag:].T @ u[:-lag]
        j_total += w[lag] * (gamma + gamma.T)
    j_hat = j_total / n
    h_hat = -_score_hessian(fit.theta, designs, y) / n
    h_inv = _invert_sensitivity(h_hat, fit.theta.names())
    g_inv = h_inv @ j_hat @ h_inv / n
    g_inv = 0.5 * (g_inv + g_inv.T)
    return CovarianceEstimate(G_inv=g_inv, method="hac", H_hat=h_hat, J_hat=j_hat)


def bootstrap_se(fit1, fit2, designs, R=500, rng=None):
    """Parametric-bootstrap covariance at the two-stage fit.

    Simulates ``R`` trajectories at the fitted coefficients and copula,
    refits stage 1 on each, and reports the sample covariance of the
    refitted coefficients over the converged replicates.  More than 10%
    failed replicates warns; more than half is an error.
    """
    from .simulate import markov_series

    if R < 2:
        raise ConfigError(f"bootstrap needs R >= 2 replicates, got {R}")
    if rng is None:
        raise ConfigError("bootstrap requires an RngStream for reproducibility")
    estimates = []
    failures = 0
    for b in range(R):
        sub = rng.substream(1000 + b)
        try:
            y_b = markov_series(fit1.theta, designs, fit2.family, sub)
            refit = fit_stage1(designs, y_b)
        except MzoibtsError:
            failures += 1
            continue
        if refit.converged:
            estimates.append(refit.theta.flatten())
        else:
            failures += 1
    if failures > 0.5 * R:
        raise NumericalError(
            f"bootstrap failed: {failures} of {R} replicates did not converge"
        )
    if failures > 0.1 * R:
        warnings.warn(
            f"bootstrap dropped {failures} of {R} replicates that did not converge",
            RuntimeWarning,
            stacklevel=2,
        )
    mat = np.asarray(estimates)
    g_inv = np.atleast_2d(np.cov(mat, rowvar=False, ddof=1))
    return CovarianceEstimate(G_inv=g_inv, method="bootstrap")


@dataclasses.dataclass(frozen=True)
class WaldTest:
    """Quadratic-form test of A theta = 0."""

    constraint: np.ndarray
    statistic: float
    df: int
    p_value: float
    alpha: float
    reject: bool


def _coefficient_vector(theta_hat):
    if isinstance(theta_hat, Theta):
        return theta_hat.flatten()
    return np.asarray(theta_hat, dtype=float)


def _covariance_matrix(cov):
    if isinstance(cov, CovarianceEstimate):
        return cov.G_inv
    return np.asarray(cov, dtype=float)


def wald_test(theta_hat, cov, a, alpha=0.05):
    """Test the linear constraint ``a @ theta = 0``.

    ``a`` may be a single row; the statistic is compared against a
    chi-square with rank(a) degrees of freedom.
    """
    flat = _coefficient_vector(theta_hat)
    v = _covariance_matrix(cov)
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape[1] != flat.size:
        raise DegenerateTestError(
            f"constraint has {a.shape[1]} columns for {flat.size} coefficients"
        )
    q = int(np.linalg.matrix_rank(a))
    if q < a.shape[0] or q < 1:
        raise DegenerateTestError("constraint rows are linearly dependent or empty")
    m = a @ v @ a.T
    lam = np.linalg.eigvalsh(m)
    if lam[0] <= 1e-12 * max(float(lam[-1]), 1e-300):
        raise DegenerateTestError(
            "constraint covariance a V a' is singular; the test is degenerate"
        )
    d = a @ flat
    stat = float(max(d @ np.linalg.solve(m, d), 0.0))
    p = float(chi2.sf(stat, q))
    return WaldTest(constraint=a, statistic=stat, df=q, p_value=p,
                    alpha=float(alpha), reject=bool(p < alpha))


def its_wald_tests(theta_hat, cov, dims, alpha=0.05):
    """The three intervention hypotheses on the mean block.

    Tests the post-intervention level shift, the slope change, and both
    jointly; ``dims`` locates the mean block inside the flat vector.
    """
    k1, k2, k3, _ = dims
    if k3 < 4:
        raise DegenerateTestError(
            "intervention tests need the mean design [1, T, level, slope]"
        )
    p = sum(dims)
    level = np.zeros((1, p))
    level[0, k1 + k2 + 2] = 1.0
    trend = np.zeros((1, p))
    trend[0, k1 + k2 + 3] = 1.0
    joint = np.vstack([level, trend])
    return {
        "level": wald_test(theta_hat, cov, level, alpha),
        "trend": wald_test(theta_hat, cov, trend, alpha),
        "joint": wald_test(theta_hat, cov, joint, alpha),
    }


def confidence_intervals(theta_hat, se, alpha=0.05):
    """Normal-approximation intervals, one row (lower, upper) per entry."""
    flat = _coefficient_vector(theta_hat)
    se = np.asarray(se, dtype=float)
    if se.shape != flat.shape:
        raise ConfigError("standard errors must align with the coefficients")
    if np.any(se < 0.0) or not np.all(np.isfinite(se)):
        raise ConfigError("standard errors must be finite and nonnegative")
    if np.any(se == 0.0):
        warnings.warn("zero standard error gives a degenerate point interval",
                      RuntimeWarning, stacklevel=2)
    z = normal_quantile(1.0 - alpha / 2.0)
    return np.column_stack([flat - z * se, flat + z * se])


@dataclasses.dataclass(frozen=True)
class ChangePointSelection:
    """Criterion values per candidate and the minimizing index."""

    candidates: tuple
    cbic_values: np.ndarray
    selected_tau: int


def composite_bic(fit, designs, y, hac_cfg=None, factor_two=False):
    """Information criterion for one fitted changepoint candidate."""
    cov = hac_covariance(fit, designs, y, hac_cfg)
    trace = float(np.trace(np.linalg.solve(cov.J_hat, cov.H_hat)))
    n = designs.n
    if factor_two:
        return -2.0 * fit.loglik + 2.0 * np.log(n) * trace
    return -fit.loglik + np.log(n) * trace


def select_changepoint(model_template, y, candidates, hac_cfg=None,
                       factor_two=False):
    """Score each candidate changepoint and pick the criterion minimum.

    Each candidate rebuilds the design, refits stage 1, and evaluates
    the criterion; candidates whose fit or criterion fails are recorded
    as +inf.  Ties break toward the smallest candidate index, so the
    result does not depend on the ordering of ``candidates``.
    """
    candidates = tuple(int(c) for c in candidates)
    if len(candidates) == 0:
        raise SelectionError("no changepoint candidates supplied")
    values = np.full(len(candidates), np.inf)
    for i, tau in enumerate(candidates):
        cfg = model_template.with_tau(tau)
        designs = its_design(cfg)
        try:
            fit = fit_stage1(designs, y)
            if not fit.converged:
                continue
            value = composite_bic(fit, designs, y, hac_cfg, factor_two)
        except MzoibtsError:
            continue
        if np.isfinite(value):
            values[i] = value
    if not np.any(np.isfinite(values)):
        raise SelectionError(
            f"no changepoint candidate among {candidates} produced a usable fit"
        )
    order = sorted(range(len(candidates)), key=lambda i: (values[i], candidates[i]))
    return ChangePointSelection(candidates=candidates, cbic_values=values,
                                selected_tau=candidates[order[0]])
