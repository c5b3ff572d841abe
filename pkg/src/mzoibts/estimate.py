"""Two-stage composite-likelihood estimation.

Stage 1 maximizes the independence composite log-likelihood, the sum of
marginal zero-one-inflated Beta log densities with the marginal mean
linked through the designs.  Writing eta for the linear predictors and
splitting the data into zeros, ones, and interior points, the objective
is

    sum_t -log(1 + e^{eta1})
    + sum_{y>0} [eta1 - log(1 + e^{eta2})]
    + sum_{y=1} eta2
    + sum_{0<y<1} [ log G(phi) - log G(mu phi) - log G((1-mu) phi)
                    + phi log(1-y) - log(y(1-y)) + mu phi logit(y) ]

with G the gamma function and mu the recovered Beta mean.  Any interior
observation whose recovered mu leaves (0, 1) makes the objective -inf,
which the optimizer treats as a rejected step.  The analytic score uses
the chain rule through the closed-form mu; a finite-difference gate in
the tests pins it against the objective.

Stage 2 holds the stage-1 estimate fixed, maps observations to CDF
values, and maximizes the pairwise pseudo-log-likelihood over the copula
parameter alone by bounded one-dimensional search.  Its interior-pair
terms use the copula density only; the marginal densities are constant
in rho, so including them (``include_marginals=True``) shifts the
objective without moving the argmax.
"""

import dataclasses

import numpy as np
from scipy import optimize
from scipy.special import expit, gammaln, psi

from .copula import CopulaFamily, copula_h, copula_log_density, rectangle_prob
from .exceptions import DomainError, NumericalError
from .model import Theta, per_time_params
from .numkit import maximize
from .zoib import _cdf_arrays

__all__ = [
    "StageOneFit",
    "StageTwoFit",
    "RHO_SEARCH_BOUNDS",
    "validate_series",
    "composite_loglik",
    "composite_score",
    "score_contributions",
    "initial_theta",
    "fit_stage1",
    "stage2_objective",
    "fit_stage2_copula",
]

# Bounded search brackets for the stage-2 profile; clayton is restricted
# to positive dependence because its density path degenerates below zero.
RHO_SEARCH_BOUNDS = {
    "gaussian": (-0.999, 0.999),
    "amh": (-0.999, 0.999),
    "frank": (-50.0, 50.0),
    "gumbel": (1.0, 50.0),
    "clayton": (1e-4, 50.0),
}


def validate_series(y, n=None):
    """Check an outcome series and return it as a float array.

    Reports the first offending 1-based row on failure, which the
    command line surfaces directly.
    """
    arr = np.asarray(y, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError("y must be a nonempty 1-D series")
    bad = ~np.isfinite(arr) | (arr < 0.0) | (arr > 1.0)
    if np.any(bad):
        row = int(np.argmax(bad)) + 1
        raise DomainError(
            f"y value {arr[row - 1]!r} at row {row} is outside [0, 1]"
        )
    if n is not None and arr.size != n:
        raise DomainError(f"series has {arr.size} rows; design expects {n}")
    return arr


class _Workspace:
    """Precomputed, theta-independent pieces of the likelihood."""

    def __init__(self, designs, y):
        y = validate_series(y, designs.n)
        self.designs = designs
        self.y = y
        self.pos = y > 0.0
        self.one = y == 1.0
        self.mid = self.pos & ~self.one
        ym = y[self.mid]
        self.log1m_y = np.log1p(-ym)
        self.logit_y = np.log(ym) - self.log1m_y
        self.log_y_1my_sum = float(np.sum(np.log(ym) + self.log1m_y))
        self.x1 = designs.x1
        self.x2 = designs.x2
        self.x3 = designs.x3
        self.x4 = designs.x4
        self.dims = designs.dims

    def split(self, flat):
        k1, k2, k3, _ = self.dims
        return (flat[:k1], flat[k1:k1 + k2],
                flat[k1 + k2:k1 + k2 + k3], flat[k1 + k2 + k3:])

    def predictors(self, flat):
        b1, b2, b3, b4 = self.split(flat)
        return self.x1 @ b1, self.x2 @ b2, self.x3 @ b3, self.x4 @ b4

    def params(self, flat):
        e1, e2, e3, e4 = self.predictors(flat)
        with np.errstate(over="ignore", invalid="ignore"):
            mu = (1.0 + np.exp(e2)) * (1.0 + np.exp(-e1)) / (1.0 + np.exp(-e3)) - np.exp(e2)
            phi = np.exp(e4)
        return e1, e2, e3, e4, mu, phi

    def feasible(self, mu, phi):
        m = mu[self.mid]
        f = phi[self.mid]
        return (np.all(np.isfinite(m)) and np.all(m > 0.0) and np.all(m < 1.0)
                and np.all(np.isfinite(f)) and np.all(f > 0.0))

    def loglik(self, flat):
        e1, e2, _, _, mu, phi = self.params(flat)
        if not self.feasible(mu, phi):
            return -np.inf
        out = -np.logaddexp(0.0, e1).sum()
        out += (e1[self.pos] - np.logaddexp(0.0, e2[self.pos])).sum()
        out += e2[self.one].sum()
        m = mu[self.mid]
        f = phi[self.mid]
        a = m * f
        out += float(
            np.sum(gammaln(f) - gammaln(a) - gammaln(f - a)
                   + f * self.log1m_y + a * self.logit_y)
            - self.log_y_1my_sum
        )
        if not np.isfinite(out):
            return -np.inf
        return float(out)

    def _score_pieces(self, flat):
        e1, e2, e3, _, mu, phi = self.params(flat)
        if not self.feasible(mu, phi):
            raise NumericalError("score is undefined at an infeasible theta")
        n = self.y.size
        p1 = expit(e1)
        p2 = expit(e2)
        pos = self.pos.astype(float)
        one = self.one.astype(float)
        c1 = pos - p1
        c2 = one - pos * p2
        c3 = np.zeros(n)
        c4 = np.zeros(n)
        mid = self.mid
        if np.any(mid):
            m = mu[mid]
            f = phi[mid]
            a = m * f
            b = f - a
            exp_e2 = np.exp(e2[mid])
            exp_me1 = np.exp(-e1[mid])
            exp_me3 = np.exp(-e3[mid])
            denom3 = 1.0 + exp_me3
            dmu1 = -(1.0 + exp_e2) * exp_me1 / denom3
            dmu2 = exp_e2 * (1.0 + exp_me1) / denom3 - exp_e2
            dmu3 = (1.0 + exp_e2) * (1.0 + exp_me1) * exp_me3 / (denom3 * denom3)
            dstar = f * (self.logit_y - psi(a) + psi(b))
            c1[mid] += dmu1 * dstar
            c2[mid] += dmu2 * dstar
            c3[mid] = dmu3 * dstar
            c4[mid] = f * (psi(f) - m * psi(a) - (1.0 - m) * psi(b)
                           + m * self.logit_y + self.log1m_y)
        return c1, c2, c3, c4

    def score(self, flat):
        c1, c2, c3, c4 = self._score_pieces(flat)
        return np.concatenate([self.x1.T @ c1, self.x2.T @ c2,
                               self.x3.T @ c3, self.x4.T @ c4])

    def contributions(self, flat):
        c1, c2, c3, c4 = self._score_pieces(flat)
        return np.hstack([self.x1 * c1[:, None], self.x2 * c2[:, None],
                          self.x3 * c3[:, None], self.x4 * c4[:, None]])


def composite_loglik(theta, designs, y):
    """Independence composite log-likelihood; -inf when infeasible."""
    if not isinstance(theta, Theta):
        raise DomainError("theta must be a Theta instance")
    if theta.dims != designs.dims:
        raise DomainError(
            f"coefficient blocks {theta.dims} do not match designs {designs.dims}"
        )
    return _Workspace(designs, y).loglik(theta.flatten())


def composite_score(theta, designs, y):
    """Analytic score (gradient of the composite log-likelihood)."""
    if theta.dims != designs.dims:
        raise DomainError(
            f"coefficient blocks {theta.dims} do not match designs {designs.dims}"
        )
    return _Workspace(designs, y).score(theta.flatten())


def score_contributions(theta, designs, y):
    """Per-observation score rows u_t(theta), shape (n, p).

    Rows sum to ``composite_score``; the sandwich covariance builds its
    middle matrix from these.
    """
    if theta.dims != designs.dims:
        raise DomainError(
            f"coefficient blocks {theta.dims} do not match designs {designs.dims}"
        )
    return _Workspace(designs, y).contributions(theta.flatten())


def _empirical_logit(count, total):
    if total <= 0:
        return 0.0
    if count == 0 or count == total:
        frac = (count + 0.5) / (total + 1.0)
    else:
        frac = count / total
    return float(np.log(frac / (1.0 - frac)))


def initial_theta(designs, y):
    """Data-driven starting values.

    Inflation intercepts come from empirical logits with a half-count
    correction at the boundaries, the mean block from least squares of
    clamped-logit outcomes on the mean design, and the dispersion
    intercept from Beta method-of-moments on the interior points.  If the
    assembled point is infeasible the mean block is collapsed toward a
    center that is feasible by construction.
    """
    y = validate_series(y, designs.n)
    k1, k2, k3, k4 = designs.dims
    n = y.size
    n_pos = int(np.sum(y > 0.0))
    n_one = int(np.sum(y == 1.0))
    beta1 = np.zeros(k1)
    beta1[0] = _empirical_logit(n_pos, n)
    beta2 = np.zeros(k2)
    beta2[0] = _empirical_logit(n_one, n_pos)

    z = np.log(np.clip(y, 0.005, 0.995)) - np.log1p(-np.clip(y, 0.005, 0.995))
    beta3, *_ = np.linalg.lstsq(designs.x3, z, rcond=None)

    mid = (y > 0.0) & (y < 1.0)
    beta4 = np.zeros(k4)
    if int(mid.sum()) >= 2:
        m = float(np.mean(y[mid]))
        s2 = float(np.var(y[mid], ddof=1))
        phi_mm = m * (1.0 - m) / s2 - 1.0 if s2 > 0 else 1.0
        if not np.isfinite(phi_mm) or phi_mm <= 0.1:
            phi_mm = 1.0
        beta4[0] = float(np.log(phi_mm))

    candidate = Theta(beta1=beta1, beta2=beta2, beta3=beta3, beta4=beta4)
    ws = _Workspace(designs, y)
    if np.isfinite(ws.loglik(candidate.flatten())):
        return candidate

    # fall back to an intercept-only mean block
    if int(mid.sum()) > 0:
        center = float(np.clip(np.mean(y[mid]), 0.05, 0.95))
    else:
        center = 0.5
    beta3_flat = np.zeros(k3)
    beta3_flat[0] = float(np.log(center / (1.0 - center)))
    candidate = Theta(beta1=beta1, beta2=beta2, beta3=beta3_flat, beta4=beta4)
    if np.isfinite(ws.loglik(candidate.flatten())):
        return candidate

    # final resort: a marginal mean that makes mu = 1/2 exactly
    p1 = expit(beta1[0])
    p2 = expit(beta2[0])
    v = p1 * ((1.0 - p2) * 0.5 + p2)
    beta3_safe = np.zeros(k3)
    beta3_safe[0] = float(np.log(v / (1.0 - v)))
    return Theta(beta1=beta1, beta2=beta2, beta3=beta3_safe, beta4=beta4)


@dataclasses.dataclass
class StageOneFit:
    """Stage-1 estimate with optimizer diagnostics."""

    theta: Theta
    loglik: float
    score_norm: float
    iterations: int
    converged: bool


def _column_scales(ws):
    cols = np.hstack([ws.x1, ws.x2, ws.x3, ws.x4])
    s = np.sqrt(np.mean(cols * cols, axis=0))
    s[s == 0.0] = 1.0
    return s


def fit_stage1(designs, y, theta0=None, tol=1e-4, max_iter=500):
    """Maximize the composite log-likelihood over all coefficient blocks.

    The search runs on coefficients rescaled by the root-mean-square of
    their design columns, which keeps the optimizer stable when a design
    carries raw time indices; results are reported in original units.
    ``tol`` bounds the sup-norm of the rescaled gradient, a level chosen
    to sit above the double-precision noise floor of the objective while
    staying far below any statistically meaningful displacement.
    ``score_norm`` is the sup-norm of the unscaled score at the optimum.
    """
    ws = _Workspace(designs, y)
    if theta0 is None:
        theta0 = initial_theta(designs, y)
    elif theta0.dims != designs.dims:
        raise DomainError("theta0 does not match the design dimensions")

    scales = _column_scales(ws)
    res = maximize(lambda b: ws.loglik(b / scales),
                   theta0.flatten() * scales,
                   grad=lambda b: ws.score(b / scales) / scales,
                   tol=tol, max_iter=max_iter)
    flat_hat = res.x / scales
    try:
        raw_norm = float(np.max(np.abs(ws.score(flat_hat))))
    except NumericalError:
        raw_norm = np.inf
    return StageOneFit(
        theta=Theta.from_flat(flat_hat, designs.dims),
        loglik=res.value,
        score_norm=raw_norm,
        iterations=res.iterations,
        converged=res.converged,
    )


@dataclasses.dataclass
class StageTwoFit:
    """Fitted copula family with the maximized pairwise pseudo-likelihood."""

    family: CopulaFamily
    loglik: float
    converged: bool


def stage2_objective(kind, theta, designs, y, include_marginals=False):
    """Build the pairwise pseudo-log-likelihood as a function of rho.

    Observations enter only through their CDF values under the stage-1
    fit, computed once here.  The returned callable evaluates the sum of
    the four pair-type branches at a given rho; impossible configurations
    produce a large negative value rather than -inf so that bounded
    scalar searches stay well behaved.
    """
    if kind not in RHO_SEARCH_BOUNDS:
        raise DomainError(f"unknown copula family {kind!r}")
    y = validate_series(y, designs.n)
    params = per_time_params(theta, designs)
    mid_mask = (y > 0.0) & (y < 1.0)
    if not np.all(params.feasible[mid_mask]):
        raise NumericalError(
            "stage-2 requires a Beta mean inside (0, 1) at every interior observation"
        )
    u, u_minus = _cdf_arrays(y, params.p1, params.p2, params.mu, params.phi)
    atom = (y == 0.0) | (y == 1.0)

    # lagged pairs (t, t-1)
    ut, ut_m, at_t = u[1:], u_minus[1:], atom[1:]
    up, up_m, at_p = u[:-1], u_minus[:-1], atom[:-1]

    both_atom = at_t & at_p
    t_atom = at_t & ~at_p
    p_atom = ~at_t & at_p
    interior = ~at_t & ~at_p

    marginal_const = 0.0
    if include_marginals:
        mid = (y > 0.0) & (y < 1.0)
        m = params.mu[mid]
        f = params.phi[mid]
        a = m * f
        ym = y[mid]
        log_c_mass = np.log(params.p1[mid] * (1.0 - params.p2[mid]))
        dens = (log_c_mass + gammaln(f) - gammaln(a) - gammaln(f - a)
                + (a - 1.0) * np.log(ym) + (f - a - 1.0) * np.log1p(-ym))
        # each interior margin appears once per pair it belongs to
        weight = np.zeros(y.size)
        weight[1:] += ~at_t
        weight[:-1] += ~at_p
        marginal_const = float(np.sum(weight[mid] * dens))

    tiny = 1e-300

    def objective(rho):
        if rho == 0.0:
            rho = 1e-12 if kind == "frank" else rho
        try:
            fam = CopulaFamily(kind, rho)
        except DomainError:
            return -1e308
        total = 0.0
        with np.errstate(divide="ignore"):
            if np.any(both_atom):
                rect = rectangle_prob(fam, ut_m[both_atom], ut[both_atom],
                                      up_m[both_atom], up[both_atom])
                total += float(np.sum(np.log(np.maximum(rect, tiny))))
            if np.any(t_atom):
                diff = (copula_h(fam, ut[t_atom], up[t_atom])
                        - copula_h(fam, ut_m[t_atom], up[t_atom]))
                total += float(np.sum(np.log(np.maximum(diff, tiny))))
            if np.any(p_atom):
                diff = (copula_h(fam, up[p_atom], ut[p_atom])
                        - copula_h(fam, up_m[p_atom], ut[p_atom]))
                total += float(np.sum(np.log(np.maximum(diff, tiny))))
            if np.any(interior):
                total += float(np.sum(copula_log_density(
                    fam, ut[interior], up[interior])))
        if not np.isfinite(total):
            return -1e308
        return total + marginal_const

    return objective


def fit_stage2_copula(kind, theta, designs, y, include_marginals=False):
    """Profile the pairwise pseudo-likelihood over the copula parameter."""
    objective = stage2_objective(kind, theta, designs, y,
                                 include_marginals=include_marginals)
    lo, hi = RHO_SEARCH_BOUNDS[kind]
    res = optimize.minimize_scalar(
        lambda r: -objective(float(r)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-7, "maxiter": 200},
    )
    rho_hat = float(res.x)
    if kind == "frank" and rho_hat == 0.0:
        rho_hat = 1e-12
    return StageTwoFit(
        family=CopulaFamily(kind, rho_hat),
        loglik=float(-res.fun),
        converged=bool(res.success),
    )
