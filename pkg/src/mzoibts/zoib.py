"""Zero-one-inflated Beta distribution.

The outcome Y on [0, 1] mixes two point masses and a continuous part:

    P(Y = 0)      = 1 - p1
    P(Y = 1)      = p1 * p2
    Y | 0 < Y < 1 ~ Beta(mu * phi, (1 - mu) * phi), with total mass p1 * (1 - p2)

``mu`` is the conditional mean of the continuous part and ``phi`` its
precision, so the conditional variance is mu (1 - mu) / (1 + phi).  The
marginal mean is v = p1 ((1 - p2) mu + p2); ``mu_from_marginal`` inverts
that relation, which is what lets a regression model target v directly
while the distribution keeps its mixture form.

Densities are with respect to Lebesgue measure on (0, 1) plus counting
measure on {0, 1}.  Log densities return ``-inf`` where the distribution
puts no mass rather than raising.
"""

import dataclasses
from typing import NamedTuple

import numpy as np

from .exceptions import DomainError
from .numkit import log_gamma, reg_inc_beta, reg_inc_beta_inv

__all__ = [
    "ZoibParams",
    "CdfPair",
    "beta_log_pdf",
    "zoib_log_pdf",
    "zoib_cdf",
    "zoib_quantile",
    "zoib_mean_var",
    "mu_from_marginal",
    "zoib_sample",
]


@dataclasses.dataclass(frozen=True)
class ZoibParams:
    """Parameters of the zero-one-inflated Beta distribution.

    Attributes
    ----------
    p1 : float
        Probability that Y > 0, in [0, 1].
    p2 : float
        Conditional probability that Y = 1 given Y > 0, in [0, 1].
    mu : float
        Mean of the continuous Beta part, in (0, 1).
    phi : float
        Precision of the Beta part, > 0.
    """

    p1: float
    p2: float
    mu: float
    phi: float

    def __post_init__(self):
        if not 0.0 <= self.p1 <= 1.0:
            raise DomainError(f"p1 must lie in [0, 1], got {self.p1}")
        if not 0.0 <= self.p2 <= 1.0:
            raise DomainError(f"p2 must lie in [0, 1], got {self.p2}")
        if not 0.0 < self.mu < 1.0:
            raise DomainError(f"mu must lie in (0, 1), got {self.mu}")
        if not self.phi > 0.0:
            raise DomainError(f"phi must be positive, got {self.phi}")


class CdfPair(NamedTuple):
    """CDF value and its left limit at a point, F(y) and F(y-)."""

    u: float
    u_minus: float


def beta_log_pdf(y, mu, phi):
    """Log density of Beta(mu*phi, (1-mu)*phi) at interior points.

    Parameters
    ----------
    y : array_like
        Points strictly inside (0, 1).
    mu, phi : float
        Mean in (0, 1) and precision > 0.
    """
    if not 0.0 < mu < 1.0:
        raise DomainError("mu must lie in (0, 1)")
    if not phi > 0.0:
        raise DomainError("phi must be positive")
    ya = np.asarray(y, dtype=float)
    if np.any((ya <= 0.0) | (ya >= 1.0)):
        raise DomainError("beta_log_pdf is defined on the open interval (0, 1)")
    a = mu * phi
    b = (1.0 - mu) * phi
    out = (log_gamma(phi) - log_gamma(a) - log_gamma(b)
           + (a - 1.0) * np.log(ya) + (b - 1.0) * np.log1p(-ya))
    if np.ndim(y) == 0:
        return float(out)
    return out


def zoib_log_pdf(y, params):
    """Log density of the mixture at y in [0, 1].

    Atoms evaluate to ``log P(Y = y)``; interior points to the continuous
    log density.  Regions with zero mass give ``-inf``.
    """
    if not isinstance(params, ZoibParams):
        params = ZoibParams(*params)
    y = float(y)
    if not 0.0 <= y <= 1.0:
        raise DomainError("y must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        if y == 0.0:
            return float(np.log(1.0 - params.p1))
        if y == 1.0:
            return float(np.log(params.p1) + np.log(params.p2))
        cont_mass = params.p1 * (1.0 - params.p2)
        if cont_mass == 0.0:
            return -np.inf
        return float(np.log(cont_mass)) + beta_log_pdf(y, params.mu, params.phi)


def _cdf_arrays(y, p1, p2, mu, phi):
    """Vectorized (F(y), F(y-)) for per-observation parameter arrays."""
    y, p1, p2, mu, phi = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (y, p1, p2, mu, phi))
    )
    u = np.empty(y.shape)
    u_minus = np.empty(y.shape)
    at0 = y == 0.0
    at1 = y == 1.0
    mid = ~(at0 | at1)
    u[at0] = 1.0 - p1[at0]
    u_minus[at0] = 0.0
    u[at1] = 1.0
    u_minus[at1] = 1.0 - p1[at1] * p2[at1]
    if np.any(mid):
        ib = reg_inc_beta(y[mid], mu[mid] * phi[mid], (1.0 - mu[mid]) * phi[mid])
        val = (1.0 - p1[mid]) + p1[mid] * (1.0 - p2[mid]) * ib
        u[mid] = val
        u_minus[mid] = val
    return u, u_minus


def zoib_cdf(y, params):
    """CDF and left limit at y, as a :class:`CdfPair`.

    The pair (F(y), F(y-)) is what the copula layer needs: the jump
    F(y) - F(y-) is the atom mass at y and is zero at interior points.
    """
    if not isinstance(params, ZoibParams):
        params = ZoibParams(*params)
    y = float(y)
    if not 0.0 <= y <= 1.0:
        raise DomainError("y must lie in [0, 1]")
    u, u_minus = _cdf_arrays(y, params.p1, params.p2, params.mu, params.phi)
    return CdfPair(float(u), float(u_minus))


def _quantile_arrays(u, p1, p2, mu, phi):
    """Vectorized generalized inverse of the CDF."""
    u, p1, p2, mu, phi = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (u, p1, p2, mu, phi))
    )
    zero_cut = 1.0 - p1
    one_cut = 1.0 - p1 * p2
    y = np.zeros(u.shape)
    y[u > one_cut] = 1.0
    mid = (u > zero_cut) & (u <= one_cut)
    if np.any(mid):
        cont = p1[mid] * (1.0 - p2[mid])
        q = (u[mid] - zero_cut[mid]) / cont
        y[mid] = reg_inc_beta_inv(
            np.clip(q, 0.0, 1.0), mu[mid] * phi[mid], (1.0 - mu[mid]) * phi[mid]
        )
    return y


def zoib_quantile(u, params):
    """Generalized inverse CDF at u in [0, 1].

    Returns 0 on the zero-atom block u <= 1 - p1, 1 above 1 - p1*p2, and
    the Beta quantile of the rescaled u in between.
    """
    if not isinstance(params, ZoibParams):
        params = ZoibParams(*params)
    u = float(u)
    if not 0.0 <= u <= 1.0:
        raise DomainError("u must lie in [0, 1]")
    return float(_quantile_arrays(u, params.p1, params.p2, params.mu, params.phi))


def zoib_mean_var(params, positive_cross_term=False):
    """Mean and variance of the mixture.

    The variance uses the law-of-total-variance grouping

        p1 (1-p2) [ mu(1-mu)/(1+phi) + (1 - p1(1-p2)) mu^2 - 2 p1 p2 mu ]
        + p1 p2 (1 - p1 p2).

    ``positive_cross_term=True`` flips the cross term to +2 p1 p2 mu.
    That variant is kept only for comparison; Monte Carlo moments match
    the default grouping and reject the positive-sign one whenever both
    atoms carry mass.
    """
    if not isinstance(params, ZoibParams):
        params = ZoibParams(*params)
    p1, p2, mu, phi = params.p1, params.p2, params.mu, params.phi
    mean = p1 * ((1.0 - p2) * mu + p2)
    sign = 1.0 if positive_cross_term else -1.0
    var = (p1 * (1.0 - p2)
           * (mu * (1.0 - mu) / (1.0 + phi)
              + (1.0 - p1 * (1.0 - p2)) * mu * mu
              + sign * 2.0 * p1 * p2 * mu)
           + p1 * p2 * (1.0 - p1 * p2))
    return mean, var


def mu_from_marginal(v, p1, p2):
    """Recover the Beta mean mu from the marginal mean v = p1((1-p2)mu + p2).

    The returned value is not guaranteed to lie in (0, 1); callers that
    build mu from regression output must check feasibility themselves.
    """
    v = float(v)
    p1 = float(p1)
    p2 = float(p2)
    if not 0.0 < v < 1.0:
        raise DomainError("v must lie in (0, 1)")
    if not 0.0 < p1 <= 1.0:
        raise DomainError("p1 must lie in (0, 1]")
    if not 0.0 <= p2 < 1.0:
        raise DomainError("p2 must lie in [0, 1)")
    return (v / p1 - p2) / (1.0 - p2)


def zoib_sample(params, rng, size=None):
    """Draw from the mixture by inverse transform.

    Parameters
    ----------
    params : ZoibParams
    rng : RngStream
        Source of uniforms; consumed in a single block so the draw count
        is ``size`` (or 1) regardless of parameter values.
    size : int, optional
        None returns a float, otherwise an array of that length.
    """
    if not isinstance(params, ZoibParams):
        params = ZoibParams(*params)
    u = rng.uniform(size=size)
    if size is None:
        return zoib_quantile(u, params)
    return _quantile_arrays(u, params.p1, params.p2, params.mu, params.phi)
