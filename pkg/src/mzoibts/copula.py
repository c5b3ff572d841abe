"""Bivariate copula families and the mixed pairwise density.

Families and parameter ranges:

    gaussian  C(u1,u2) = Phi_rho(Phi^-1(u1), Phi^-1(u2)),   rho in [-1, 1]
    clayton   C(u1,u2) = max(0, u1^-rho + u2^-rho - 1)^(-1/rho),  rho >= -1, rho != 0
    gumbel    C(u1,u2) = exp(-[(-log u1)^rho + (-log u2)^rho]^(1/rho)),  rho >= 1
    frank     C(u1,u2) = -log(1 + expm1(-rho u1) expm1(-rho u2) / expm1(-rho)) / rho,
              rho != 0
    amh       C(u1,u2) = u1 u2 / (1 - rho (1-u1)(1-u2)),  rho in [-1, 1]

All families here are exchangeable, so the conditional CDF in either slot
is the same function; ``copula_h(fam, u1, u2)`` is P(U1 <= u1 | U2 = u2),
the partial derivative of C in its second argument.  Near-independence
parameter values switch to exact independence-limit expressions (|rho| <
1e-10 for gaussian, |rho| < 1e-6 for frank) to avoid catastrophic
cancellation.  Clayton's negative-rho range is supported for CDF and
rectangle evaluation only; its density path needs rho > 0.

``pairwise_log_density`` evaluates the log joint density of an adjacent
pair (Y_t, Y_{t-1}) whose margins are zero-one-inflated Beta laws linked
by the copula: atom pairs get rectangle probabilities, mixed pairs get
h-function differences times the interior marginal density, and interior
pairs get the copula density times both marginal densities.
"""

import dataclasses

import numpy as np
from scipy import special

from .exceptions import ConsistencyError, DomainError
from .numkit import bivariate_normal_cdf
from .zoib import ZoibParams, _cdf_arrays, beta_log_pdf

__all__ = [
    "FAMILY_KINDS",
    "CopulaFamily",
    "copula_cdf",
    "copula_log_density",
    "copula_h",
    "copula_h_inv",
    "rectangle_prob",
    "pairwise_log_density",
]

FAMILY_KINDS = ("gaussian", "clayton", "gumbel", "frank", "amh")

_GAUSS_INDEP = 1e-10
_FRANK_INDEP = 1e-6


@dataclasses.dataclass(frozen=True)
class CopulaFamily:
    """A copula family name plus its dependence parameter."""

    kind: str
    rho: float

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise DomainError(f"unknown copula family {self.kind!r}; "
                              f"expected one of {FAMILY_KINDS}")
        rho = float(self.rho)
        if np.isnan(rho):
            raise DomainError("rho must not be NaN")
        if self.kind in ("gaussian", "amh") and not -1.0 <= rho <= 1.0:
            raise DomainError(f"{self.kind} requires rho in [-1, 1], got {rho}")
        if self.kind == "clayton" and (rho < -1.0 or rho == 0.0):
            raise DomainError(f"clayton requires rho >= -1 and rho != 0, got {rho}")
        if self.kind == "gumbel" and rho < 1.0:
            raise DomainError(f"gumbel requires rho >= 1, got {rho}")
        if self.kind == "frank" and rho == 0.0:
            raise DomainError("frank requires rho != 0")
        object.__setattr__(self, "rho", rho)


def _check_unit(name, *arrays):
    for arr in arrays:
        if np.any(np.isnan(arr)) or np.any((arr < 0.0) | (arr > 1.0)):
            raise DomainError(f"{name} arguments must lie in [0, 1]")


def _check_open_unit(name, *arrays):
    for arr in arrays:
        if np.any(np.isnan(arr)) or np.any((arr <= 0.0) | (arr >= 1.0)):
            raise DomainError(f"{name} arguments must lie strictly inside (0, 1)")


def _require_density_rho(fam):
    if fam.kind == "clayton" and fam.rho < 0.0:
        raise DomainError("clayton density path requires rho > 0")
    if fam.kind == "gaussian" and abs(fam.rho) == 1.0:
        raise DomainError("gaussian density does not exist at |rho| = 1")


# ---------------------------------------------------------------------------
# CDFs


def _cdf_interior(fam, u1, u2):
    r = fam.rho
    if fam.kind == "gaussian":
        if abs(r) < _GAUSS_INDEP:
            return u1 * u2
        return bivariate_normal_cdf(special.ndtri(u1), special.ndtri(u2), r)
    if fam.kind == "clayton":
        s = u1 ** (-r) + u2 ** (-r) - 1.0
        out = np.where(s > 0.0, np.where(s > 0.0, s, 1.0) ** (-1.0 / r), 0.0)
        return out
    if fam.kind == "gumbel":
        a = (-np.log(u1)) ** r
        b = (-np.log(u2)) ** r
        return np.exp(-((a + b) ** (1.0 / r)))
    if fam.kind == "frank":
        if abs(r) < _FRANK_INDEP:
            return u1 * u2
        g1 = np.expm1(-r * u1)
        g2 = np.expm1(-r * u2)
        return -np.log1p(g1 * g2 / np.expm1(-r)) / r
    # amh
    return u1 * u2 / (1.0 - r * (1.0 - u1) * (1.0 - u2))


def copula_cdf(fam, u1, u2):
    """C(u1, u2) with exact boundary values on the closed unit square."""
    u1a, u2a = np.broadcast_arrays(np.asarray(u1, float), np.asarray(u2, float))
    _check_unit("copula_cdf", u1a, u2a)
    out = np.empty(u1a.shape)
    zero = (u1a == 0.0) | (u2a == 0.0)
    one1 = (u1a == 1.0) & ~zero
    one2 = (u2a == 1.0) & ~zero
    interior = ~(zero | one1 | one2)
    out[zero] = 0.0
    out[one1] = u2a[one1]
    out[one2] = u1a[one2]
    # corner (1,1) hits both masks; u2a there is 1 so either assignment is right
    if np.any(interior):
        with np.errstate(over="ignore"):
            out[interior] = _cdf_interior(fam, u1a[interior], u2a[interior])
    out = np.clip(out, 0.0, 1.0)
    if np.ndim(u1) == 0 and np.ndim(u2) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Log densities


def _log_density_interior(fam, u1, u2):
    r = fam.rho
    if fam.kind == "gaussian":
        if abs(r) < _GAUSS_INDEP:
            return np.zeros(u1.shape)
        x = special.ndtri(u1)
        y = special.ndtri(u2)
        det = 1.0 - r * r
        return -0.5 * np.log(det) - (r * r * (x * x + y * y) - 2.0 * r * x * y) / (2.0 * det)
    if fam.kind == "clayton":
        s = u1 ** (-r) + u2 ** (-r) - 1.0
        return (np.log1p(r) - (1.0 + r) * (np.log(u1) + np.log(u2))
                - (2.0 + 1.0 / r) * np.log(s))
    if fam.kind == "gumbel":
        lx = -np.log(u1)
        ly = -np.log(u2)
        s = lx ** r + ly ** r
        logc = -(s ** (1.0 / r))
        return (logc + (r - 1.0) * (np.log(lx) + np.log(ly))
                - np.log(u1) - np.log(u2)
                + (2.0 / r - 2.0) * np.log(s)
                + np.log1p((r - 1.0) * s ** (-1.0 / r)))
    if fam.kind == "frank":
        if abs(r) < _FRANK_INDEP:
            return np.zeros(u1.shape)
        d = np.expm1(-r)
        den = d + np.expm1(-r * u1) * np.expm1(-r * u2)
        # -r*d > 0 for every nonzero rho, so the log is safe
        return np.log(-r * d) - r * (u1 + u2) - 2.0 * np.log(np.abs(den))
    # amh
    dn = 1.0 - r * (1.0 - u1) * (1.0 - u2)
    num = (1.0 - r + 2.0 * r * u1) * dn - 2.0 * r * (1.0 - u2) * u1 * (1.0 - r * (1.0 - u1))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(num) - 3.0 * np.log(dn)


def copula_log_density(fam, u1, u2):
    """Log copula density at interior points of the unit square."""
    u1a, u2a = np.broadcast_arrays(np.asarray(u1, float), np.asarray(u2, float))
    _check_open_unit("copula_log_density", u1a, u2a)
    _require_density_rho(fam)
    with np.errstate(over="ignore", divide="ignore"):
        out = _log_density_interior(fam, u1a, u2a)
    if np.ndim(u1) == 0 and np.ndim(u2) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# h-functions (conditional CDFs) and their inverses


def _h_interior(fam, u1, u2):
    r = fam.rho
    if fam.kind == "gaussian":
        if abs(r) < _GAUSS_INDEP:
            return u1.copy()
        x = special.ndtri(u1)
        y = special.ndtri(u2)
        return special.ndtr((x - r * y) / np.sqrt(1.0 - r * r))
    if fam.kind == "clayton":
        s = u1 ** (-r) + u2 ** (-r) - 1.0
        return u2 ** (-r - 1.0) * s ** (-1.0 / r - 1.0)
    if fam.kind == "gumbel":
        lx = -np.log(u1)
        ly = -np.log(u2)
        s = lx ** r + ly ** r
        return np.exp(-(s ** (1.0 / r)) + (1.0 / r - 1.0) * np.log(s)
                      + (r - 1.0) * np.log(ly) - np.log(u2))
    if fam.kind == "frank":
        if abs(r) < _FRANK_INDEP:
            return u1.copy()
        g1 = np.expm1(-r * u1)
        g2 = np.expm1(-r * u2)
        return np.exp(-r * u2) * g1 / (np.expm1(-r) + g1 * g2)
    # amh
    dn = 1.0 - r * (1.0 - u1) * (1.0 - u2)
    return u1 * (1.0 - r * (1.0 - u1)) / (dn * dn)


def copula_h(fam, u1, u2):
    """Conditional CDF P(U1 <= u1 | U2 = u2).

    ``u1`` may touch the boundary (atoms produce 0 and 1 exactly);
    ``u2`` must be interior since it conditions on a density point.
    """
    u1a, u2a = np.broadcast_arrays(np.asarray(u1, float), np.asarray(u2, float))
    _check_unit("copula_h", u1a)
    _check_open_unit("copula_h", u2a)
    _require_density_rho(fam)
    if fam.kind == "gaussian" and abs(fam.rho) == 1.0:
        raise DomainError("gaussian h-function needs |rho| < 1")
    out = np.empty(u1a.shape)
    at0 = u1a == 0.0
    at1 = u1a == 1.0
    mid = ~(at0 | at1)
    out[at0] = 0.0
    out[at1] = 1.0
    if np.any(mid):
        with np.errstate(over="ignore", divide="ignore"):
            out[mid] = _h_interior(fam, u1a[mid], u2a[mid])
    out = np.clip(out, 0.0, 1.0)
    if np.ndim(u1) == 0 and np.ndim(u2) == 0:
        return float(out)
    return out


def _h_inv_closed(fam, p, u2):
    r = fam.rho
    if fam.kind == "gaussian":
        if abs(r) < _GAUSS_INDEP:
            return p.copy()
        return special.ndtr(r * special.ndtri(u2)
                            + np.sqrt(1.0 - r * r) * special.ndtri(p))
    if fam.kind == "clayton":
        return (1.0 + u2 ** (-r) * (p ** (-r / (1.0 + r)) - 1.0)) ** (-1.0 / r)
    # frank
    if abs(r) < _FRANK_INDEP:
        return p.copy()
    d = np.expm1(-r)
    g2 = np.expm1(-r * u2)
    g1 = p * d / (np.exp(-r * u2) - p * g2)
    return -np.log1p(g1) / r


def _h_inv_bisect(fam, p, u2):
    lo = np.zeros(p.shape)
    hi = np.ones(p.shape)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        val = _h_interior(fam, mid, u2)
        go_up = val < p
        lo = np.where(go_up, mid, lo)
        hi = np.where(go_up, hi, mid)
    return 0.5 * (lo + hi)


def copula_h_inv(fam, p, u2):
    """Inverse of ``copula_h`` in its first argument.

    Closed forms exist for gaussian, clayton, and frank; gumbel and amh
    bisect the monotone h-function to below 1e-12 interval width.
    """
    pa, u2a = np.broadcast_arrays(np.asarray(p, float), np.asarray(u2, float))
    _check_unit("copula_h_inv", pa)
    _check_open_unit("copula_h_inv", u2a)
    _require_density_rho(fam)
    if fam.kind == "gaussian" and abs(fam.rho) == 1.0:
        raise DomainError("gaussian h-function needs |rho| < 1")
    out = np.empty(pa.shape)
    at0 = pa == 0.0
    at1 = pa == 1.0
    mid = ~(at0 | at1)
    out[at0] = 0.0
    out[at1] = 1.0
    if np.any(mid):
        with np.errstate(over="ignore", divide="ignore"):
            if fam.kind in ("gaussian", "clayton", "frank"):
                out[mid] = _h_inv_closed(fam, pa[mid], u2a[mid])
            else:
                out[mid] = _h_inv_bisect(fam, pa[mid], u2a[mid])
    out = np.clip(out, 0.0, 1.0)
    if np.ndim(p) == 0 and np.ndim(u2) == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# Rectangles and the pairwise density


def rectangle_prob(fam, u1_lo, u1_hi, u2_lo, u2_hi):
    """P(u1_lo < U1 <= u1_hi, u2_lo < U2 <= u2_hi) by CDF inclusion-exclusion.

    Tiny negative values from roundoff are clamped to zero; anything below
    -1e-12 signals an inconsistent CDF and raises.
    """
    lo1, hi1, lo2, hi2 = np.broadcast_arrays(
        *(np.asarray(v, float) for v in (u1_lo, u1_hi, u2_lo, u2_hi))
    )
    _check_unit("rectangle_prob", lo1, hi1, lo2, hi2)
    if np.any(lo1 > hi1) or np.any(lo2 > hi2):
        raise DomainError("rectangle_prob requires lo <= hi on both axes")
    val = (copula_cdf(fam, hi1, hi2) - copula_cdf(fam, lo1, hi2)
           - copula_cdf(fam, hi1, lo2) + copula_cdf(fam, lo1, lo2))
    val = np.asarray(val)
    if np.any(val < -1e-12):
        raise ConsistencyError(
            f"rectangle probability {float(np.min(val)):.3e} below -1e-12 "
            f"for family {fam.kind} rho={fam.rho}"
        )
    val = np.clip(val, 0.0, 1.0)
    if all(np.ndim(v) == 0 for v in (u1_lo, u1_hi, u2_lo, u2_hi)):
        return float(val)
    return val


def _interior_log_pdf(y, params):
    cont = params.p1 * (1.0 - params.p2)
    if cont == 0.0:
        return np.full(np.shape(y), -np.inf)
    return np.log(cont) + beta_log_pdf(y, params.mu, params.phi)


def _log_nonneg(x):
    x = np.asarray(x, float)
    if np.any(x < -1e-12):
        raise ConsistencyError("negative probability mass in pairwise density")
    with np.errstate(divide="ignore"):
        return np.log(np.clip(x, 0.0, None))


def pairwise_log_density(fam, y_t, y_prev, params_t, params_prev):
    """Log joint density of an adjacent pair under the copula link.

    Parameters
    ----------
    fam : CopulaFamily
    y_t, y_prev : array_like
        Observed values in [0, 1]; broadcast against each other.
    params_t, params_prev : ZoibParams
        Marginal parameters at the two time points.

    Notes
    -----
    Writing u = F(y) and u- = F(y-), the four branches are

    * both atoms: log of the copula rectangle over (u-, u] x (u-, u]
    * y_t atom only: log[h(u_t, u_prev) - h(u_t-, u_prev)] + log f(y_prev)
    * y_prev atom only: log[h(u_prev, u_t) - h(u_prev-, u_t)] + log f(y_t)
    * both interior: log c(u_t, u_prev) + log f(y_t) + log f(y_prev)

    where exchangeability of every supported family lets the same
    h-function serve both mixed branches.
    """
    if not isinstance(params_t, ZoibParams):
        params_t = ZoibParams(*params_t)
    if not isinstance(params_prev, ZoibParams):
        params_prev = ZoibParams(*params_prev)
    yt, yp = np.broadcast_arrays(np.asarray(y_t, float), np.asarray(y_prev, float))
    _check_unit("pairwise_log_density", yt, yp)

    ut, ut_minus = _cdf_arrays(yt, params_t.p1, params_t.p2, params_t.mu, params_t.phi)
    up, up_minus = _cdf_arrays(yp, params_prev.p1, params_prev.p2,
                               params_prev.mu, params_prev.phi)
    atom_t = (yt == 0.0) | (yt == 1.0)
    atom_p = (yp == 0.0) | (yp == 1.0)

    out = np.empty(yt.shape)

    m = atom_t & atom_p
    if np.any(m):
        out[m] = _log_nonneg(rectangle_prob(fam, ut_minus[m], ut[m],
                                            up_minus[m], up[m]))
    m = atom_t & ~atom_p
    if np.any(m):
        diff = (copula_h(fam, ut[m], up[m]) - copula_h(fam, ut_minus[m], up[m]))
        out[m] = _log_nonneg(diff) + _interior_log_pdf(yp[m], params_prev)
    m = ~atom_t & atom_p
    if np.any(m):
        diff = (copula_h(fam, up[m], ut[m]) - copula_h(fam, up_minus[m], ut[m]))
        out[m] = _log_nonneg(diff) + _interior_log_pdf(yt[m], params_t)
    m = ~atom_t & ~atom_p
    if np.any(m):
        out[m] = (copula_log_density(fam, ut[m], up[m])
                  + _interior_log_pdf(yt[m], params_t)
                  + _interior_log_pdf(yp[m], params_prev))

    if np.ndim(y_t) == 0 and np.ndim(y_prev) == 0:
        return float(out)
    return out
