"""Numerical kernels: special functions, quantiles, a maximizer, seeded streams.

Special-function wrappers delegate to scipy.special and add the domain
checks the rest of the package relies on.  The bivariate normal CDF is a
vectorized port of the Drezner-Wesolowsky / Genz single-integral scheme
with fixed-order Gauss-Legendre nodes.  ``maximize`` is a dense BFGS
ascent with a backtracking line search that treats ``-inf`` objective
values as rejected steps, which the composite-likelihood surface needs.
"""

import dataclasses

import numpy as np
from scipy import optimize, special

from .exceptions import DomainError, InitializationError

__all__ = [
    "log_gamma",
    "digamma",
    "normal_cdf",
    "normal_quantile",
    "bivariate_normal_cdf",
    "reg_inc_beta",
    "reg_inc_beta_inv",
    "chi_square_quantile",
    "OptimResult",
    "maximize",
    "RngStream",
]

_TWOPI = 2.0 * np.pi

# Full 20-point Gauss-Legendre rule on [-1, 1]; accuracy of the correlation
# integral with this fixed order is ~1e-15 for |rho| < 0.925 and the
# transformed branch below covers the rest.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _as_float_array(x, name):
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)):
        raise DomainError(f"{name} contains NaN")
    return arr


def _maybe_scalar(arr, *inputs):
    if all(np.isscalar(v) or np.ndim(v) == 0 for v in inputs):
        return float(arr)
    return arr


def log_gamma(a):
    """Natural log of the gamma function for a > 0."""
    arr = _as_float_array(a, "a")
    if np.any(arr <= 0.0):
        raise DomainError("log_gamma requires a > 0")
    return _maybe_scalar(special.gammaln(arr), a)


def digamma(a):
    """Logarithmic derivative of the gamma function for a > 0."""
    arr = _as_float_array(a, "a")
    if np.any(arr <= 0.0):
        raise DomainError("digamma requires a > 0")
    return _maybe_scalar(special.psi(arr), a)


def normal_cdf(x):
    """Standard normal CDF."""
    arr = np.asarray(x, dtype=float)
    return _maybe_scalar(special.ndtr(arr), x)


def normal_quantile(p):
    """Standard normal quantile for p in (0, 1)."""
    arr = _as_float_array(p, "p")
    if np.any((arr <= 0.0) | (arr >= 1.0)):
        raise DomainError("normal_quantile requires 0 < p < 1")
    return _maybe_scalar(special.ndtri(arr), p)


def _bvn_upper(dh, dk, r):
    """P(X > dh, Y > dk) for standard bivariate normal with correlation r.

    Vectorized over ``dh``/``dk`` (broadcast); ``r`` is a scalar with
    |r| < 1.  Port of Genz's BVND routine: Gauss-Legendre on the
    arcsine-substituted correlation integral for moderate |r|, and the
    transformed complementary expansion for |r| >= 0.925.
    """
    dh, dk = np.broadcast_arrays(np.asarray(dh, float), np.asarray(dk, float))
    out = np.zeros(dh.shape, dtype=float)

    hi = np.isposinf(dh) | np.isposinf(dk)
    lo_h = np.isneginf(dh) & ~hi
    lo_k = np.isneginf(dk) & ~hi
    out[lo_h] = special.ndtr(-dk[lo_h])
    out[lo_k] = special.ndtr(-dh[lo_k])
    out[lo_h & lo_k] = 1.0

    fin = ~(hi | lo_h | lo_k)
    h = dh[fin]
    k = dk[fin]
    hk = h * k
    bvn = np.zeros(h.shape)

    if abs(r) < 0.925:
        if r != 0.0:
            hs = (h * h + k * k) / 2.0
            asr = np.arcsin(r)
            for xi, wi in zip(_GL_X, _GL_W):
                sn = np.sin(asr * (xi + 1.0) / 2.0)
                bvn += wi * np.exp((sn * hk - hs) / (1.0 - sn * sn))
            bvn *= asr / (2.0 * _TWOPI)
        bvn += special.ndtr(-h) * special.ndtr(-k)
    else:
        if r < 0.0:
            k = -k
            hk = -hk
        if abs(r) < 1.0:
            a_sq = (1.0 - r) * (1.0 + r)
            a = np.sqrt(a_sq)
            bs = (h - k) ** 2
            c = (4.0 - hk) / 8.0
            d = (12.0 - hk) / 16.0
            asr = -(bs / a_sq + hk) / 2.0
            m = asr > -100.0
            bvn[m] = (
                a
                * np.exp(asr[m])
                * (1.0 - c[m] * (bs[m] - a_sq) * (1.0 - d[m] * bs[m] / 5.0) / 3.0
                   + c[m] * d[m] * a_sq * a_sq / 5.0)
            )
            m = -hk < 100.0
            b = np.sqrt(bs[m])
            bvn[m] -= (
                np.exp(-hk[m] / 2.0)
                * np.sqrt(_TWOPI)
                * special.ndtr(-b / a)
                * b
                * (1.0 - c[m] * bs[m] * (1.0 - d[m] * bs[m] / 5.0) / 3.0)
            )
            a_half = a / 2.0
            for xi, wi in zip(_GL_X, _GL_W):
                xs = (a_half * (xi + 1.0)) ** 2
                rs = np.sqrt(1.0 - xs)
                asr = -(bs / xs + hk) / 2.0
                m = asr > -100.0
                bvn[m] += (
                    a_half
                    * wi
                    * np.exp(asr[m])
                    * (np.exp(-hk[m] * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs
                       - (1.0 + c[m] * xs * (1.0 + d[m] * xs)))
                )
            bvn = -bvn / _TWOPI
        if r > 0.0:
            bvn += special.ndtr(-np.maximum(h, k))
        else:
            bvn = -bvn
            m = k > h
            bvn[m] += special.ndtr(k[m]) - special.ndtr(h[m])

    out[fin] = bvn
    return out


def bivariate_normal_cdf(x, y, rho):
    """P(X <= x, Y <= y) for a standard bivariate normal with correlation rho.

    Parameters
    ----------
    x, y : array_like
        Evaluation points; broadcast against each other.  ``+-inf`` is allowed.
    rho : float
        Correlation in [-1, 1].

    Returns
    -------
    float or ndarray
        Probabilities, clipped to [0, 1] against roundoff.
    """
    rho = float(rho)
    if np.isnan(rho) or abs(rho) > 1.0:
        raise DomainError("bivariate_normal_cdf requires -1 <= rho <= 1")
    xa, ya = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    if np.any(np.isnan(xa)) or np.any(np.isnan(ya)):
        raise DomainError("bivariate_normal_cdf received NaN input")
    if rho == 1.0:
        res = special.ndtr(np.minimum(xa, ya))
    elif rho == -1.0:
        res = np.maximum(special.ndtr(xa) + special.ndtr(ya) - 1.0, 0.0)
    else:
        res = _bvn_upper(-xa, -ya, rho)
    res = np.clip(res, 0.0, 1.0)
    return _maybe_scalar(res, x, y)


def reg_inc_beta(x, a, b):
    """Regularized incomplete beta function I_x(a, b)."""
    xa = _as_float_array(x, "x")
    if np.any((xa < 0.0) | (xa > 1.0)):
        raise DomainError("reg_inc_beta requires 0 <= x <= 1")
    aa = _as_float_array(a, "a")
    ba = _as_float_array(b, "b")
    if np.any(aa <= 0.0) or np.any(ba <= 0.0):
        raise DomainError("reg_inc_beta requires a > 0 and b > 0")
    return _maybe_scalar(special.betainc(aa, ba, xa), x, a, b)


def reg_inc_beta_inv(p, a, b):
    """Inverse of ``reg_inc_beta`` in its first argument."""
    pa = _as_float_array(p, "p")
    if np.any((pa < 0.0) | (pa > 1.0)):
        raise DomainError("reg_inc_beta_inv requires 0 <= p <= 1")
    aa = _as_float_array(a, "a")
    ba = _as_float_array(b, "b")
    if np.any(aa <= 0.0) or np.any(ba <= 0.0):
        raise DomainError("reg_inc_beta_inv requires a > 0 and b > 0")
    return _maybe_scalar(special.betaincinv(aa, ba, pa), p, a, b)


def chi_square_quantile(p, df):
    """Chi-square quantile for p in (0, 1) and df > 0."""
    pa = _as_float_array(p, "p")
    if np.any((pa <= 0.0) | (pa >= 1.0)):
        raise DomainError("chi_square_quantile requires 0 < p < 1")
    dfa = _as_float_array(df, "df")
    if np.any(dfa <= 0.0):
        raise DomainError("chi_square_quantile requires df > 0")
    return _maybe_scalar(special.chdtri(dfa, 1.0 - pa), p, df)


@dataclasses.dataclass
class OptimResult:
    """Outcome of ``maximize``.

    Attributes
    ----------
    x : ndarray
        Argmax candidate.
    value : float
        Objective at ``x``.
    gradient_norm : float
        Sup norm of the gradient at ``x`` (finite-difference if no analytic
        gradient was supplied).
    iterations : int
        BFGS iterations used, counting a possible post-restart polish.
    converged : bool
        True when the gradient norm met the tolerance.
    """

    x: np.ndarray
    value: float
    gradient_norm: float
    iterations: int
    converged: bool


def _fd_gradient(f, x, rel_step=1e-6):
    g = np.empty(x.size)
    for j in range(x.size):
        h = rel_step * max(1.0, abs(x[j]))
        e = np.zeros(x.size)
        e[j] = h
        fp = f(x + e)
        fm = f(x - e)
        g[j] = (fp - fm) / (2.0 * h)
    return g


def _bfgs_ascent(f, grad, x0, f0, tol, max_iter):
    n = x0.size
    eye = np.eye(n)
    hinv = eye.copy()
    x = x0.copy()
    fx = f0
    g = np.asarray(grad(x), dtype=float)
    iters = 0
    for _ in range(max_iter):
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= tol:
            return x, fx, gnorm, iters, True
        iters += 1
        d = hinv @ g
        gd = float(g @ d)
        if not np.isfinite(gd) or gd <= 0.0:
            hinv = eye.copy()
            d = g
            gd = float(g @ g)
            if gd == 0.0:
                return x, fx, gnorm, iters, True
        step = 1.0
        accepted = False
        for _ in range(60):
            xn = x + step * d
            fn = f(xn)
            if np.isfinite(fn) and fn >= fx + 1e-4 * step * gd:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            return x, fx, gnorm, iters, False
        gn = np.asarray(grad(xn), dtype=float)
        if not np.all(np.isfinite(gn)):
            return xn, fn, np.inf, iters, False
        s = xn - x
        ym = g - gn  # gradient change of -f, for the minimization-form update
        sy = float(s @ ym)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(ym):
            rho = 1.0 / sy
            v = eye - rho * np.outer(s, ym)
            hinv = v @ hinv @ v.T + rho * np.outer(s, s)
        x, fx, g = xn, fn, gn
    gnorm = float(np.max(np.abs(g)))
    return x, fx, gnorm, iters, gnorm <= tol


def maximize(f, x0, grad=None, tol=1e-6, max_iter=500):
    """Maximize a scalar function of a vector argument.

    BFGS ascent with a backtracking Armijo line search.  The objective may
    return ``-inf`` anywhere except at ``x0``; such steps are rejected by
    the line search, which makes hard feasibility barriers safe.  If the
    ascent stalls before the gradient tolerance is met, one Nelder-Mead
    restart runs from the incumbent and BFGS polishes its result.

    Parameters
    ----------
    f : callable
        Objective; returns a float or ``-inf``.
    x0 : array_like
        Starting point with finite objective.
    grad : callable, optional
        Gradient of ``f``.  Central finite differences are used if omitted.
        The gradient is only evaluated at points where ``f`` is finite.
    tol : float
        Sup-norm gradient tolerance declaring convergence.
    max_iter : int
        Iteration cap for each BFGS run.

    Returns
    -------
    OptimResult
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    f0 = float(f(x0))
    if not np.isfinite(f0):
        raise InitializationError("objective is not finite at the starting point")
    if grad is None:
        grad = lambda x: _fd_gradient(f, x)  # noqa: E731

    x, fx, gnorm, iters, converged = _bfgs_ascent(f, grad, x0, f0, tol, max_iter)
    if not converged:
        neg = lambda z: -f(z) if np.isfinite(f(z)) else np.inf  # noqa: E731
        nm = optimize.minimize(
            neg,
            x,
            method="Nelder-Mead",
            options={"maxiter": 200 * x.size, "xatol": 1e-9, "fatol": 1e-12},
        )
        x_nm = np.asarray(nm.x, dtype=float)
        f_nm = float(f(x_nm))
        if np.isfinite(f_nm) and f_nm >= fx:
            x2, fx2, gnorm2, it2, conv2 = _bfgs_ascent(f, grad, x_nm, f_nm, tol, max_iter)
            if fx2 >= fx:
                x, fx, gnorm, converged = x2, fx2, gnorm2, conv2
                iters += it2
    return OptimResult(x=x, value=float(fx), gradient_norm=float(gnorm),
                       iterations=iters, converged=bool(converged))


class RngStream:
    """Counter-based random stream keyed by (seed, stream_id).

    Wraps a Philox bit generator whose 128-bit key is the (seed, stream_id)
    pair, so a stream's output is fully determined by those two integers,
    independent of creation order or platform.  Distinct ids give
    statistically independent streams.
    """

    def __init__(self, seed, stream_id=0):
        seed = int(seed)
        stream_id = int(stream_id)
        if not (0 <= seed < 2**64):
            raise DomainError("seed must fit in an unsigned 64-bit integer")
        if not (0 <= stream_id < 2**64):
            raise DomainError("stream_id must fit in an unsigned 64-bit integer")
        self.seed = seed
        self.stream_id = stream_id
        key = np.array([seed, stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def uniform(self, size=None):
        """Uniform(0, 1) draws; a float when ``size`` is None."""
        return self._gen.uniform(size=size)

    def substream(self, index):
        """Derive a disjoint child stream for two-level nesting.

        Child ids live in ``stream_id * 2**32 + index`` with
        ``index < 2**32``, so top-level ids below ``2**32`` never collide
        with any child.
        """
        index = int(index)
        if not (0 <= index < 2**32):
            raise DomainError("substream index must fit in 32 bits")
        if self.stream_id >= 2**32:
            raise DomainError("substream nesting is limited to two levels")
        return RngStream(self.seed, self.stream_id * 2**32 + index)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"
