"""Tests for the copula families and the mixed pairwise density.

Derivative checks difference the CDF directly; normalization checks
integrate the implemented densities with fixed-order Gauss-Legendre
rules after a normal-scores change of variables.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import special

from mzoibts.copula import (
    FAMILY_KINDS,
    CopulaFamily,
    copula_cdf,
    copula_h,
    copula_h_inv,
    copula_log_density,
    pairwise_log_density,
    rectangle_prob,
)
from mzoibts.exceptions import DomainError
from mzoibts.numkit import bivariate_normal_cdf
from mzoibts.zoib import ZoibParams, zoib_log_pdf

MID_RANGE = {
    "gaussian": 0.5,
    "clayton": 2.0,
    "gumbel": 1.7,
    "frank": 3.3,
    "amh": 0.6,
}


def mid_family(kind):
    return CopulaFamily(kind, MID_RANGE[kind])


def gl_nodes(n, lo, hi):
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def density_total_mass(fam, order=220):
    """Integral of the copula density over the unit square.

    Uses u = Phi(x) so the integrand c(Phi(x), Phi(y)) phi(x) phi(y) is a
    smooth joint density on the plane; the [-8, 8] box truncation error is
    below 1e-14.
    """
    x, w = gl_nodes(order, -8.0, 8.0)
    u = special.ndtr(x)
    phi = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    c = np.exp(copula_log_density(fam, u[:, None], u[None, :]))
    return float((w * phi) @ c @ (w * phi))


class TestFamilyValidation:
    def test_kind_checked(self):
        with pytest.raises(DomainError):
            CopulaFamily("cauchy", 0.5)

    @pytest.mark.parametrize("kind,bad", [
        ("gaussian", 1.5), ("gaussian", -1.01),
        ("clayton", -1.5), ("clayton", 0.0),
        ("gumbel", 0.99),
        ("frank", 0.0),
        ("amh", 1.2),
    ])
    def test_rho_ranges(self, kind, bad):
        with pytest.raises(DomainError):
            CopulaFamily(kind, bad)

    @pytest.mark.parametrize("kind,ok", [
        ("gaussian", -1.0), ("gaussian", 1.0),
        ("clayton", -1.0), ("clayton", 8.0),
        ("gumbel", 1.0), ("gumbel", 12.0),
        ("frank", -30.0), ("frank", 1e-8),
        ("amh", -1.0), ("amh", 1.0),
    ])
    def test_rho_boundaries_accepted(self, kind, ok):
        CopulaFamily(kind, ok)


class TestCdfAxioms:
    @pytest.mark.parametrize("kind", FAMILY_KINDS)
    def test_grounded_and_uniform_margins(self, kind):
        fam = mid_family(kind)
        grid = np.linspace(0.0, 1.0, 21)
        assert_allclose(copula_cdf(fam, grid, np.zeros_like(grid)), 0.0, atol=1e-15)
        assert_allclose(copula_cdf(fam, np.zeros_like(grid), grid), 0.0, atol=1e-15)
        assert_allclose(copula_cdf(fam, grid, np.ones_like(grid)), grid, atol=1e-12)
        assert_allclose(copula_cdf(fam, np.ones_like(grid), grid), grid, atol=1e-12)

    @pytest.mark.parametrize("kind", FAMILY_KINDS)
    def test_rectangle_nonnegative_random(self, kind):
        fam = mid_family(kind)
        rng = np.random.default_rng(101)
        corners = np.sort(rng.uniform(0.0, 1.0, size=(1000, 2, 2)), axis=2)
        vals = rectangle_prob(fam, corners[:, 0, 0], corners[:, 0, 1],
                              corners[:, 1, 0], corners[:, 1, 1])
        assert np.all(vals >= 0.0)

    @pytest.mark.parametrize("kind", FAMILY_KINDS)
    def test_frechet_bounds(self, kind):
        fam = mid_family(kind)
        rng = np.random.default_rng(55)
        u1 = rng.uniform(size=400)
        u2 = rng.uniform(size=400)
        c = copula_cdf(fam, u1, u2)
        assert np.all(c <= np.minimum(u1, u2) + 1e-12)
        assert np.all(c >= np.maximum(u1 + u2 - 1.0, 0.0) - 1e-12)

    @pytest.mark.parametrize("kind", FAMILY_KINDS)
    def test_exchangeable(self, kind):
        fam = mid_family(kind)
        rng = np.random.default_rng(56)
        u1 = rng.uniform(size=200)
        u2 = rng.uniform(size=200)
        assert_allclose(copula_cdf(fam, u1, u2), copula_cdf(fam, u2, u1), atol=1e-14)

    def test_gaussian_matches_bvn_construction(self):
        fam = CopulaFamily("gaussian", 0.62)
        rng = np.random.default_rng(57)
        u1 = rng.uniform(0.01, 0.99, size=100)
        u2 = rng.uniform(0.01, 0.99, size=100)
        direct = bivariate_normal_cdf(special.ndtri(u1), special.ndtri(u2), 0.62)
        assert_allclose(copula_cdf(fam, u1, u2), direct, atol=1e-14)

    def test_clayton_negative_rho_cdf_supported(self):
        fam = CopulaFamily("clayton", -0.5)
        val = copula_cdf(fam, 0.3, 0.4)
        lower = max(0.3 + 0.4 - 1.0, 0.0)
        assert lower <= val <= min(0.3, 0.4)
        # countermonotone limit: W(u1,u2) at rho = -1
        w_fam = CopulaFamily("clayton", -1.0)
        assert_allclose(copula_cdf(w_fam, 0.3, 0.4), 0.0, atol=1e-12)
        assert_allclose(copula_cdf(w_fam, 0.7, 0.8), 0.5, atol=1e-12)

    def test_near_independence_limits(self):
        rng = np.random.default_rng(58)
        u1 = rng.uniform(0.02, 0.98, size=50)
        u2 = rng.uniform(0.02, 0.98, size=50)
        assert_allclose(copula_cdf(CopulaFamily("frank", 1e-8), u1, u2),
                        u1 * u2, atol=1e-7)
        assert_allclose(copula_cdf(CopulaFamily("gaussian", 0.0), u1, u2),
                        u1 * u2, atol=1e-14)
        assert_allclose(copula_cdf(CopulaFamily("gumbel", 1.0), u1, u2),
                        u1 * u2, atol=1e-12)
        assert_allclose(copula_cdf(CopulaFamily("amh", 0.0), u1, u2),
                        u1 * u2, atol=1e-14)

    def test_gaussian_comonotone_limits(self):
        u1, u2 = 0.35, 0.6
        assert_allclose(copula_cdf(CopulaFamily("gaussian", 1.0), u1, u2),
                        min(u1, u2), atol=1e-12)
        assert_allclose(copula_cdf(CopulaFamily("gaussian", -1.0), u1, u2),
                        max(u1 + u2 - 1.0, 0.0), atol=1e-12)


class TestLogDensity:
    @pytest.mark.parametrize("kind", FAMILY_KINDS)
    def test_against_cdf_differences(self, kind):
        fam = mid_family(kind)
        rng = np.random.default_rng(60)
        eps = 1e-4
        for _ in range(100):
            u1, u2 = rng.uniform(0.05, 0.95, size=2)
            fd = (copula_cdf(fam, u1 + eps, u2 + eps)
                  - copula_cdf(fam, u1 + eps, u2 - eps)
                  - copula_cdf(fam, u1 - eps, u2 + eps)
                  + copula_cdf(fam, u1 - eps, u2 - eps)) / (4.0 * eps * eps)
            dens = np.exp(copula_log_density(fam, u1, u2))
            assert abs(dens - fd) / abs(fd) < 1e-4

    @pytest.mark.parametrize("kind", FAMILY_KINDS)
    def test_integrates_to_one(self, kind):
        total = density_total_mass(mid_family(kind))
        assert_allclose(total, 1.0, atol=1e-6)

    def test_negative_dependence_normalization(self):
        for fam in [CopulaFamily("gaussian", -0.5), CopulaFamily("frank", -3.3),
                    CopulaFamily("amh", -0.8)]:
            assert_allclose(density_total_mass(fam), 1.0, atol=1e-6)

    @pytest.mark.parametrize("kind", FAMILY_KINDS)
    def test_symmetric(self, kind):
        fam = mid_family(kind)
        rng = np.random.default_rng(61)
        u1 = rng.uniform(0.02, 0.98, size=100)
        u2 = rng.uniform(0.02, 0.98, size=100)
        assert_allclose(copula_log_density(fam, u1, u2),
                        copula_log_density(fam, u2, u1), atol=1e-10)

    def test_independence_limits_are_flat(self):
        rng = np.random.default_rng(62)
        u1 = rng.uniform(0.05, 0.95, size=30)
        u2 = rng.uniform(0.05, 0.95, size=30)
        assert_allclose(copula_log_density(CopulaFamily("frank", 1e-8), u1, u2),
                        0.0, atol=1e-7)
        assert_allclose(copula_log_density(CopulaFamily("gaussian", 0.0), u1, u2),
                        0.0, atol=1e-14)

    def test_domain(self):
        with pytest.raises(DomainError):
            copula_log_density(CopulaFamily("gaussian", 1.0), 0.5, 0.5)
        with pytest.raises(DomainError):
            copula_log_density(CopulaFamily("clayton", -0.5), 0.5, 0.5)
        with pytest.raises(DomainError):
            copula_log_density(mid_family("frank"), 0.0, 0.5)


class TestHFunction:
    @pytest.mark.parametrize("kind", FAMILY_KINDS)
    def test_against_cdf_differences(self, kind):
        fam = mid_family(kind)
        rng = np.random.default_rng(63)
        eps = 1e-5
        for _ in range(60):
            u1, u2 = rng.uniform(0.05, 0.95, size=2)
            fd = (copula_cdf(fam, u1, u2 + eps) - copula_cdf(fam, u1, u2 - eps)) / (2 * eps)
            assert abs(copula_h(fam, u1, u2) - fd) <= 1e-6

    @pytest.mark.parametrize("kind", FAMILY_KINDS)
    def test_boundary_values_exact(self, kind):
        fam = mid_family(kind)
        u2 = np.linspace(0.05, 0.95, 19)
        assert np.all(copula_h(fam, np.zeros_like(u2), u2) == 0.0)
        assert np.all(copula_h(fam, np.ones_like(u2), u2) == 1.0)

    @pytest.mark.parametrize("kind", FAMILY_KINDS)
    def test_monotone_in_first_argument(self, kind):
        fam = mid_family(kind)
        u1 = np.linspace(0.001, 0.999, 200)
        for u2 in [0.2, 0.5, 0.8]:
            vals = copula_h(fam, u1, u2)
            assert np.all(np.diff(vals) >= -1e-12)

    @pytest.mark.parametrize("kind", FAMILY_KINDS)
    def test_h_inv_round_trip_grid(self, kind):
        fam = mid_family(kind)
        u1 = np.linspace(0.025, 0.975, 20)
        u2 = np.linspace(0.025, 0.975, 20)
        U1, U2 = np.meshgrid(u1, u2)
        p = copula_h(fam, U1, U2)
        back = copula_h_inv(fam, p, U2)
        assert np.max(np.abs(back - U1)) <= 1e-8

    @pytest.mark.parametrize("kind", FAMILY_KINDS)
    def test_h_inv_residual_contract(self, kind):
        fam = mid_family(kind)
        rng = np.random.default_rng(64)
        p = rng.uniform(0.001, 0.999, size=200)
        u2 = rng.uniform(0.02, 0.98, size=200)
        u1 = copula_h_inv(fam, p, u2)
        assert np.max(np.abs(copula_h(fam, u1, u2) - p)) <= 1e-9

    @settings(max_examples=60, deadline=None)
    @given(
        kind=st.sampled_from(["gumbel", "amh"]),
        p=st.floats(0.01, 0.99),
        u2=st.floats(0.05, 0.95),
    )
    def test_bisected_inverses_property(self, kind, p, u2):
        fam = mid_family(kind)
        u1 = copula_h_inv(fam, p, u2)
        assert 0.0 <= u1 <= 1.0
        assert abs(copula_h(fam, u1, u2) - p) <= 1e-9

    def test_gaussian_closed_form(self):
        fam = CopulaFamily("gaussian", 0.5)
        x = special.ndtri(0.3)
        y = special.ndtri(0.7)
        expected = special.ndtr((x - 0.5 * y) / np.sqrt(0.75))
        assert_allclose(copula_h(fam, 0.3, 0.7), expected, atol=1e-14)

    def test_frank_near_zero_rho(self):
        fam = CopulaFamily("frank", 1e-8)
        rng = np.random.default_rng(65)
        u1 = rng.uniform(0.05, 0.95, 20)
        u2 = rng.uniform(0.05, 0.95, 20)
        assert_allclose(copula_h(fam, u1, u2), u1, atol=1e-7)
        assert_allclose(copula_h_inv(fam, u1, u2), u1, atol=1e-7)

    def test_domain(self):
        fam = mid_family("gaussian")
        with pytest.raises(DomainError):
            copula_h(fam, 0.5, 0.0)
        with pytest.raises(DomainError):
            copula_h_inv(fam, 0.5, 1.0)


class TestRectangle:
    def test_gaussian_corner_box(self):
        fam = CopulaFamily("gaussian", 0.5)
        box = rectangle_prob(fam, 0.0, 0.05, 0.0, 0.05)
        z = special.ndtri(0.05)
        assert_allclose(box, bivariate_normal_cdf(z, z, 0.5), atol=1e-12)

    @pytest.mark.parametrize("kind", FAMILY_KINDS)
    def test_degenerate_and_full(self, kind):
        fam = mid_family(kind)
        assert rectangle_prob(fam, 0.3, 0.3, 0.1, 0.9) == 0.0
        assert_allclose(rectangle_prob(fam, 0.0, 1.0, 0.0, 1.0), 1.0, atol=1e-14)

    def test_additive_in_splits(self):
        fam = mid_family("frank")
        whole = rectangle_prob(fam, 0.1, 0.7, 0.2, 0.9)
        left = rectangle_prob(fam, 0.1, 0.4, 0.2, 0.9)
        right = rectangle_prob(fam, 0.4, 0.7, 0.2, 0.9)
        assert_allclose(left + right, whole, atol=1e-12)

    def test_bad_ordering(self):
        with pytest.raises(DomainError):
            rectangle_prob(mid_family("gaussian"), 0.5, 0.4, 0.1, 0.2)


class TestPairwiseLogDensity:
    P_T = ZoibParams(p1=0.9, p2=0.15, mu=0.6, phi=8.0)
    P_PREV = ZoibParams(p1=0.85, p2=0.2, mu=0.5, phi=10.0)

    def total_mass(self, fam, order=200):
        atoms = [0.0, 1.0]
        total = 0.0
        for a in atoms:
            for b in atoms:
                total += np.exp(pairwise_log_density(fam, a, b, self.P_T, self.P_PREV))
        y, w = gl_nodes(order, 0.0, 1.0)
        for a in atoms:
            total += float(w @ np.exp(pairwise_log_density(fam, a, y, self.P_T, self.P_PREV)))
            total += float(w @ np.exp(pairwise_log_density(fam, y, a, self.P_T, self.P_PREV)))
        inner = np.exp(pairwise_log_density(fam, y[:, None], y[None, :],
                                            self.P_T, self.P_PREV))
        total += float(w @ inner @ w)
        return total

    def test_total_mass_gaussian(self):
        assert_allclose(self.total_mass(CopulaFamily("gaussian", 0.5)), 1.0, atol=1e-6)

    def test_total_mass_frank(self):
        assert_allclose(self.total_mass(CopulaFamily("frank", 3.3)), 1.0, atol=1e-6)

    def test_independence_factorizes(self):
        fam = CopulaFamily("gaussian", 0.0)
        for yt in [0.0, 0.3, 1.0]:
            for yp in [0.0, 0.55, 1.0]:
                joint = pairwise_log_density(fam, yt, yp, self.P_T, self.P_PREV)
                expected = (zoib_log_pdf(yt, self.P_T)
                            + zoib_log_pdf(yp, self.P_PREV))
                assert_allclose(joint, expected, atol=1e-10)

    def test_matches_manual_mixed_branch(self):
        fam = CopulaFamily("gaussian", 0.4)
        # y_t = 0 atom against an interior y_prev
        yp = 0.45
        from mzoibts.zoib import zoib_cdf

        ut = zoib_cdf(0.0, self.P_T)
        up = zoib_cdf(yp, self.P_PREV)
        manual = (np.log(copula_h(fam, ut.u, up.u) - copula_h(fam, ut.u_minus, up.u))
                  + np.log(self.P_PREV.p1 * (1 - self.P_PREV.p2))
                  + np.log(np.exp(zoib_log_pdf(yp, self.P_PREV))
                           / (self.P_PREV.p1 * (1 - self.P_PREV.p2))))
        got = pairwise_log_density(fam, 0.0, yp, self.P_T, self.P_PREV)
        assert_allclose(got, manual, atol=1e-10)

    def test_symmetric_when_margins_match(self):
        fam = CopulaFamily("frank", 2.0)
        p = ZoibParams(p1=0.9, p2=0.1, mu=0.55, phi=6.0)
        for a, b in [(0.0, 0.4), (0.3, 0.8), (1.0, 0.2), (0.0, 1.0)]:
            assert_allclose(pairwise_log_density(fam, a, b, p, p),
                            pairwise_log_density(fam, b, a, p, p), atol=1e-10)

    def test_vectorized_matches_scalar(self):
        fam = CopulaFamily("gaussian", 0.3)
        ys = np.array([0.0, 0.2, 0.7, 1.0])
        vec = pairwise_log_density(fam, ys, ys[::-1], self.P_T, self.P_PREV)
        for i in range(4):
            scalar = pairwise_log_density(fam, float(ys[i]), float(ys[::-1][i]),
                                          self.P_T, self.P_PREV)
            assert_allclose(vec[i], scalar, atol=1e-12)

    def test_clayton_negative_rho_rejected_for_mixed_data(self):
        fam = CopulaFamily("clayton", -0.5)
        with pytest.raises(DomainError):
            pairwise_log_density(fam, 0.4, 0.6, self.P_T, self.P_PREV)
