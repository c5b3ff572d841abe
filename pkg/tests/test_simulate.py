"""Tests for trajectory generation and the study harness."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mzoibts.copula import CopulaFamily, copula_h_inv
from mzoibts.exceptions import ConfigError, GenerationError
from mzoibts.model import DesignSet, ItsConfig, Theta, its_design, per_time_params
from mzoibts.numkit import RngStream, normal_quantile
from mzoibts.simulate import McStudyConfig, McStudyReport, markov_series, run_mc_study
from mzoibts.zoib import ZoibParams, zoib_cdf

TREND_THETA = Theta(beta1=[2.944], beta2=[-2.197],
                    beta3=[0.847, -0.01, -0.5, -0.3], beta4=[3.0, 0.5])
ITS_60 = ItsConfig(n=60, tau=31, transform="log")
DESIGN_60 = its_design(ITS_60)


def flat_design(n):
    ones = np.ones((n, 1))
    return DesignSet(x1=ones, x2=ones.copy(), x3=ones.copy(), x4=ones.copy())


def flat_theta(beta1=2.944, beta2=-2.197, beta3=0.847, beta4=3.0):
    return Theta(beta1=[beta1], beta2=[beta2], beta3=[beta3], beta4=[beta4])


class TestMarkovSeries:
    def test_reproducible(self):
        fam = CopulaFamily("gaussian", 0.5)
        a = markov_series(TREND_THETA, DESIGN_60, fam, RngStream(1, 0))
        b = markov_series(TREND_THETA, DESIGN_60, fam, RngStream(1, 0))
        assert np.array_equal(a, b)
        assert a.shape == (60,)
        assert np.all((a >= 0.0) & (a <= 1.0))

    def test_different_streams_differ(self):
        fam = CopulaFamily("gaussian", 0.5)
        a = markov_series(TREND_THETA, DESIGN_60, fam, RngStream(1, 0))
        b = markov_series(TREND_THETA, DESIGN_60, fam, RngStream(1, 1))
        assert not np.array_equal(a, b)

    def test_infeasible_coefficients_rejected(self):
        # the trending mean block leaves (0, 1) on a raw time scale
        ds = its_design(ItsConfig(n=300, tau=150, transform="identity"))
        with pytest.raises(GenerationError, match="time"):
            markov_series(TREND_THETA, ds, CopulaFamily("gaussian", 0.5),
                          RngStream(1, 0))

    def test_gaussian_path_equals_conditional_quantile_chain(self):
        # the latent normal recursion must reproduce the generic chain
        # u_t = h_inv(w_t, u_{t-1}) step for step
        fam = CopulaFamily("gaussian", 0.6)
        ds = DESIGN_60
        series = markov_series(TREND_THETA, ds, fam, RngStream(42, 7))
        w = np.clip(RngStream(42, 7).uniform(size=60), 1e-12, 1.0 - 1e-12)
        u = np.empty(60)
        u[0] = w[0]
        for t in range(1, 60):
            u[t] = float(copula_h_inv(fam, w[t], u[t - 1]))
        pp = per_time_params(TREND_THETA, ds)
        from mzoibts.zoib import _quantile_arrays

        ref = _quantile_arrays(np.clip(u, 1e-12, 1.0 - 1e-12),
                               pp.p1, pp.p2, pp.mu, pp.phi)
        assert_allclose(series, ref, atol=1e-12)

    def test_independence_limit_no_lag_correlation(self):
        n = 10_000
        theta = flat_theta()
        ds = flat_design(n)
        y = markov_series(theta, ds, CopulaFamily("gaussian", 0.0), RngStream(3, 0))
        pp = per_time_params(theta, ds)
        from mzoibts.zoib import _cdf_arrays

        # mid-distribution normal scores; atoms map to interval midpoints
        u, u_minus = _cdf_arrays(y, pp.p1, pp.p2, pp.mu, pp.phi)
        z = normal_quantile(np.clip(0.5 * (u + u_minus), 1e-12, 1.0 - 1e-12))
        r = np.corrcoef(z[1:], z[:-1])[0, 1]
        assert abs(r) < 3.0 / np.sqrt(n)

    def test_gaussian_latent_correlation_recovered(self):
        # pure continuous margins let the generating uniforms be read back
        # exactly through the CDF, exposing the latent AR(1) correlation
        n = 100_000
        theta = flat_theta(beta1=40.0, beta2=-40.0)
        y = markov_series(theta, flat_design(n),
                          CopulaFamily("gaussian", 0.5), RngStream(21, 0))
        assert np.all((y > 0.0) & (y < 1.0))
        pp = per_time_params(theta, flat_design(n))
        from mzoibts.zoib import _cdf_arrays

        u, _ = _cdf_arrays(y, pp.p1, pp.p2, pp.mu, pp.phi)
        z = normal_quantile(np.clip(u, 1e-12, 1.0 - 1e-12))
        r = np.corrcoef(z[1:], z[:-1])[0, 1]
        assert abs(r - 0.5) < 0.02

    def test_marginal_law_under_dependence(self):
        # serial dependence must not distort the stationary marginal
        n = 20_000
        theta = flat_theta()
        y = markov_series(theta, flat_design(n),
                          CopulaFamily("frank", 3.3), RngStream(17, 0))
        pp = per_time_params(theta, flat_design(1))
        params = ZoibParams(p1=pp.p1[0], p2=pp.p2[0], mu=pp.mu[0], phi=pp.phi[0])
        p0 = 1.0 - params.p1
        p1mass = params.p1 * params.p2
        n0 = np.sum(y == 0.0)
        n1 = np.sum(y == 1.0)
        se0 = np.sqrt(p0 * (1.0 - p0) / n)
        se1 = np.sqrt(p1mass * (1.0 - p1mass) / n)
        assert abs(n0 / n - p0) < 3.0 * se0
        assert abs(n1 / n - p1mass) < 3.0 * se1
        mid = y[(y > 0.0) & (y < 1.0)]
        grid = np.linspace(0.02, 0.98, 97)
        cont_mass = params.p1 * (1.0 - params.p2)
        ks = 0.0
        for q in grid:
            emp = np.mean(mid <= q)
            cdf_pair = zoib_cdf(float(q), params)
            model = (cdf_pair.u - p0) / cont_mass
            ks = max(ks, abs(emp - model))
        assert ks < 0.015


class TestMcStudyConfig:
    def test_basic_construction(self):
        cfg = McStudyConfig(theta_true=TREND_THETA,
                            family=CopulaFamily("gaussian", 0.5),
                            its=ITS_60, K=10, se_method="hac", seed=1)
        assert cfg.n == 60
        assert cfg.K == 10

    def test_rejects_bad_k(self):
        with pytest.raises(ConfigError):
            McStudyConfig(theta_true=TREND_THETA,
                          family=CopulaFamily("gaussian", 0.5),
                          its=ITS_60, K=0)

    def test_rejects_unknown_se_method(self):
        with pytest.raises(ConfigError):
            McStudyConfig(theta_true=TREND_THETA,
                          family=CopulaFamily("gaussian", 0.5),
                          its=ITS_60, K=5, se_method="jackknife")

    def test_rejects_small_bootstrap(self):
        with pytest.raises(ConfigError):
            McStudyConfig(theta_true=TREND_THETA,
                          family=CopulaFamily("gaussian", 0.5),
                          its=ITS_60, K=5, se_method="bootstrap", R=1)

    def test_selection_needs_tau_in_candidates(self):
        with pytest.raises(ConfigError):
            McStudyConfig(theta_true=TREND_THETA,
                          family=CopulaFamily("gaussian", 0.5),
                          its=ITS_60, K=5, se_method="hac",
                          select_tau=True, candidates=(20, 21))

    def test_rejects_bad_alpha(self):
        with pytest.raises(ConfigError):
            McStudyConfig(theta_true=TREND_THETA,
                          family=CopulaFamily("gaussian", 0.5),
                          its=ITS_60, K=5, se_method="hac", alpha=1.2)

    def test_rejects_unknown_fit_family(self):
        with pytest.raises(ConfigError, match="fit_family"):
            McStudyConfig(theta_true=TREND_THETA,
                          family=CopulaFamily("frank", 3.3),
                          its=ITS_60, K=5, fit_family="vine")


def small_study(**overrides):
    base = dict(theta_true=TREND_THETA, family=CopulaFamily("gaussian", 0.5),
                its=ITS_60, K=4, se_method="hac", seed=123)
    base.update(overrides)
    return McStudyConfig(**base)


class TestRunMcStudy:
    def test_single_replicate_echoes_values(self):
        rep = run_mc_study(small_study(K=1))
        assert isinstance(rep, McStudyReport)
        assert rep.total == 1
        assert rep.converged == 1
        assert_allclose(rep.bias, rep.estimates[0] - TREND_THETA.flatten())
        assert_allclose(rep.mean_se, rep.std_errors[0])
        assert set(np.unique(rep.coverage)) <= {0.0, 1.0}
        assert rep.selected_taus is None

    def test_deterministic_given_seed(self):
        a = run_mc_study(small_study())
        b = run_mc_study(small_study())
        assert np.array_equal(a.estimates, b.estimates, equal_nan=True)
        assert np.array_equal(a.std_errors, b.std_errors, equal_nan=True)
        assert a.converged == b.converged
        assert_allclose(a.bias, b.bias)
        assert_allclose(a.coverage, b.coverage)

    def test_worker_count_does_not_change_results(self):
        serial = run_mc_study(small_study(), workers=1)
        parallel = run_mc_study(small_study(), workers=2)
        assert np.array_equal(serial.estimates, parallel.estimates, equal_nan=True)
        assert np.array_equal(serial.std_errors, parallel.std_errors, equal_nan=True)

    def test_bootstrap_method_smoke(self):
        rep = run_mc_study(small_study(K=2, se_method="bootstrap", R=10))
        assert rep.converged == 2
        assert np.all(np.isfinite(rep.mean_se))

    def test_fit_family_override_runs(self):
        cfg = small_study(K=2, family=CopulaFamily("frank", 3.3),
                          se_method="bootstrap", R=10, fit_family="gaussian")
        rep = run_mc_study(cfg)
        assert rep.converged == 2
        assert np.all(np.isfinite(rep.mean_se))

    def test_selection_records_choices(self):
        cfg = small_study(K=2, select_tau=True, candidates=(30, 31, 32))
        rep = run_mc_study(cfg)
        assert rep.selected_taus is not None
        assert rep.selected_taus.shape == (2,)
        assert set(rep.selected_taus) <= {30, 31, 32}

    def test_all_failed_replicates_reported(self):
        # infeasible truth on a raw time design fails every simulation
        cfg = McStudyConfig(theta_true=TREND_THETA,
                            family=CopulaFamily("gaussian", 0.5),
                            its=ItsConfig(n=300, tau=150, transform="identity"),
                            K=3, se_method="hac", seed=1)
        rep = run_mc_study(cfg)
        assert rep.converged == 0
        assert np.all(np.isnan(rep.bias))
        assert np.all(np.isnan(rep.estimates))

    def test_power_uses_squared_ratio_rule(self):
        rep = run_mc_study(small_study(K=1))
        stat = (rep.estimates[0] / rep.std_errors[0]) ** 2
        expected = stat > 3.8414588206941254
        assert np.array_equal(rep.power.astype(bool), expected)
