import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bayes_es.core import BuildingDataset, DateIndex, HeatDemandSeries, WeatherSeries
from bayes_es.models import (
    ModelKind,
    NonFiniteLikelihood,
    ParameterVector,
    UnstableAR,
    arx_delta,
    ecm_form,
    lse_mix,
    log_likelihood,
    long_term_transform,
    mean_series,
    mixed_sigma,
    param_names,
    regressors,
    residuals,
    short_term_from_long,
    simulate,
    simulate_batch,
    summer_regime_mean,
    tau_weight,
    winter_regime_mean,
)
from conftest import START, constant_weather, random_dataset, random_params, random_weather
from oracles import loglik_direct, rows

P0 = ParameterVector(ua0=0.1, ua_wind=0.0, t_base=18.0, ga=0.0, phi_base=0.05, k_mix=1.0,
                     sigma_winter=0.2, sigma_reduction=0.1)

finite = st.floats(-1e3, 1e3, allow_nan=False)
sharp = st.floats(1e-3, 1e3)


class TestRegimes:
    def test_winter_examples(self):
        assert winter_regime_mean(P0, 8.0, 5.0, 100.0) == pytest.approx(1.05)
        p = P0.replace(ua_wind=0.01)
        assert winter_regime_mean(p, 8.0, 5.0, 100.0) == pytest.approx(1.55)
        p = p.replace(ga=0.002)
        assert winter_regime_mean(p, 8.0, 5.0, 100.0) == pytest.approx(1.35)

    @pytest.mark.parametrize("phi", [0.05, 0.0, 1.2])
    def test_summer_is_base_load(self, phi):
        assert summer_regime_mean(P0.replace(phi_base=phi)) == phi


class TestLse:
    def test_examples(self):
        assert lse_mix(1.0, 1.0, 1.0) == pytest.approx(1 + math.log(2), abs=1e-12)
        assert lse_mix(10.0, 2.0, 50.0) == pytest.approx(10.0, abs=1e-9)
        assert lse_mix(0.0, 0.0, 2.0) == pytest.approx(math.log(2) / 2, abs=1e-12)

    def test_no_overflow_for_huge_arguments(self):
        assert lse_mix(1e6, 1e6 - 1, 1.0) == pytest.approx(1e6 + math.log1p(math.exp(-1)))
        assert lse_mix(-1e6, 0.0, 1e3) == pytest.approx(0.0, abs=1e-12)
        assert np.isfinite(lse_mix(1e6, -1e6, 1e6))

    @given(finite, finite, sharp)
    def test_bounds_and_symmetry(self, a, b, k):
        m = lse_mix(a, b, k)
        assert m >= max(a, b)
        assert m - max(a, b) <= math.log(2) / k + 1e-12
        assert m == lse_mix(b, a, k)

    def test_vectorised_matches_scalar(self, rng):
        a, b = rng.normal(size=50), rng.normal(size=50)
        v = lse_mix(a, b, 3.0)
        assert np.allclose(v, [lse_mix(x, y, 3.0) for x, y in zip(a, b)], rtol=0, atol=1e-15)


class TestTau:
    def test_examples(self):
        assert tau_weight(2.0, 2.0, 5.0) == 0.5
        assert tau_weight(math.log(3), 0.0, 1.0) == pytest.approx(0.75, abs=1e-12)
        assert tau_weight(100.0, 0.0, 10.0) == pytest.approx(1.0, abs=1e-12)

    @given(finite, finite, sharp)
    def test_complementary_and_bounded(self, a, b, k):
        t = tau_weight(a, b, k)
        assert 0.0 <= t <= 1.0
        assert t + tau_weight(b, a, k) == pytest.approx(1.0, abs=1e-12)


class TestMixedSigma:
    def test_endpoints_and_midpoint(self):
        p = P0.replace(sigma_winter=0.2, sigma_reduction=0.1)
        assert mixed_sigma(1.0, p) == 0.1
        assert mixed_sigma(0.0, p) == 0.2
        assert mixed_sigma(0.5, p) == pytest.approx(0.15)


class TestParameterVector:
    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            P0.replace(ua0=0.0).check()
        with pytest.raises(ValueError):
            P0.replace(sigma_winter=-1.0).check()
        with pytest.raises(ValueError):
            P0.replace(rho1=1.0).check(ModelKind.ARX_ES)
        with pytest.raises(ValueError):
            P0.check(ModelKind.ARX_ES)
        with pytest.raises(ValueError):
            P0.replace(rho1=0.2).check(ModelKind.ARMAX_ES)

    def test_array_and_dict_round_trip(self, rng):
        for kind in ModelKind:
            p = random_params(rng, kind)
            assert ParameterVector.from_array(p.as_array(kind), kind) == p
            assert ParameterVector.from_dict(p.to_dict()) == p
            assert len(p.as_array(kind)) == len(param_names(kind))

    def test_kind_parsing(self):
        assert ModelKind.parse("arx") is ModelKind.ARX_ES
        assert ModelKind.parse("ARMAX_ES") is ModelKind.ARMAX_ES
        with pytest.raises(ValueError):
            ModelKind.parse("var")


class TestLikelihood:
    def test_normal_at_its_mean(self):
        w = WeatherSeries(DateIndex(START, 1), [30.0], [0.0], [0.0])
        p = P0.replace(sigma_winter=1.0, sigma_reduction=1.0)
        mu, _, _ = mean_series("es", p, BuildingDataset(w, HeatDemandSeries(w.index, [0.0])))
        ds = BuildingDataset(w, HeatDemandSeries(w.index, mu))
        total, pw = log_likelihood("es", p, ds)
        assert pw[0] == pytest.approx(-0.91893853, abs=1e-8)
        assert total == pw[0]

    def test_additive_over_identical_days(self):
        w = constant_weather(2, t=5.0)
        ds = BuildingDataset(w, HeatDemandSeries(w.index, [1.3, 1.3]))
        total, pw = log_likelihood("es", P0, ds)
        assert pw[0] == pw[1]
        assert total == pytest.approx(2 * pw[0], abs=1e-15)

    @pytest.mark.parametrize("kind", ["es", "arx", "armax"])
    def test_matches_direct_summation_oracle(self, rng, kind):
        for _ in range(10):
            ds = random_dataset(rng, 30)
            p = random_params(rng, kind)
            total, pw = log_likelihood(kind, p, ds)
            ref_total, ref_pw = loglik_direct(kind, p, rows(ds.weather), ds.phi.tolist())
            assert abs(total - ref_total) < 1e-9
            assert np.max(np.abs(pw - ref_pw)) < 1e-10

    def test_non_finite_raises(self, rng):
        ds = random_dataset(rng, 10)
        bad = P0.replace(t_base=float("inf"))
        with pytest.raises(NonFiniteLikelihood):
            log_likelihood("es", bad, ds)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 60))
    def test_nesting(self, seed, n):
        rng = np.random.default_rng(seed)
        ds = random_dataset(rng, n)
        p = random_params(rng, "armax")
        es, _ = log_likelihood("es", p, ds)
        arx0, _ = log_likelihood("arx", p.replace(rho1=0.0), ds)
        arx, _ = log_likelihood("arx", p, ds)
        armax0, _ = log_likelihood("armax", p.replace(nu=(0.0, 0.0, 0.0)), ds)
        assert abs(es - arx0) < 1e-12
        assert abs(arx - armax0) < 1e-12

    def test_es_constant_weather_constant_mean(self):
        w = constant_weather(20, t=3.0)
        ds = BuildingDataset(w, HeatDemandSeries(w.index, np.ones(20)))
        mu, sigma, tau = mean_series("es", P0, ds)
        assert np.all(mu == mu[0]) and np.all(sigma == sigma[0]) and np.all(tau == tau[0])

    def test_armax_residuals_deterministic(self, rng):
        ds = random_dataset(rng, 100)
        p = random_params(rng, "armax")
        r1 = residuals("armax", p, ds)
        r2 = residuals("armax", p, ds)
        assert r1.tobytes() == r2.tobytes()

    def test_armax_residual_recursion(self, rng):
        ds = random_dataset(rng, 40)
        p = random_params(rng, "armax")
        mu, _, _ = mean_series("armax", p, ds)
        e = ds.phi - mu
        base, _, _ = mean_series("es", p, ds)
        for t in range(1, 40):
            ma = sum(p.nu[i - 1] * e[t - i] for i in (1, 2, 3) if t - i >= 0)
            assert mu[t] == pytest.approx(base[t] + p.rho1 * ds.phi[t - 1] + ma, abs=1e-12)


class TestSimulate:
    def test_noiseless_es_equals_mean(self, rng):
        w = random_weather(rng, 50)
        p = random_params(rng)
        sim = simulate("es", p, w, rng, noise_scale=0.0)
        mu, _, _ = mean_series("es", p, BuildingDataset(w, sim))
        assert np.array_equal(sim.phi, mu)

    @pytest.mark.parametrize("kind", ["arx", "armax"])
    def test_noiseless_dynamic_is_fixed_point(self, rng, kind):
        w = random_weather(rng, 50)
        p = random_params(rng, kind)
        sim = simulate(kind, p, w, rng, noise_scale=0.0)
        mu, _, _ = mean_series(kind, p, BuildingDataset(w, sim))
        assert np.max(np.abs(sim.phi - mu)) < 1e-12

    def test_arx_summer_converges_to_steady_state(self, rng):
        p = P0.replace(phi_base=1.0, rho1=0.5, k_mix=5.0)
        sim = simulate("arx", p, constant_weather(200, t=40.0), rng, noise_scale=0.0)
        level = lse_mix(winter_regime_mean(p, 40.0, 0.0, 0.0), p.phi_base, p.k_mix)
        assert sim.phi[-1] == pytest.approx(level / (1 - 0.5), abs=1e-12)
        assert sim.phi[-1] == pytest.approx(2.0, abs=1e-5)

    def test_arx_summer_long_run_mean(self):
        p = P0.replace(phi_base=1.0, rho1=0.5, k_mix=5.0, sigma_reduction=0.1)
        sim = simulate("arx", p, constant_weather(100_000, t=40.0), np.random.default_rng(7))
        assert abs(sim.phi[1000:].mean() - 2.0) < 0.05

    def test_seeded_and_batch_consistent(self, rng):
        w = random_weather(rng, 30)
        p = random_params(rng, "armax")
        a = simulate("armax", p, w, np.random.default_rng(3))
        b = simulate("armax", p, w, np.random.default_rng(3))
        assert np.array_equal(a.phi, b.phi)
        batch = simulate_batch("armax", np.vstack([p.as_array("armax")] * 2), w,
                               np.random.default_rng(3))
        assert batch.shape == (2, 30)

    def test_generator_likelihood_consistency(self):
        # average log-density of own draws -> -(1/2)log(2 pi e sigma^2) averaged
        rng = np.random.default_rng(11)
        w = random_weather(rng, 200)
        p = random_params(rng).replace(k_mix=4.0)
        _, sigma, _ = mean_series("es", p, BuildingDataset(w, HeatDemandSeries(w.index, np.zeros(200))))
        expected = float(np.mean(-0.5 * np.log(2 * math.pi * math.e * sigma ** 2)))
        vals = []
        for _ in range(200):
            sim = simulate("es", p, w, rng)
            vals.append(log_likelihood("es", p, BuildingDataset(w, sim))[1].mean())
        se = np.std(vals, ddof=1) / math.sqrt(len(vals))
        assert abs(np.mean(vals) - expected) < 4 * se


class TestLongTerm:
    def test_examples(self):
        lt = long_term_transform(P0.replace(rho1=0.5, phi_base=1.0, ua0=0.1))
        assert lt.phi_base_lt == 2.0
        assert lt.ua0_lt == pytest.approx(0.2, abs=1e-15)
        assert lt.gamma == 0.5
        same = long_term_transform(P0.replace(rho1=0.0))
        assert (same.ua0_lt, same.ua_wind_lt, same.t_base_lt, same.ga_lt, same.phi_base_lt) == (
            P0.ua0, P0.ua_wind, P0.t_base, P0.ga, P0.phi_base)
        assert long_term_transform(P0).gamma == 1.0

    def test_unstable(self):
        with pytest.raises(UnstableAR):
            long_term_transform(P0.replace(rho1=1.0))
        with pytest.raises(UnstableAR):
            ecm_form(P0.replace(rho1=-1.2))

    @settings(max_examples=200)
    @given(st.integers(0, 2**32 - 1))
    def test_round_trip(self, seed):
        p = random_params(np.random.default_rng(seed), "arx")
        lt = long_term_transform(p)
        assert lt.phi_base_lt == p.phi_base / lt.gamma
        back = short_term_from_long(lt, p)
        for name in ("ua0", "ua_wind", "t_base", "ga", "phi_base", "rho1"):
            assert abs(getattr(back, name) - getattr(p, name)) < 1e-12

    def test_ecm_examples(self):
        e = ecm_form(P0.replace(rho1=0.5))
        assert e.gamma == 0.5
        e0 = ecm_form(P0.replace(rho1=0.0))
        assert e0.gamma == 1.0 and e0.phi_base_lt == P0.phi_base

    @pytest.mark.parametrize("seed", range(5))
    def test_ecm_equals_arx_difference(self, seed):
        rng = np.random.default_rng(seed)
        w = random_weather(rng, 50)
        p = random_params(rng, "arx")
        x = regressors(w)
        prev = rng.uniform(0, 5, 50)
        ecm = ecm_form(p)
        d_ecm = np.array([ecm.delta(prev[t], x[t - 1], x[t]) for t in range(1, 50)])
        d_arx = np.array([arx_delta(p, prev[t], x[t]) for t in range(1, 50)])
        assert np.max(np.abs(d_ecm - d_arx)) < 1e-10
