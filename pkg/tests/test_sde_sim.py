import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ergofbm.fbm import sample_fbm
from ergofbm.rng import RngStream
from ergofbm.sde_sim import (
    AugmentedPath,
    OverflowSimulationError,
    Path,
    ThetaBox,
    ThetaVector,
    augment,
    burn_in_time,
    euler_simulate,
    fine_steps_needed,
    observe,
    ou_drift,
    perturbed_ou_drift,
    subsample,
    tangent_sigma,
    tangent_xi,
)


class TestTheta:
    def test_ou_free_mask(self):
        th = ThetaVector.ou(2, 0.5, 0.7, free=("xi", "hurst"))
        assert th.free == (True, False, True)
        assert np.array_equal(th.free_values(), [2, 0.7])

    def test_roundtrip(self):
        th = ThetaVector.ou(2, 0.5, 0.7, free=("sigma",))
        back = ThetaVector.from_array(th.as_array(), th.free)
        assert back == th

    def test_with_free_values(self):
        th = ThetaVector.ou(2, 0.5, 0.7, free=("xi", "sigma")).with_free_values([3.0, 0.4])
        assert th.as_array().tolist() == [3.0, 0.4, 0.7]

    @pytest.mark.parametrize("kw", [dict(sigma=-0.1), dict(hurst=0.0), dict(hurst=1.0)])
    def test_invalid(self, kw):
        args = dict(xi=1.0, sigma=0.5, hurst=0.5)
        args.update(kw)
        with pytest.raises(ValueError):
            ThetaVector.ou(**args)

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            ThetaVector.ou(1, 1, 0.5, free=("mu",))


class TestBox:
    def test_clip_and_contains(self):
        box = ThetaBox.ou()
        th = box.clip(ThetaVector.ou(10.0, 0.01, 0.99))
        assert th.as_array().tolist() == [4.0, 0.1, 0.95]
        assert box.contains(th)

    @pytest.mark.parametrize("kw", [dict(xi=(1, 1)), dict(sigma=(0, 1)), dict(hurst=(0.2, 1.0))])
    def test_invalid_box(self, kw):
        with pytest.raises(ValueError):
            ThetaBox.ou(**kw)


class TestDrift:
    def test_gamma_max(self):
        assert ou_drift(0.5, 4).gamma_max == pytest.approx(0.5 / 16)

    def test_contraction_below_one(self):
        d = ou_drift(0.5, 4)
        assert d.contraction_factor(0.9 * d.gamma_max) < 1

    def test_perturbation_limit(self):
        with pytest.raises(ValueError):
            perturbed_ou_drift(0.3, 0.5, 4)

    def test_burn_in(self):
        assert burn_in_time(ou_drift(0.5, 4)) == 20.0


class TestEuler:
    def test_matches_explicit_loop(self):
        th = ThetaVector.ou(2, 0.5, 0.7)
        noise = sample_fbm(0.7, 0.01, 300, RngStream(0))
        y = euler_simulate(ou_drift(), th, noise, y0=0.3).values
        ref = [0.3]
        for db in np.diff(noise.values):
            ref.append(ref[-1] - 0.01 * 2 * ref[-1] + 0.5 * db)
        assert np.allclose(y, ref, rtol=1e-12, atol=1e-14)

    def test_perturbed_zero_reduces_to_ou(self):
        th = ThetaVector.ou(2, 0.5, 0.7)
        noise = sample_fbm(0.7, 0.01, 200, RngStream(1))
        a = euler_simulate(ou_drift(), th, noise).values
        b = euler_simulate(perturbed_ou_drift(0.0), th, noise).values
        assert np.allclose(a, b, atol=1e-13)

    def test_sigma_zero_is_deterministic_decay(self):
        noise = sample_fbm(0.5, 0.01, 100, RngStream(2))
        y = euler_simulate(ou_drift(), ThetaVector.ou(2, 0.0, 0.5), noise, y0=1.0).values
        assert np.allclose(y, (1 - 0.02) ** np.arange(101))

    def test_step_bound_enforced(self):
        noise = sample_fbm(0.5, 0.1, 10, RngStream(0))
        with pytest.raises(ValueError, match="gamma_0"):
            euler_simulate(ou_drift(), ThetaVector.ou(1, 1, 0.5), noise)

    def test_overflow(self):
        noise = sample_fbm(0.5, 1.0, 200, RngStream(0))
        unstable = ThetaVector.ou(-1.0, 1.0, 0.5)
        with pytest.raises(OverflowSimulationError):
            euler_simulate(ou_drift(), unstable, noise, check_step=False)

    def test_brownian_stationary_variance(self):
        # At H = 1/2 the Euler chain is AR(1): Var = sigma^2 h / (1 - (1 - xi h)^2).
        xi, sigma, h, n = 2.0, 0.5, 0.01, 400_000
        noise = sample_fbm(0.5, h, n, RngStream(3))
        y = euler_simulate(ou_drift(), ThetaVector.ou(xi, sigma, 0.5), noise).values[5000:]
        target = sigma**2 * h / (1 - (1 - xi * h) ** 2)
        # effective sample size from the AR(1) correlation time
        ess = len(y) * xi * h / 2
        assert abs(y.var() - target) < 4 * target * np.sqrt(2 / ess)


class TestAugment:
    def test_layout(self):
        p = Path(0.1, np.arange(10.0))
        a = augment(p, q=2, lag_h=0.2)
        assert a.rows.shape == (6, 3)
        assert np.allclose(a.rows[0], [0, 2, 4])

    def test_truncate(self):
        a = augment(Path(0.1, np.arange(10.0) ** 2), q=2)
        t = a.truncate(1)
        assert t.q == 1 and np.array_equal(t.rows, a.rows[:, :2])
        with pytest.raises(ValueError):
            t.truncate(2)

    def test_lag_not_multiple(self):
        with pytest.raises(ValueError):
            augment(Path(0.1, np.zeros(10)), q=1, lag_h=0.15)

    def test_too_short(self):
        with pytest.raises(ValueError):
            augment(Path(0.1, np.zeros(5)), q=1, n_rows=5)

    def test_subsample(self):
        s = subsample(Path(0.01, np.arange(101.0)), 10)
        assert s.step == pytest.approx(0.1) and s.values[-1] == 100

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 50), st.integers(0, 4), st.integers(1, 5), st.integers(1, 5), st.integers(0, 20))
    def test_observe_length_budget(self, n_rows, q, k0, lag, burn):
        steps = fine_steps_needed(n_rows, q, k0, lag, burn)
        noise = sample_fbm(0.5, 0.01, steps, RngStream(0))
        obs, fine = observe(ou_drift(), ThetaVector.ou(1, 1, 0.5), noise, k0, n_rows, q, 0.01 * k0 * lag, burn)
        assert isinstance(obs, AugmentedPath) and obs.rows.shape == (n_rows, q + 1)
        assert len(fine) == steps + 1


class TestTangents:
    @pytest.mark.parametrize("drift", [ou_drift(), perturbed_ou_drift(0.2)])
    def test_xi_tangent_matches_finite_difference(self, drift):
        th = ThetaVector.ou(2.0, 0.5, 0.7)
        noise = sample_fbm(0.7, 0.01, 500, RngStream(4))
        base = euler_simulate(drift, th, noise, y0=0.5)
        eps = 1e-6
        up = euler_simulate(drift, ThetaVector.ou(2 + eps, 0.5, 0.7), noise, y0=0.5).values
        dn = euler_simulate(drift, ThetaVector.ou(2 - eps, 0.5, 0.7), noise, y0=0.5).values
        fd = (up - dn) / (2 * eps)
        assert np.allclose(tangent_xi(drift, th, base).values[:, 0], fd, atol=1e-7)

    @pytest.mark.parametrize("drift", [ou_drift(), perturbed_ou_drift(0.2)])
    def test_sigma_tangent_matches_finite_difference(self, drift):
        th = ThetaVector.ou(2.0, 0.5, 0.7)
        noise = sample_fbm(0.7, 0.01, 500, RngStream(5))
        base = euler_simulate(drift, th, noise)
        eps = 1e-6
        up = euler_simulate(drift, ThetaVector.ou(2, 0.5 + eps, 0.7), noise).values
        dn = euler_simulate(drift, ThetaVector.ou(2, 0.5 - eps, 0.7), noise).values
        fd = (up - dn) / (2 * eps)
        assert np.allclose(tangent_sigma(drift, th, base, noise).values, fd, atol=1e-7)

    def test_linear_sigma_tangent_is_unit_path(self):
        # For a linear drift the path is linear in sigma, so dY/dsigma = Y / sigma when y0 = 0.
        th = ThetaVector.ou(2.0, 0.5, 0.7)
        noise = sample_fbm(0.7, 0.01, 300, RngStream(6))
        base = euler_simulate(ou_drift(), th, noise)
        assert np.allclose(tangent_sigma(ou_drift(), th, base, noise).values, base.values / 0.5)
