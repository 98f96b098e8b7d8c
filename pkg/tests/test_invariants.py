"""Cross-module properties: ergodicity, contraction, scaling and metric structure."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from conftest import THETA0, ou_observations
from ergofbm.cf_distance import (
    CFConfig,
    cf_distance_sq_mc,
    cf_distance_sq_quadrature,
    gaussian_cf,
    kernel_moment,
    wasserstein_1d,
)
from ergofbm.estimator import EstimationProblem, SGDConfig, estimate_1d, estimate_sgd
from ergofbm.fbm import fbm_covariance, sample_fbm
from ergofbm.fou_analytic import stationary_autocov, stationary_variance
from ergofbm.rng import RngStream
from ergofbm.sde_sim import (
    AugmentedPath,
    ThetaBox,
    ThetaVector,
    augment,
    euler_simulate,
    ou_drift,
    perturbed_ou_drift,
    subsample,
)

hurst = st.floats(0.05, 0.95)
times = st.floats(0.0, 50.0)


class TestFbmProperties:
    @given(times, times, hurst)
    def test_symmetric(self, s, t, H):
        assert fbm_covariance(s, t, H) == fbm_covariance(t, s, H)

    @given(times, times, st.floats(0.5, 0.95))
    def test_nonnegative_for_persistent_regime(self, s, t, H):
        assert fbm_covariance(s, t, H) >= 0

    def test_byte_identical_grids(self):
        a = sample_fbm(0.37, 0.01, 999, RngStream(11, 4, (2,)))
        b = sample_fbm(0.37, 0.01, 999, RngStream(11, 4, (2,)))
        assert a.values.tobytes() == b.values.tobytes()

    @pytest.mark.parametrize("H", [0.3, 0.7])
    def test_self_similarity(self, H):
        # c^{-H} B at step c*dt has the law of B at step dt.
        c, n, paths = 4.0, 16, 3000
        small = np.array([sample_fbm(H, 0.1, n, RngStream(1, i)).values for i in range(paths)])
        big = np.array([sample_fbm(H, 0.4, n, RngStream(2, i)).values for i in range(paths)]) * c**-H
        for k in (1, 4, 16):
            m_small, m_big = np.mean(small[:, k] ** 2), np.mean(big[:, k] ** 2)
            se = math.sqrt(2.0 / paths) * fbm_covariance(0.1 * k, 0.1 * k, H)
            assert abs(m_small - m_big) < 4 * math.sqrt(2) * se
        cov_s = np.mean(small[:, 4] * small[:, 16])
        cov_b = np.mean(big[:, 4] * big[:, 16])
        assert abs(cov_s - cov_b) < 4 * math.sqrt(2) * math.sqrt(2.0 / paths) * fbm_covariance(1.6, 1.6, H)


BOX_POINTS = [THETA0, (0.5, 1.5, 0.2), (0.5, 1.5, 0.95), (4.0, 0.1, 0.2), (4.0, 1.5, 0.95)]


class TestEulerProperties:
    @pytest.mark.parametrize("theta", BOX_POINTS)
    def test_ergodic_mean_bounded(self, theta):
        # (1/n) sum |Y_kh|^2 stays below 10 times the stationary variance for n >= 100, over 100 seeds.
        th = ThetaVector.ou(*theta)
        bound = 10 * stationary_variance(*theta)
        worst = 0.0
        for seed in range(100):
            noise = sample_fbm(th.hurst, 0.01, 20_000, RngStream(seed, 9))
            y = subsample(euler_simulate(ou_drift(), th, noise), 10).values[1:]
            running = np.cumsum(y**2) / np.arange(1, len(y) + 1)
            worst = max(worst, running[99:].max())
        assert worst < bound

    @pytest.mark.parametrize("drift", [ou_drift(), perturbed_ou_drift(0.2)])
    @pytest.mark.parametrize("frac", [0.25, 0.9])
    def test_contraction(self, drift, frac):
        step = frac * drift.gamma_max
        th = ThetaVector.ou(1.3, 0.8, 0.6)
        noise = sample_fbm(0.6, step, 3000, RngStream(3))
        a = euler_simulate(drift, th, noise, y0=2.0).values
        b = euler_simulate(drift, th, noise, y0=-1.0).values
        rho = drift.contraction_factor(step)
        bound = 3.0 * rho ** (np.arange(len(a)) / 2)
        assert np.all(np.abs(a - b) <= bound * (1 + 1e-12) + 1e-15)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 10), st.integers(0, 3), st.integers(1, 4))
    def test_augment_commutes_with_subsample(self, k0, q, lag):
        noise = sample_fbm(0.6, 0.01, 400, RngStream(0))
        fine = euler_simulate(ou_drift(), ThetaVector.ou(2, 0.5, 0.6), noise).values
        coarse = subsample(euler_simulate(ou_drift(), ThetaVector.ou(2, 0.5, 0.6), noise), k0)
        aug = augment(coarse, q, lag_h=coarse.step * lag)
        for i in range(aug.n):
            base = fine[i * k0]
            direct = [base] + [fine[(i + j * lag) * k0] - base for j in range(1, q + 1)]
            assert np.allclose(aug.rows[i], direct, rtol=0, atol=1e-15)

    @pytest.mark.slow
    def test_simulated_matches_closed_form(self):
        th = ThetaVector.ou(*THETA0)
        noise = sample_fbm(0.7, 1e-3, 1_020_000, RngStream(0, 7))
        y = euler_simulate(ou_drift(), th, noise).values[20_000:]
        lag = 100  # h = 0.1
        for stat, target in (
            (y[:-lag] ** 2, stationary_variance(*THETA0)),
            (y[:-lag] * y[lag:], stationary_autocov(*THETA0, 0.1)),
        ):
            batches = stat[: len(stat) // 20 * 20].reshape(20, -1).mean(axis=1)
            se = batches.std(ddof=1) / math.sqrt(20)
            assert abs(stat.mean() - target) < 3 * se


class TestAutocovDecay:
    @pytest.mark.parametrize("H", [0.2, 0.3, 0.7, 0.95])
    @pytest.mark.parametrize("xi", [0.5, 4.0])
    def test_power_law_tail(self, H, xi):
        # r(tau)/r(0) -> (2H - 1)/Gamma(2H) (xi tau)^(2H - 2), so r vanishes at infinity.
        ratios = []
        for w in (50.0, 500.0, 5000.0):
            r = stationary_autocov(xi, 1.0, H, w / xi) / stationary_variance(xi, 1.0, H)
            ratios.append(r)
            asym = (2 * H - 1) / special.gamma(2 * H) * w ** (2 * H - 2)
            assert r == pytest.approx(asym, rel=5e-3)
        assert abs(ratios[2]) < abs(ratios[1]) < abs(ratios[0])

    @pytest.mark.parametrize("xi", [0.5, 2.0, 4.0])
    def test_exponential_at_half(self, xi):
        assert stationary_autocov(xi, 1.0, 0.5, 50 / xi) <= 1e-3 * stationary_variance(xi, 1.0, 0.5)


def _gcf(v):
    return lambda c: gaussian_cf([[v]], c)


def _kernel_ft(delta):
    d = np.abs(delta)
    return (1 + d) * np.exp(-d)


def empirical_pair_sq(a, b):
    """Exact squared CF distance (p = 2) between empirical measures via the Fourier transform of g_2."""
    a, b = np.asarray(a), np.asarray(b)
    k = lambda x, y: _kernel_ft(x[:, None] - y[None, :]).mean()
    return k(a, a) + k(b, b) - 2 * k(a, b)


class TestDistanceProperties:
    @settings(max_examples=15, deadline=None)
    @given(st.floats(0.05, 4), st.floats(0.05, 4), st.floats(0.05, 4))
    def test_triangle_inequality(self, u, v, w):
        d = lambda x, y: math.sqrt(max(cf_distance_sq_quadrature(_gcf(x), _gcf(y)), 0.0))
        assert d(u, w) <= d(u, v) + d(v, w) + 1e-9

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=12), st.data())
    def test_domination_by_w1(self, a, data):
        b = data.draw(st.lists(st.floats(-5, 5), min_size=len(a), max_size=len(a)))
        d2 = empirical_pair_sq(a, b)
        assert d2 <= kernel_moment(2.0, 2) * wasserstein_1d(a, b) ** 2 + 1e-12

    def test_closed_form_agrees_with_quadrature(self):
        a, b = [0.0, 1.0, -0.5], [0.3, 2.0, 0.1]
        cf = lambda pts: (lambda e: np.mean(np.exp(1j * np.outer(e, pts)), axis=1))
        assert cf_distance_sq_quadrature(cf(a), cf(b)) == pytest.approx(empirical_pair_sq(a, b), rel=1e-7)

    def test_first_moment_form_is_not_a_bound(self):
        # Two atoms at distance 1: d^2 = 2(1 - 2/e) exceeds (E|chi|)^2 W1^2 = 4/pi^2.
        d2 = empirical_pair_sq([0.0], [1.0])
        assert d2 > kernel_moment(2.0, 1) ** 2 * 1.0

    def test_mc_standard_error_rate(self):
        ms = np.array([1_000, 10_000, 100_000])
        ses = []
        for m in ms:
            _, se = cf_distance_sq_mc(_gcf(1.0), _gcf(2.5), CFConfig(mc_samples=int(m), rng=RngStream(5)),
                                      return_stderr=True)
            ses.append(se)
        slope = np.polyfit(np.log(ms), np.log(ses), 1)[0]
        assert abs(slope + 0.5) <= 0.1


class TestEstimatorProperties:
    def test_sgd_iterates_stay_in_box(self):
        obs = ou_observations(0).truncate(1)
        box = ThetaBox.ou(xi=(1.0, 1.5), sigma=(0.6, 0.9))
        pr = EstimationProblem(obs, ThetaVector.ou(*THETA0, free=("xi", "sigma")), box=box, cf=CFConfig(dim=2))
        tr = estimate_sgd(pr, SGDConfig(iterations=60, init_theta=ThetaVector.ou(3, 0.1, 0.7),
                                       calibration_fraction=1.0, pin_fraction=1.0))
        assert all(box.contains(t) for t in tr.thetas)

    def test_trace_deterministic(self):
        def run():
            obs = ou_observations(1).truncate(1)
            pr = EstimationProblem(obs, ThetaVector.ou(*THETA0, free=("sigma", "hurst")), cf=CFConfig(dim=2))
            return estimate_sgd(pr, SGDConfig(iterations=15))

        a, b = run(), run()
        assert a.thetas == b.thetas and a.losses.tobytes() == b.losses.tobytes()

    @pytest.mark.parametrize("c", [0.5, 3.0, 10.0])
    def test_sigma_scale_equivariance(self, c):
        obs = ou_observations(2).truncate(0)
        base = EstimationProblem(obs, ThetaVector.ou(*THETA0, free=("sigma",)), distance="w1")
        scaled_obs = AugmentedPath(obs.lag_h, obs.q, c * obs.rows, obs.step)
        scaled = EstimationProblem(scaled_obs, ThetaVector.ou(2.0, c * 0.5, 0.7, free=("sigma",)), distance="w1",
                                   box=ThetaBox.ou(sigma=(0.1 * c, 1.5 * c)))
        s1 = estimate_1d(base, tol=1e-4).value
        s2 = estimate_1d(scaled, tol=1e-4 * c).value
        assert abs(s2 - c * s1) <= 1e-4 * c
