import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ergofbm import quadrature
from ergofbm.quadrature import QuadratureConvergenceError, QuadratureSpec, fourier_power_integral

mp.mp.dps = 30

WEIGHTS = {
    "rational": lambda y: 1 / (1 + y**2),
    "rational2": lambda y: 1 / (1 + y**2) ** 2,
    "log": lambda y: mp.log(y) / (1 + y**2),
}


def reference(omega, alpha, weight, trig):
    """High-precision value: tanh-sinh up to the first zero, then mpmath.quadosc."""
    f = mp.cos if trig == "cos" else mp.sin
    w = WEIGHTS[weight]
    omega, alpha = mp.mpf(omega), mp.mpf(alpha)
    g = lambda y: f(omega * y) * y**alpha * w(y)
    if omega == 0:
        return float(mp.quad(g, [0, 1, mp.inf]))
    z0 = mp.pi / (2 * omega) if trig == "cos" else mp.pi / omega
    return float(mp.quad(g, [0, min(1, z0), z0]) + mp.quadosc(g, [z0, mp.inf], omega=omega))


CASES = [
    (0.2, 0.7, "rational", "cos"),
    (0.2, 0.3, "rational", "cos"),
    (4.0, 0.7, "log", "cos"),
    (0.2, 0.1, "rational", "cos"),
    (1.0, 0.7, "rational2", "cos"),
    (0.1, 0.6, "rational", "sin"),
    (0.2, 0.3, "rational", "sin"),
    (50.0, 0.7, "rational", "cos"),
    (0.05, 0.55, "log", "cos"),
    (0.0, 0.7, "rational", "cos"),
    (0.0, 0.3, "log", "cos"),
    (0.0, 0.4, "rational2", "cos"),
]


class TestAgainstMpmath:
    @pytest.mark.parametrize("omega,H,weight,trig", CASES)
    def test_matches_reference(self, omega, H, weight, trig):
        alpha = (1 - 2 * H) if trig == "cos" else (2 - 2 * H)
        val = fourier_power_integral(omega, alpha, weight, trig)
        assert val == pytest.approx(reference(omega, alpha, weight, trig), rel=1e-8)

    def test_nearly_singular_exponent(self):
        # alpha = -0.9: the substitution y = u^(1/(1+alpha)) removes the singularity.
        om, a = mp.mpf("0.2"), mp.mpf("-0.9")
        b = 1 / (1 + a)
        z0 = mp.pi / (2 * om)
        head = mp.quad(lambda u: b * mp.cos(om * u**b) / (1 + u ** (2 * b)), mp.linspace(0, z0 ** (1 + a), 20))
        tail = mp.quadosc(lambda y: mp.cos(om * y) * y**a / (1 + y**2), [z0, mp.inf], omega=om)
        assert fourier_power_integral(0.2, -0.9) == pytest.approx(float(head + tail), rel=1e-8)


class TestClosedForms:
    @pytest.mark.parametrize("omega", [0.0, 0.01, 0.3, 2.0, 10.0])
    def test_exponential_at_alpha_zero(self, omega):
        assert fourier_power_integral(omega, 0.0) == pytest.approx(math.pi / 2 * math.exp(-omega), rel=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.05, 0.95))
    def test_reflection_identity_at_zero(self, H):
        val = fourier_power_integral(0.0, 1 - 2 * H)
        assert val * math.sin(math.pi * H) == pytest.approx(math.pi / 2, rel=1e-9)

    def test_sine_at_zero_frequency(self):
        assert fourier_power_integral(0.0, 0.5, trig="sin") == 0.0


class TestValidation:
    @pytest.mark.parametrize("rel_tol", [1e-13, 1e-3])
    def test_spec_tolerance_range(self, rel_tol):
        with pytest.raises(ValueError):
            QuadratureSpec(rel_tol=rel_tol)

    def test_bad_split(self):
        with pytest.raises(ValueError):
            QuadratureSpec(split_point=0.0)

    @pytest.mark.parametrize("kw", [dict(weight="exp"), dict(trig="tan"), dict(omega=-1.0), dict(alpha=-1.0)])
    def test_bad_arguments(self, kw):
        args = dict(omega=1.0, alpha=0.2)
        args.update(kw)
        with pytest.raises(ValueError):
            fourier_power_integral(**args)

    def test_divergent_at_infinity(self):
        with pytest.raises(ValueError):
            fourier_power_integral(0.0, 1.5)

    def test_convergence_error_when_tail_stalls(self, monkeypatch):
        monkeypatch.setattr(quadrature, "_euler_sum", lambda t: np.cumsum((-1.0) ** np.arange(len(t))))
        with pytest.raises(QuadratureConvergenceError):
            fourier_power_integral(2.0, 0.4, spec=QuadratureSpec(max_half_periods=200))

    def test_large_frequency_not_limited_by_budget(self):
        # Direct summation before the accelerated tail does not count against the budget.
        val = fourier_power_integral(2000.0, 0.0, spec=QuadratureSpec(max_half_periods=100))
        assert val == pytest.approx(math.pi / 2 * math.exp(-2000.0), abs=1e-12)

    def test_looser_tolerance_still_close(self):
        spec = QuadratureSpec(rel_tol=1e-5)
        assert fourier_power_integral(0.3, 0.0, spec=spec) == pytest.approx(math.pi / 2 * math.exp(-0.3), rel=1e-5)
