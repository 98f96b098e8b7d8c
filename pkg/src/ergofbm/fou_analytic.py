"""Stationary law of the fractional Ornstein-Uhlenbeck process.

For dU = -xi U dt + sigma dB^H the stationary solution is a centered Gaussian
process with autocovariance

    r(tau) = sigma^2 C(H) int_0^inf cos(tau x) x^(1-2H) / (xi^2 + x^2) dx,
    C(H)   = Gamma(2H + 1) sin(pi H) / pi.

After x = xi*y this is sigma^2 C(H) xi^(-2H) J(xi*tau) with
J(w) = int_0^inf cos(w y) y^(1-2H) / (1 + y^2) dy, evaluated by
:func:`ergofbm.quadrature.fourier_power_integral`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np
from scipy import special

from .quadrature import (
    DEFAULT_SPEC,
    QuadratureConvergenceError,
    QuadratureSpec,
    fourier_power_integral,
)

__all__ = [
    "OUParams",
    "StationaryGaussian",
    "QuadratureSpec",
    "QuadratureConvergenceError",
    "NotPSDError",
    "stationary_variance",
    "stationary_autocov",
    "autocov_lags",
    "augmented_cov",
    "grad_augmented_cov",
    "injectivity_map",
    "injectivity_gap",
    "IdentifiabilityReport",
    "identifiability_margin",
    "xi_threshold",
    "PARAM_NAMES",
]

PARAM_NAMES = ("xi", "sigma", "hurst")
PSD_TOL = 1e-12


class NotPSDError(ArithmeticError):
    """Augmented covariance has an eigenvalue below -PSD_TOL * trace."""


def _check(xi: float, sigma: float, hurst: float) -> None:
    if not (np.isfinite(xi) and xi > 0):
        raise ValueError(f"xi must be positive, got {xi!r}")
    if not (np.isfinite(sigma) and sigma > 0):
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    if not (np.isfinite(hurst) and 0 < hurst < 1):
        raise ValueError(f"hurst must lie in (0, 1), got {hurst!r}")


@dataclass(frozen=True)
class OUParams:
    """Parameters of the scalar fOU process and of the augmented observation.

    Attributes:
        xi: mean-reversion rate.
        sigma: noise scale.
        hurst: Hurst index of the driving fBm.
        lag_h: lag between augmented coordinates.
        q: number of lagged increments (dimension is q + 1).
    """

    xi: float
    sigma: float
    hurst: float
    lag_h: float = 0.1
    q: int = 0

    def __post_init__(self):
        _check(self.xi, self.sigma, self.hurst)
        if not (np.isfinite(self.lag_h) and self.lag_h > 0):
            raise ValueError("lag_h must be positive")
        if int(self.q) != self.q or self.q < 0:
            raise ValueError("q must be a non-negative integer")

    def with_values(self, **kw) -> "OUParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class StationaryGaussian:
    """Centered Gaussian law N(0, cov) of dimension q + 1."""

    cov: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.cov.shape[0]

    def cf(self, phi: np.ndarray) -> np.ndarray:
        """Characteristic function at rows of ``phi`` (shape (m, dim))."""
        phi = np.atleast_2d(phi)
        return np.exp(-0.5 * np.einsum("mi,ij,mj->m", phi, self.cov, phi))


def _coef(hurst: float) -> float:
    return special.gamma(2 * hurst + 1) * math.sin(math.pi * hurst) / math.pi


def stationary_variance(xi: float, sigma: float, hurst: float) -> float:
    """sigma^2 H Gamma(2H) xi^(-2H)."""
    _check(xi, sigma, hurst)
    return sigma**2 * hurst * special.gamma(2 * hurst) * xi ** (-2 * hurst)


def _j(omega: float, hurst: float, kind: str, spec: QuadratureSpec) -> float:
    alpha = 1.0 - 2.0 * hurst
    return fourier_power_integral(omega, alpha, kind, "cos", spec)


def stationary_autocov(
    xi: float, sigma: float, hurst: float, tau: float, spec: QuadratureSpec = DEFAULT_SPEC
) -> float:
    """Stationary autocovariance r(tau) by oscillatory quadrature.

    Raises:
        QuadratureConvergenceError: if the oscillatory tail does not converge.
    """
    _check(xi, sigma, hurst)
    if not (np.isfinite(tau) and tau >= 0):
        raise ValueError("tau must be non-negative")
    return sigma**2 * _coef(hurst) * xi ** (-2 * hurst) * _j(xi * tau, hurst, "rational", spec)


def autocov_lags(params: OUParams, spec: QuadratureSpec = DEFAULT_SPEC) -> np.ndarray:
    """[r(0), r(h), ..., r(qh)] with r(0) taken from the closed form."""
    p = params
    r = np.empty(p.q + 1)
    r[0] = stationary_variance(p.xi, p.sigma, p.hurst)
    for k in range(1, p.q + 1):
        r[k] = stationary_autocov(p.xi, p.sigma, p.hurst, k * p.lag_h, spec)
    return r


def _assemble(r: np.ndarray) -> np.ndarray:
    """Covariance of (U_0, U_h - U_0, ..., U_qh - U_0) from lag covariances."""
    q = len(r) - 1
    idx = np.arange(1, q + 1)
    cov = np.empty((q + 1, q + 1))
    cov[0, 0] = r[0]
    cov[0, 1:] = cov[1:, 0] = r[idx] - r[0]
    cov[1:, 1:] = r[np.abs(idx[:, None] - idx[None, :])] - r[idx][:, None] - r[idx][None, :] + r[0]
    return cov


def _psd_repair(cov: np.ndarray) -> np.ndarray:
    if cov.shape[0] == 1:
        if cov[0, 0] < 0:
            raise NotPSDError(f"negative variance {cov[0, 0]}")
        return cov
    w, v = np.linalg.eigh(cov)
    floor = -PSD_TOL * np.trace(cov)
    if w.min() < floor:
        raise NotPSDError(f"augmented covariance has eigenvalue {w.min():.3e} < {floor:.3e}")
    if w.min() >= 0:
        return cov
    fixed = (v * np.maximum(w, 0.0)) @ v.T
    return 0.5 * (fixed + fixed.T)


def augmented_cov(params: OUParams, spec: QuadratureSpec = DEFAULT_SPEC) -> StationaryGaussian:
    """Stationary covariance of (U_0, U_h - U_0, ..., U_qh - U_0).

    Raises:
        NotPSDError: if the assembled matrix is materially indefinite.
    """
    return StationaryGaussian(_psd_repair(_assemble(autocov_lags(params, spec))))


def _dr_lags(params: OUParams, spec: QuadratureSpec) -> dict[str, np.ndarray]:
    p = params
    xi, sigma, hurst = p.xi, p.sigma, p.hurst
    c = _coef(hurst)
    dlogc = 2 * special.digamma(2 * hurst + 1) + math.pi / math.tan(math.pi * hurst)
    scale = xi ** (-2 * hurst)
    log_xi = math.log(xi)
    r = np.empty(p.q + 1)
    d_xi = np.empty(p.q + 1)
    d_h = np.empty(p.q + 1)
    r[0] = stationary_variance(xi, sigma, hurst)
    d_xi[0] = -2 * hurst * r[0] / xi
    d_h[0] = r[0] * (1 / hurst + 2 * special.digamma(2 * hurst) - 2 * log_xi)
    for k in range(1, p.q + 1):
        omega = xi * k * p.lag_h
        j1 = _j(omega, hurst, "rational", spec)
        j2 = _j(omega, hurst, "rational2", spec)
        jl = _j(omega, hurst, "log", spec)
        r[k] = sigma**2 * c * scale * j1
        d_xi[k] = -2 * sigma**2 * c * xi ** (-1 - 2 * hurst) * j2
        d_h[k] = sigma**2 * scale * (c * dlogc * j1 - 2 * c * (log_xi * j1 + jl))
    return {"xi": d_xi, "sigma": 2 * r / sigma, "hurst": d_h}


def grad_augmented_cov(
    params: OUParams,
    spec: QuadratureSpec = DEFAULT_SPEC,
    names: Iterable[str] = PARAM_NAMES,
) -> dict[str, np.ndarray]:
    """Partial derivatives of the augmented covariance, keyed by parameter name.

    d/dsigma is analytic (the matrix scales like sigma^2); d/dxi and d/dH use
    quadratures of the differentiated spectral integrand.
    """
    names = tuple(names)
    for n in names:
        if n not in PARAM_NAMES:
            raise ValueError(f"unknown parameter {n!r}")
    dr = _dr_lags(params, spec)
    # The assembly is linear in the lag covariances.
    return {n: _assemble(dr[n]) for n in names}


def injectivity_map(params: OUParams, spec: QuadratureSpec = DEFAULT_SPEC) -> np.ndarray:
    """(r(0), r(h)) for the given parameters."""
    p = params
    return np.array(
        [
            stationary_variance(p.xi, p.sigma, p.hurst),
            stationary_autocov(p.xi, p.sigma, p.hurst, p.lag_h, spec),
        ]
    )


def injectivity_gap(
    free: tuple[str, str],
    grid: Mapping[str, np.ndarray],
    base: OUParams,
    spec: QuadratureSpec = DEFAULT_SPEC,
) -> float:
    """Smallest sup-norm distance between images of distinct grid points.

    Args:
        free: the two parameters varied over the grid.
        grid: 1-D value arrays for each free parameter.
        base: supplies the fixed parameter and the lag.
    """
    if len(free) != 2 or free[0] == free[1] or any(f not in PARAM_NAMES for f in free):
        raise ValueError("exactly two distinct free parameters are required")
    a, b = (np.asarray(grid[f], dtype=float) for f in free)
    pts = np.array(
        [injectivity_map(base.with_values(**{free[0]: u, free[1]: v}), spec) for u in a for v in b]
    )
    best = math.inf
    for i in range(len(pts) - 1):
        d = np.abs(pts[i + 1 :] - pts[i]).max(axis=1).min()
        best = min(best, float(d))
    return best


def xi_threshold(hurst) -> np.ndarray:
    """exp(1/(2H) + psi(2H)); the H-derivative of r(0) vanishes at xi equal to this."""
    hurst = np.asarray(hurst, dtype=float)
    return np.exp(1 / (2 * hurst) + special.digamma(2 * hurst))


@dataclass(frozen=True)
class IdentifiabilityReport:
    """Outcome of a derivative-sign scan.

    Attributes:
        case: free parameter pair, one of "sigma_hurst", "xi_hurst", "xi_sigma".
        lag_h: lag used.
        min_derivative, max_derivative: extremes of the derivative over the grid.
        expected_sign: +1 when the derivative should be positive, -1 otherwise.
        passes: whether every grid value has the expected strict sign.
        xi_condition: whether xi stays clear of exp(1/(2H) + psi(2H)) over the
            H range (None when H is not free).
    """

    case: str
    lag_h: float
    min_derivative: float
    max_derivative: float
    expected_sign: int
    passes: bool
    xi_condition: bool | None

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "lag_h": self.lag_h,
            "min_derivative": self.min_derivative,
            "max_derivative": self.max_derivative,
            "expected_sign": self.expected_sign,
            "passes": self.passes,
            "xi_condition": self.xi_condition,
        }


CASES = ("sigma_hurst", "xi_hurst", "xi_sigma")


def _g_prime(xi: float, hurst: float, h: float, spec: QuadratureSpec) -> float:
    """d/dH of sin(pi H) J(xi h); J(0)-terms subtracted since sin(pi H) J(0) = pi/2."""
    omega = xi * h
    s, c = math.sin(math.pi * hurst), math.cos(math.pi * hurst)
    dj1 = _j(omega, hurst, "rational", spec) - _j(0.0, hurst, "rational", spec)
    djl = _j(omega, hurst, "log", spec) - _j(0.0, hurst, "log", spec)
    return math.pi * c * dj1 - 2 * s * djl


def _ga_prime(xi: float, hurst: float, h: float, spec: QuadratureSpec) -> float:
    """Derivative when xi is tied to H through a fixed stationary variance."""
    dkappa = (xi / hurst) * (1 / (2 * hurst) + special.digamma(2 * hurst) - math.log(xi))
    ks = fourier_power_integral(xi * h, 2.0 - 2.0 * hurst, "rational", "sin", spec)
    return _g_prime(xi, hurst, h, spec) - math.sin(math.pi * hurst) * dkappa * h * ks


def _gt_prime(xi: float, hurst: float, h: float, spec: QuadratureSpec) -> float:
    return -h * fourier_power_integral(xi * h, 2.0 - 2.0 * hurst, "rational", "sin", spec)


def identifiability_margin(
    case: str,
    grid: Mapping[str, Iterable[float]],
    h: float,
    spec: QuadratureSpec = DEFAULT_SPEC,
) -> IdentifiabilityReport:
    """Scan the sign of the injectivity derivative over a (xi, hurst) grid.

    Args:
        case: "sigma_hurst" (g'(H) > 0 expected), "xi_hurst" (g_a'(H) > 0)
            or "xi_sigma" (d/dxi < 0).
        grid: mapping with "xi" and "hurst" value lists; the Cartesian product
            is scanned. sigma never enters the derivative.
        h: lag in (0, 1).

    Returns:
        A report; a sign failure gives ``passes=False`` rather than an error.
    """
    if case not in CASES:
        raise ValueError(f"case must be one of {CASES}")
    if not 0 < h < 1:
        raise ValueError("h must lie in (0, 1)")
    xis = np.atleast_1d(np.asarray(grid["xi"], dtype=float))
    hs = np.atleast_1d(np.asarray(grid["hurst"], dtype=float))
    for x in xis:
        for H in hs:
            _check(x, 1.0, H)
    fn = {"sigma_hurst": _g_prime, "xi_hurst": _ga_prime, "xi_sigma": _gt_prime}[case]
    vals = np.array([fn(x, H, h, spec) for x in xis for H in hs])
    sign = -1 if case == "xi_sigma" else 1
    passes = bool(np.all(sign * vals > 0))
    xi_cond = None
    if case != "xi_sigma":
        dense = np.linspace(hs.min(), hs.max(), 201)
        thr = xi_threshold(dense)
        xi_cond = bool(np.all(xis > thr.max()) or np.all(xis < thr.min()))
    return IdentifiabilityReport(
        case=case,
        lag_h=float(h),
        min_derivative=float(vals.min()),
        max_derivative=float(vals.max()),
        expected_sign=sign,
        passes=passes,
        xi_condition=xi_cond,
    )
