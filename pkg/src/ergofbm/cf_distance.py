"""Characteristic-function distance, its spectral kernel, and 1-D Wasserstein.

The squared distance between laws mu and nu on R^d is

    d_CF,p(mu, nu) = int |mu^(chi) - nu^(chi)|^2 g_p(chi) dchi,
    g_p(chi)       = c_p (1 + |chi|^2)^(-p),

estimated here by Monte Carlo with chi ~ g_p, or by deterministic quadrature
in dimension one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special, stats

from .rng import RngStream, as_generator

__all__ = [
    "CFConfig",
    "EmpiricalMeasure",
    "normalizing_constant",
    "gp_density",
    "sample_gp",
    "empirical_cf",
    "gaussian_cf",
    "cf_distance_sq_mc",
    "cf_distance_sq_quadrature",
    "kernel_moment",
    "wasserstein_1d",
    "wasserstein_1d_gaussian",
]

W1_QUANTILE_GRID = 10_000
_CHUNK = 1 << 22


def normalizing_constant(p: float, d: int = 1) -> float:
    """c_p = Gamma(p) / (pi^(d/2) Gamma(p - d/2)), making g_p a probability density."""
    if d < 1 or int(d) != d:
        raise ValueError("d must be a positive integer")
    if not p > d / 2:
        raise ValueError(f"p must exceed d/2 = {d / 2}, got {p}")
    return math.exp(special.gammaln(p) - special.gammaln(p - d / 2) - (d / 2) * math.log(math.pi))


def gp_density(chi, p: float, d: int = 1) -> np.ndarray:
    """g_p evaluated at points ``chi`` of shape (..., d) (or scalars when d == 1)."""
    chi = np.asarray(chi, dtype=float)
    sq = chi**2 if d == 1 and (chi.ndim == 0 or chi.shape[-1] != 1) else np.sum(chi**2, axis=-1)
    return normalizing_constant(p, d) * (1.0 + sq) ** (-p)


@dataclass(frozen=True)
class CFConfig:
    """Kernel parameters and Monte Carlo controls for the CF distance.

    Attributes:
        dim: dimension of the observations.
        p: kernel exponent, must exceed dim/2 so that g_p is integrable.
        mc_samples: number of spectral draws per estimate.
        rng: stream the spectral draws come from.
        c_p: cached normalizing constant (derived).
    """

    dim: int = 1
    p: float = 2.0
    mc_samples: int = 1000
    rng: RngStream = field(default_factory=lambda: RngStream(0))
    c_p: float = field(init=False)

    def __post_init__(self):
        if self.dim < 1 or int(self.dim) != self.dim:
            raise ValueError("dim must be a positive integer")
        if not self.p > self.dim / 2:
            raise ValueError(f"p must exceed dim/2, got p={self.p}, dim={self.dim}")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be positive")
        object.__setattr__(self, "c_p", normalizing_constant(self.p, self.dim))


def sample_gp(config: CFConfig, size: int | None = None, rng=None) -> np.ndarray:
    """Draws with density g_p: chi = R u, u uniform on the sphere, R^2 = G1 / G2.

    G1 ~ Gamma(d/2) and G2 ~ Gamma(p - d/2) are independent, so R^2 is
    Beta-prime(d/2, p - d/2).

    Args:
        config: kernel parameters; ``config.rng`` is used when ``rng`` is None.
        size: number of draws; None returns a single point of shape (d,).
        rng: Generator or RngStream overriding ``config.rng``.

    Returns:
        Array of shape (size, d) or (d,).
    """
    gen = as_generator(config.rng if rng is None else rng)
    m = 1 if size is None else int(size)
    d = config.dim
    g1 = gen.standard_gamma(d / 2, size=m)
    g2 = gen.standard_gamma(config.p - d / 2, size=m)
    u = gen.standard_normal((m, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    chi = np.sqrt(g1 / g2)[:, None] * u
    return chi[0] if size is None else chi


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniform measure on the rows of ``points`` (shape (n, d))."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("empirical measure needs a nonempty (n, d) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("empirical measure points must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def cf_parts(self, chi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Mean of cos<chi, x> and sin<chi, x> for each row of ``chi``."""
        chi = np.atleast_2d(np.asarray(chi, dtype=float))
        if chi.shape[1] != self.dim:
            raise ValueError(f"chi has dimension {chi.shape[1]}, measure has {self.dim}")
        re = np.empty(chi.shape[0])
        im = np.empty(chi.shape[0])
        rows = max(1, _CHUNK // self.n)
        for s in range(0, chi.shape[0], rows):
            arg = self.points @ chi[s : s + rows].T
            re[s : s + rows] = np.cos(arg).mean(axis=0)
            im[s : s + rows] = np.sin(arg).mean(axis=0)
        return re, im

    def cf(self, chi: np.ndarray) -> np.ndarray:
        re, im = self.cf_parts(chi)
        return re + 1j * im


def _as_measure(measure) -> EmpiricalMeasure:
    return measure if isinstance(measure, EmpiricalMeasure) else EmpiricalMeasure(measure)


def _batch(chi, d: int) -> tuple[np.ndarray, bool]:
    """Reshape ``chi`` to (m, d); flag whether a single point was given.

    For d == 1 a 1-D array is a batch of scalars; for d > 1 it is one point.
    """
    arr = np.asarray(chi, dtype=float)
    if arr.ndim == 0:
        single, arr = True, arr.reshape(1, 1)
    elif arr.ndim == 1:
        single = d > 1
        arr = arr[None, :] if single else arr[:, None]
    else:
        single = False
    if arr.ndim != 2 or arr.shape[1] != d:
        raise ValueError(f"chi does not match dimension {d}")
    return arr, single


def empirical_cf(measure, chi):
    """(1/n) sum_k exp(i <chi, x_k>); scalar for a single chi, array for a batch."""
    m = _as_measure(measure)
    batch, single = _batch(chi, m.dim)
    out = m.cf(batch)
    return complex(out[0]) if single else out


def gaussian_cf(cov, chi):
    """exp(-chi^T cov chi / 2) for a centered Gaussian; scalar or batched."""
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance must be square")
    batch, single = _batch(chi, cov.shape[0])
    out = np.exp(-0.5 * np.einsum("mi,ij,mj->m", batch, cov, batch))
    return float(out[0]) if single else out


CF = Callable[[np.ndarray], np.ndarray]


def cf_distance_sq_mc(cf_a: CF, cf_b: CF, config: CFConfig, return_stderr: bool = False, chi=None):
    """Monte Carlo estimate of d_CF,p with chi ~ g_p.

    Args:
        cf_a, cf_b: callables mapping an (m, d) batch to m CF values.
        config: kernel and sample count; draws come from ``config.rng``.
        return_stderr: also return the standard error of the mean.
        chi: optional pre-drawn batch (frozen common random numbers).
    """
    if chi is None:
        chi = sample_gp(config, config.mc_samples)
    diff = np.abs(np.asarray(cf_a(chi)) - np.asarray(cf_b(chi))) ** 2
    val = float(diff.mean())
    if return_stderr:
        se = float(diff.std(ddof=1) / math.sqrt(len(diff))) if len(diff) > 1 else math.inf
        return val, se
    return val


def cf_distance_sq_quadrature(cf_a: Callable, cf_b: Callable, p: float = 2.0, rel_tol: float = 1e-8) -> float:
    """d_CF,p in dimension one by adaptive quadrature.

    CFs of real laws satisfy cf(-eta) = conj(cf(eta)), so the integrand is even
    and the integral is twice the one over [0, inf). Accurate when the
    integrand decays faster than 1/eta^2, e.g. for Gaussian laws or p >= 2;
    undamped oscillating CFs with p <= 1 should use the Monte Carlo estimate.
    """
    c = normalizing_constant(p, 1)

    def f(eta):
        e = np.array([eta])
        return float(np.abs(cf_a(e)[0] - cf_b(e)[0]) ** 2) * c * (1.0 + eta * eta) ** (-p)

    head, _ = integrate.quad(f, 0.0, 1.0, epsabs=0.0, epsrel=rel_tol, limit=500)
    tail, _ = integrate.quad(f, 1.0, np.inf, epsabs=0.0, epsrel=rel_tol, limit=500)
    return 2.0 * (head + tail)


def kernel_moment(p: float, k: float, d: int = 1) -> float:
    """E|chi|^k under g_p (finite for k < 2p - d), by radial quadrature."""
    if not k < 2 * p - d:
        raise ValueError("moment diverges")
    c = normalizing_constant(p, d)
    area = 2 * math.pi ** (d / 2) / special.gamma(d / 2)
    val, _ = integrate.quad(lambda r: r ** (k + d - 1) * (1 + r * r) ** (-p), 0, np.inf, epsrel=1e-11)
    return c * area * val


def _quantiles(sorted_x: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = np.minimum((u * len(sorted_x)).astype(int), len(sorted_x) - 1)
    return sorted_x[idx]


def wasserstein_1d(sample_a, sample_b) -> float:
    """W1 between two empirical measures on R.

    Equal sizes use the sorted (monotone) coupling. Unequal sizes compare both
    empirical quantile functions on a common grid of 10^4 midpoints.
    """
    a = np.sort(np.asarray(sample_a, dtype=float).ravel())
    b = np.sort(np.asarray(sample_b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("wasserstein_1d needs nonempty samples")
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    u = (np.arange(W1_QUANTILE_GRID) + 0.5) / W1_QUANTILE_GRID
    return float(np.mean(np.abs(_quantiles(a, u) - _quantiles(b, u))))


def wasserstein_1d_gaussian(sample, variance: float, *, presorted: bool = False) -> float:
    """W1 between an empirical measure on R and N(0, variance).

    The Gaussian quantile function is evaluated at the midpoints (k + 1/2)/n
    and coupled monotonically with the order statistics.
    """
    x = np.asarray(sample, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("wasserstein_1d_gaussian needs a nonempty sample")
    if variance < 0:
        raise ValueError("variance must be non-negative")
    if not presorted:
        x = np.sort(x)
    z = stats.norm.ppf((np.arange(x.size) + 0.5) / x.size)
    return float(np.mean(np.abs(x - math.sqrt(variance) * z)))
