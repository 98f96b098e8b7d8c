"""Fractional Brownian motion on uniform grids.

Paths are generated by circulant embedding (Davies-Harte) of the fractional
Gaussian noise covariance; a Cholesky sampler is kept as an exact, independent
cross-check for small grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import RngStream, as_generator

__all__ = [
    "FbmGrid",
    "fbm_covariance",
    "fgn_autocovariance",
    "circulant_eigenvalues",
    "fbm_from_normals",
    "sample_fbm",
    "sample_fbm_cholesky",
    "sample_fbm_nd",
    "normals_needed",
]

# Relative threshold below which negative embedding eigenvalues are rounding noise.
EIGEN_TOL = 1e-10
CHOLESKY_MAX_N = 2048


def _check_hurst(hurst: float) -> None:
    if not (0.0 < hurst < 1.0) or not np.isfinite(hurst):
        raise ValueError(f"Hurst parameter must lie in (0, 1), got {hurst!r}")


@dataclass(frozen=True)
class FbmGrid:
    """Sample of B^H at times 0, step, ..., n*step (values[0] == 0)."""

    hurst: float
    step: float
    values: np.ndarray

    @property
    def n(self) -> int:
        return len(self.values) - 1

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    @property
    def times(self) -> np.ndarray:
        return self.step * np.arange(len(self.values))


def fbm_covariance(s: float, t: float, hurst: float) -> float:
    """Cov(B_s, B_t) = (s^{2H} + t^{2H} - |t - s|^{2H}) / 2."""
    _check_hurst(hurst)
    if s < 0 or t < 0 or not (np.isfinite(s) and np.isfinite(t)):
        raise ValueError("fbm_covariance requires finite, non-negative times")
    two_h = 2.0 * hurst
    return 0.5 * (s**two_h + t**two_h - abs(t - s) ** two_h)


def fgn_autocovariance(lags, hurst: float, step: float = 1.0) -> np.ndarray:
    """Autocovariance of fBm increments over a grid of the given step."""
    _check_hurst(hurst)
    k = np.abs(np.asarray(lags, dtype=float))
    two_h = 2.0 * hurst
    gamma = 0.5 * ((k + 1) ** two_h + np.abs(k - 1) ** two_h - 2.0 * k**two_h)
    return step**two_h * gamma


def circulant_eigenvalues(hurst: float, n: int) -> np.ndarray:
    """Eigenvalues of the size-2n circulant embedding of the unit-step fGn covariance.

    Raises:
        ArithmeticError: if an eigenvalue is more negative than
            ``-EIGEN_TOL * max_eigenvalue``; smaller negatives are clamped to 0.
    """
    gamma = fgn_autocovariance(np.arange(n + 1), hurst)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    lam = np.fft.fft(row).real
    lam_max = lam.max()
    if lam.min() < -EIGEN_TOL * lam_max:
        raise ArithmeticError(
            f"circulant embedding is not PSD for H={hurst}, n={n}: "
            f"min eigenvalue {lam.min():.3e}"
        )
    return np.maximum(lam, 0.0)


def normals_needed(n: int) -> int:
    """Number of standard normals consumed by :func:`fbm_from_normals`."""
    return 2 * (2 * n)


def fbm_from_normals(hurst: float, step: float, normals: np.ndarray) -> FbmGrid:
    """Deterministic Davies-Harte map from i.i.d. N(0, 1) draws to an fBm path.

    Feeding the same ``normals`` at different ``hurst`` values gives paths that
    vary continuously in H (common random numbers).

    Args:
        hurst: Hurst parameter in (0, 1).
        step: grid spacing.
        normals: array of ``normals_needed(n)`` standard normal draws.
    """
    _check_hurst(hurst)
    if step <= 0:
        raise ValueError("step must be positive")
    normals = np.asarray(normals, dtype=float)
    if normals.size % 4 or normals.size == 0:
        raise ValueError("normals must have length 4*n")
    n = normals.size // 4
    m = 2 * n
    lam = circulant_eigenvalues(hurst, n)
    z = normals[:m] + 1j * normals[m:]
    w = np.fft.fft(np.sqrt(lam) * z) / np.sqrt(m)
    fgn = w.real[:n] * step**hurst
    values = np.empty(n + 1)
    values[0] = 0.0
    np.cumsum(fgn, out=values[1:])
    return FbmGrid(hurst=hurst, step=step, values=values)


def sample_fbm(hurst: float, step: float, n: int, rng: RngStream | np.random.Generator) -> FbmGrid:
    """Exact-in-distribution fBm path with ``n`` increments of size ``step``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    _check_hurst(hurst)
    gen = as_generator(rng)
    return fbm_from_normals(hurst, step, gen.standard_normal(normals_needed(n)))


def sample_fbm_cholesky(hurst: float, step: float, n: int, rng: RngStream | np.random.Generator) -> FbmGrid:
    """Reference sampler through the Cholesky factor of the increment covariance."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > CHOLESKY_MAX_N:
        raise ValueError(f"Cholesky sampler limited to n <= {CHOLESKY_MAX_N}")
    lags = np.arange(n)
    gamma = fgn_autocovariance(lags, hurst, step)
    cov = gamma[np.abs(lags[:, None] - lags[None, :])]
    chol = np.linalg.cholesky(cov)
    gen = as_generator(rng)
    fgn = chol @ gen.standard_normal(n)
    values = np.concatenate([[0.0], np.cumsum(fgn)])
    return FbmGrid(hurst=hurst, step=step, values=values)


def sample_fbm_nd(hurst: float, step: float, n: int, dim: int, rng: RngStream) -> FbmGrid:
    """R^dim-valued fBm with independent coordinates; values has shape (n+1, dim)."""
    cols = [sample_fbm(hurst, step, n, rng.child(i)).values for i in range(dim)]
    return FbmGrid(hurst=hurst, step=step, values=np.stack(cols, axis=1))
