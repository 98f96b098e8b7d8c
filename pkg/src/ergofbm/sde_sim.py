"""Euler simulation of SDEs with additive fBm, augmentation, and tangent processes."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from .fbm import FbmGrid

__all__ = [
    "ThetaVector",
    "ThetaBox",
    "DriftModel",
    "Path",
    "AugmentedPath",
    "ou_drift",
    "perturbed_ou_drift",
    "euler_simulate",
    "subsample",
    "augment",
    "tangent_xi",
    "tangent_sigma",
    "burn_in_time",
    "OverflowSimulationError",
    "fine_steps_needed",
    "observe",
]

OVERFLOW_BOUND = 1e12
PARAM_NAMES = ("xi", "sigma", "hurst")


class OverflowSimulationError(OverflowError):
    """Raised when an Euler path leaves the ball of radius ``OVERFLOW_BOUND``."""


@dataclass(frozen=True)
class ThetaVector:
    """Parameter triple (xi, sigma, H) plus a mask of which coordinates are free.

    ``xi`` is a tuple of drift parameters; ``free`` has one flag per entry of
    :meth:`as_array`, i.e. ``len(xi) + 2`` flags.
    """

    xi: tuple[float, ...]
    sigma: float
    hurst: float
    free: tuple[bool, ...] = ()

    def __post_init__(self):
        xi = tuple(float(v) for v in np.atleast_1d(self.xi))
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "hurst", float(self.hurst))
        free = tuple(bool(f) for f in self.free) or (True,) * (len(xi) + 2)
        if len(free) != len(xi) + 2:
            raise ValueError("free mask must have len(xi) + 2 entries")
        object.__setattr__(self, "free", free)
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not 0 < self.hurst < 1:
            raise ValueError("hurst must lie in (0, 1)")

    @classmethod
    def ou(cls, xi: float, sigma: float, hurst: float, free: Sequence[str] = ("xi", "sigma", "hurst")):
        """Scalar-drift vector with free coordinates named from {xi, sigma, hurst}."""
        unknown = set(free) - set(PARAM_NAMES)
        if unknown:
            raise ValueError(f"unknown parameter names: {sorted(unknown)}")
        return cls((xi,), sigma, hurst, tuple(name in free for name in PARAM_NAMES))

    @property
    def names(self) -> tuple[str, ...]:
        if len(self.xi) == 1:
            return PARAM_NAMES
        return tuple(f"xi{i}" for i in range(len(self.xi))) + ("sigma", "hurst")

    @property
    def xi_array(self) -> np.ndarray:
        return np.asarray(self.xi)

    def as_array(self) -> np.ndarray:
        return np.array([*self.xi, self.sigma, self.hurst])

    @classmethod
    def from_array(cls, values, free: Sequence[bool]) -> "ThetaVector":
        values = np.asarray(values, dtype=float)
        return cls(tuple(values[:-2]), values[-2], values[-1], tuple(free))

    @property
    def free_indices(self) -> np.ndarray:
        return np.flatnonzero(self.free)

    def free_values(self) -> np.ndarray:
        return self.as_array()[self.free_indices]

    def with_free_values(self, values) -> "ThetaVector":
        arr = self.as_array()
        arr[self.free_indices] = values
        return ThetaVector.from_array(arr, self.free)

    def with_free(self, names: Sequence[str]) -> "ThetaVector":
        return replace(self, free=tuple(n in names for n in self.names))

    def to_dict(self) -> dict:
        return dict(zip(self.names, self.as_array().tolist()))


@dataclass(frozen=True)
class ThetaBox:
    """Compact box [lo, hi] per coordinate of ``ThetaVector.as_array()``."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi) or len(lo) < 3:
            raise ValueError("box bounds must have matching length >= 3")
        for i, (a, b) in enumerate(zip(lo, hi)):
            if not a < b:
                raise ValueError(f"box coordinate {i}: lo must be < hi (got {a}, {b})")
        if min(lo[:-1]) <= 0:
            raise ValueError("xi and sigma bounds must be positive")
        if not (0 < lo[-1] and hi[-1] < 1):
            raise ValueError("hurst bounds must lie inside (0, 1)")

    @classmethod
    def ou(cls, xi=(0.5, 4.0), sigma=(0.1, 1.5), hurst=(0.2, 0.95)) -> "ThetaBox":
        return cls((xi[0], sigma[0], hurst[0]), (xi[1], sigma[1], hurst[1]))

    @property
    def lo_array(self) -> np.ndarray:
        return np.asarray(self.lo)

    @property
    def hi_array(self) -> np.ndarray:
        return np.asarray(self.hi)

    def contains(self, theta: ThetaVector) -> bool:
        arr = theta.as_array()
        return bool(np.all(arr >= self.lo_array) and np.all(arr <= self.hi_array))

    def clip(self, theta: ThetaVector) -> ThetaVector:
        arr = np.clip(theta.as_array(), self.lo_array, self.hi_array)
        return ThetaVector.from_array(arr, theta.free)


@dataclass(frozen=True)
class DriftModel:
    """Parametrised drift b_xi with derivatives and dissipativity constants.

    For ``dim == 1`` the callables act elementwise on floats or arrays of
    states. ``jac_xi`` returns the derivative with respect to every drift
    parameter along a trailing axis of length ``n_params``.

    ``linear_rate``, when given, returns ``a`` such that ``b_xi(y) = a * y``;
    simulation then uses a vectorised linear filter instead of a Python loop.
    """

    dim: int
    n_params: int
    eval: Callable
    jac_y: Callable
    jac_xi: Callable
    beta: float
    lipschitz_K: float
    growth_r: int
    growth_c: float
    name: str = "drift"
    linear_rate: Optional[Callable] = field(default=None, compare=False)

    @property
    def gamma_max(self) -> float:
        """Largest step for which 1 - 2*gamma*beta + gamma^2*K^2 < 1."""
        return self.beta / self.lipschitz_K**2

    def contraction_factor(self, step: float) -> float:
        return 1.0 - 2.0 * step * self.beta + step**2 * self.lipschitz_K**2


def ou_drift(xi_min: float = 0.5, xi_max: float = 4.0) -> DriftModel:
    """b_xi(y) = -xi * y on the box xi in [xi_min, xi_max]."""
    return DriftModel(
        dim=1,
        n_params=1,
        eval=lambda xi, y: -xi[0] * y,
        jac_y=lambda xi, y: -xi[0] + 0.0 * y,
        jac_xi=lambda xi, y: (-np.asarray(y, dtype=float))[..., None],
        beta=xi_min,
        lipschitz_K=xi_max,
        growth_r=1,
        growth_c=xi_max - xi_min,
        name="ou",
        linear_rate=lambda xi: -xi[0],
    )


def perturbed_ou_drift(lam: float = 0.2, xi_min: float = 0.5, xi_max: float = 4.0) -> DriftModel:
    """b_xi(y) = -xi * y + lam * tanh(y), a bounded perturbation of the OU drift.

    Requires ``0 <= lam <= xi_min / 2`` so that the drift stays dissipative
    with beta = xi_min - lam.
    """
    if not 0 <= lam <= xi_min / 2:
        raise ValueError("perturbation strength must satisfy 0 <= lam <= xi_min/2")

    def jac_y(xi, y):
        return -xi[0] + lam / np.cosh(y) ** 2

    return DriftModel(
        dim=1,
        n_params=1,
        eval=lambda xi, y: -xi[0] * y + lam * np.tanh(y),
        jac_y=jac_y,
        jac_xi=lambda xi, y: (-np.asarray(y, dtype=float))[..., None],
        beta=xi_min - lam,
        lipschitz_K=xi_max,
        growth_r=1,
        growth_c=xi_max - xi_min,
        name=f"perturbed_ou(lam={lam:g})",
    )


@dataclass(frozen=True)
class Path:
    """Euler path on a uniform grid; ``values`` has shape (n+1,) or (n+1, d)."""

    step: float
    values: np.ndarray
    theta: Optional[ThetaVector] = None

    def __len__(self) -> int:
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        return self.step * np.arange(len(self.values))


@dataclass(frozen=True)
class AugmentedPath:
    """Rows (Y_t, Y_{t+h} - Y_t, ..., Y_{t+qh} - Y_t) for t on the observation grid."""

    lag_h: float
    q: int
    rows: np.ndarray
    step: float = 0.0

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def truncate(self, q: int) -> "AugmentedPath":
        """Keep only Y and its first ``q`` increments (scalar paths)."""
        if q > self.q:
            raise ValueError(f"cannot truncate q={self.q} augmentation to q={q}")
        d = self.dim // (self.q + 1)
        return AugmentedPath(self.lag_h, q, self.rows[:, : d * (q + 1)], self.step)


def _check_step(drift: DriftModel, step: float) -> None:
    if step > drift.gamma_max * (1 + 1e-12):
        raise ValueError(
            f"Euler step {step} exceeds gamma_0 = beta/K^2 = {drift.gamma_max:.4g} "
            f"for drift {drift.name}"
        )


def _noise_increments(noise: FbmGrid, dim: int) -> np.ndarray:
    inc = np.diff(np.asarray(noise.values, dtype=float), axis=0)
    if dim == 1 and inc.ndim == 2:
        inc = inc[:, 0]
    return inc


def euler_simulate(
    drift: DriftModel,
    theta: ThetaVector,
    noise: FbmGrid,
    y0=0.0,
    check_step: bool = True,
) -> Path:
    """Y_{k+1} = Y_k + step * b_xi(Y_k) + sigma * (B_{k+1} - B_k), Y_0 = y0.

    Raises:
        OverflowSimulationError: if any |Y| exceeds 1e12.
        ValueError: if the grid step exceeds the drift's gamma_0.
    """
    step = noise.step
    if check_step:
        _check_step(drift, step)
    xi = theta.xi_array
    dW = theta.sigma * _noise_increments(noise, drift.dim)
    n = dW.shape[0]
    if drift.dim == 1:
        y0 = float(np.asarray(y0).reshape(-1)[0])
        if drift.linear_rate is not None:
            a = 1.0 + step * drift.linear_rate(xi)
            body = lfilter([1.0], [1.0, -a], dW, zi=[a * y0])[0]
            values = np.concatenate([[y0], body])
        else:
            values = np.empty(n + 1)
            values[0] = y = y0
            f = drift.eval
            for k, dw in enumerate(dW.tolist()):
                y = y + step * f(xi, y) + dw
                values[k + 1] = y
    else:
        values = np.empty((n + 1, drift.dim))
        values[0] = y = np.asarray(y0, dtype=float).reshape(drift.dim)
        for k in range(n):
            y = y + step * drift.eval(xi, y) + dW[k]
            values[k + 1] = y
    if not np.all(np.isfinite(values)) or np.max(np.abs(values)) > OVERFLOW_BOUND:
        raise OverflowSimulationError(
            "Euler path exceeded 1e12: drift not dissipative or step too large"
        )
    return Path(step=step, values=values, theta=theta)


def subsample(path: Path, k0: int) -> Path:
    """Every ``k0``-th point of ``path``; the step is multiplied by ``k0``."""
    if k0 < 1:
        raise ValueError("k0 must be >= 1")
    values = path.values[::k0]
    if len(values) < 2:
        raise ValueError("subsampling leaves fewer than 2 points")
    return Path(step=path.step * k0, values=values, theta=path.theta)


def _lag_ratio(step: float, lag_h: float) -> int:
    ratio = lag_h / step
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"lag {lag_h} is not a positive integer multiple of step {step}")
    return k


def augment(path: Path, q: int, lag_h: Optional[float] = None, n_rows: Optional[int] = None) -> AugmentedPath:
    """Augmented rows with simple increments Y_{t+ih} - Y_t, i = 1..q.

    Rows are formed at every grid point of ``path`` for which the largest lag
    is still available, or at the first ``n_rows`` of them.
    """
    if q < 0:
        raise ValueError("q must be >= 0")
    lag_h = path.step if lag_h is None else lag_h
    lag = _lag_ratio(path.step, lag_h)
    values = np.asarray(path.values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    available = len(values) - q * lag
    n = available if n_rows is None else n_rows
    if n < 1 or n > available:
        raise ValueError(
            f"path of {len(values)} samples too short for {n} rows with q={q}, lag={lag}"
        )
    base = values[:n]
    cols = [base] + [values[i * lag : i * lag + n] - base for i in range(1, q + 1)]
    return AugmentedPath(lag_h=lag_h, q=q, rows=np.hstack(cols), step=path.step)


def tangent_xi(drift: DriftModel, theta: ThetaVector, base: Path) -> Path:
    """d/dxi of the Euler path; values have a trailing axis over drift parameters.

    u_{k+1} = u_k + step * (d_xi b(Y_k) + d_y b(Y_k) u_k),  u_0 = 0.
    """
    if drift.dim != 1:
        raise NotImplementedError("tangent recursions are implemented for scalar SDEs")
    xi = theta.xi_array
    y = np.asarray(base.values[:-1], dtype=float)
    step = base.step
    a = 1.0 + step * np.broadcast_to(drift.jac_y(xi, y), y.shape)
    c = step * np.broadcast_to(drift.jac_xi(xi, y), y.shape + (drift.n_params,))
    out = np.zeros((len(base.values), drift.n_params))
    for j in range(drift.n_params):
        out[1:, j] = _linear_recursion(a, c[:, j])
    return Path(step=step, values=out, theta=theta)


def tangent_sigma(drift: DriftModel, theta: ThetaVector, base: Path, noise: FbmGrid) -> Path:
    """d/dsigma of the Euler path driven by ``noise``.

    v_{k+1} = v_k + step * d_y b(Y_k) v_k + (B_{k+1} - B_k),  v_0 = 0.
    """
    if drift.dim != 1:
        raise NotImplementedError("tangent recursions are implemented for scalar SDEs")
    y = np.asarray(base.values[:-1], dtype=float)
    a = 1.0 + base.step * np.broadcast_to(drift.jac_y(theta.xi_array, y), y.shape)
    dB = _noise_increments(noise, 1)
    if len(dB) != len(y):
        raise ValueError("noise does not match the base path length")
    out = np.zeros(len(base.values))
    out[1:] = _linear_recursion(a, dB)
    return Path(step=base.step, values=out, theta=theta)


def _linear_recursion(a: np.ndarray, c: np.ndarray) -> np.ndarray:
    """x_{k+1} = a_k x_k + c_k from x_0 = 0; returns x_1..x_n."""
    if np.ptp(a) == 0:
        return lfilter([1.0], [1.0, -float(a[0])], c)
    out = np.empty(len(a))
    x = 0.0
    for k, (ak, ck) in enumerate(zip(a.tolist(), c.tolist())):
        x = ak * x + ck
        out[k] = x
    return out


def burn_in_time(drift: DriftModel) -> float:
    """Time discarded before treating an Euler path as stationary: max(10/beta, 10)."""
    return max(10.0 / drift.beta, 10.0)


def fine_steps_needed(n_rows: int, q: int, k0: int, lag_ratio: int, burn_steps: int = 0) -> int:
    """Number of fine Euler steps producing ``n_rows`` augmented rows after burn-in."""
    return burn_steps + (n_rows - 1 + q * lag_ratio) * k0


def observe(
    drift: DriftModel,
    theta: ThetaVector,
    noise: FbmGrid,
    k0: int,
    n_rows: int,
    q: int,
    lag_h: float,
    burn_steps: int = 0,
    y0=0.0,
) -> tuple[AugmentedPath, Path]:
    """Simulate on the fine grid of ``noise``, drop burn-in, subsample by ``k0`` and augment.

    Returns:
        The augmented rows and the fine-grid path (including burn-in).
    """
    fine = euler_simulate(drift, theta, noise, y0=y0)
    coarse = Path(step=fine.step * k0, values=fine.values[burn_steps::k0], theta=theta)
    return augment(coarse, q, lag_h, n_rows=n_rows), fine
