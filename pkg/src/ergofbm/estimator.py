"""Minimum-distance estimators for SDEs driven by fractional Brownian motion.

Three estimators are provided:

* :func:`estimate_1d` minimizes a deterministic contrast over one free
  coordinate (coarse grid scan followed by golden-section refinement);
* :func:`estimate_sgd` runs projected stochastic gradient descent on the CF
  contrast against the closed-form fOU stationary law;
* :func:`estimate_simulated` replaces the closed-form law by the empirical
  measure of an Euler path, for drifts without a known stationary law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .cf_distance import CFConfig, EmpiricalMeasure, sample_gp, wasserstein_1d, wasserstein_1d_gaussian
from .fbm import FbmGrid, fbm_from_normals, normals_needed
from .fou_analytic import (
    DEFAULT_SPEC,
    OUParams,
    QuadratureSpec,
    augmented_cov,
    grad_augmented_cov,
    stationary_variance,
)
from .rng import RngStream, as_generator
from .sde_sim import (
    AugmentedPath,
    DriftModel,
    Path,
    ThetaBox,
    ThetaVector,
    augment,
    burn_in_time,
    fine_steps_needed,
    observe,
    tangent_sigma,
    tangent_xi,
)

__all__ = [
    "EulerConfig",
    "EstimationProblem",
    "Estimate1D",
    "SGDConfig",
    "SGDTrace",
    "SGDDivergenceError",
    "DEFAULT_INIT",
    "contrast_value",
    "estimate_1d",
    "golden_section",
    "sgd_gradient_sample",
    "simulated_gradient_sample",
    "estimate_sgd",
    "estimate_simulated",
    "normalized_loss",
]

DEFAULT_INIT = ThetaVector.ou(1.0, 0.7, 0.5)
DISTANCES = ("cf", "w1")
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class SGDDivergenceError(RuntimeError):
    """A coordinate stayed on the box boundary for most of the iterations."""


@dataclass(frozen=True)
class EulerConfig:
    """Discretization of the simulated stationary law.

    Attributes:
        fine_step: Euler step.
        k0: law rows are taken every ``k0`` fine steps.
        n_points: number of augmented law rows N.
        burn_in: discarded time before the first row (None: drift default).
        y0: initial condition.
    """

    fine_step: float = 0.01
    k0: int = 10
    n_points: int = 10_000
    burn_in: Optional[float] = None
    y0: float = 0.0

    def __post_init__(self):
        if self.fine_step <= 0 or self.k0 < 1 or self.n_points < 2:
            raise ValueError("EulerConfig needs fine_step > 0, k0 >= 1, n_points >= 2")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValueError("burn_in must be non-negative")

    @property
    def step(self) -> float:
        return self.fine_step * self.k0


@dataclass
class EstimationProblem:
    """Observations plus everything needed to evaluate the contrast.

    Attributes:
        observations: augmented rows of dimension q + 1.
        theta: parameter vector supplying the known coordinates; its ``free``
            mask selects the coordinates to estimate.
        box: compact search box.
        distance: "cf" or "w1" (first coordinate only, one free parameter).
        cf: CF distance settings; its ``rng`` fixes the frozen spectral batch.
        drift: None for the closed-form fOU law, else the simulated drift.
        euler: discretization of the simulated law (general drift only).
        noise_rng: stream of the frozen driving noise (general drift only).
        quad: quadrature accuracy of the closed-form covariance.
    """

    observations: AugmentedPath
    theta: ThetaVector
    box: ThetaBox = field(default_factory=ThetaBox.ou)
    distance: str = "cf"
    cf: Optional[CFConfig] = None
    drift: Optional[DriftModel] = None
    euler: Optional[EulerConfig] = None
    noise_rng: Optional[RngStream] = None
    quad: QuadratureSpec = DEFAULT_SPEC
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.distance not in DISTANCES:
            raise ValueError(f"distance must be one of {DISTANCES}")
        obs = self.observations
        if obs.dim != obs.q + 1:
            raise ValueError("only scalar processes are supported: observation dim must be q + 1")
        n_free = len(self.theta.free_indices)
        if n_free == 0:
            raise ValueError("at least one parameter must be free")
        if obs.q + 1 < n_free:
            raise ValueError(f"q + 1 = {obs.q + 1} observed coordinates cannot identify {n_free} parameters")
        if self.distance == "w1" and n_free > 1:
            raise ValueError("the W1 contrast uses the first coordinate only and supports one free parameter")
        if len(self.box.lo) != len(self.theta.as_array()):
            raise ValueError("box and theta have different numbers of coordinates")
        if self.cf is None:
            self.cf = CFConfig(dim=obs.dim)
        elif self.cf.dim != obs.dim:
            raise ValueError(f"CFConfig.dim={self.cf.dim} but observations have dimension {obs.dim}")
        if self.drift is not None:
            self.euler = self.euler or EulerConfig()
            self.noise_rng = self.noise_rng or RngStream(0)
            if self.drift.dim != 1:
                raise ValueError("only scalar drifts are supported")

    @property
    def is_analytic(self) -> bool:
        return self.drift is None

    @property
    def free_names(self) -> tuple[str, ...]:
        return tuple(self.theta.names[i] for i in self.theta.free_indices)

    def theta_from_free(self, values) -> ThetaVector:
        return self.theta.with_free_values(np.atleast_1d(np.asarray(values, dtype=float)))

    def ou_params(self, theta: ThetaVector) -> OUParams:
        obs = self.observations
        return OUParams(theta.xi[0], theta.sigma, theta.hurst, obs.lag_h, obs.q)

    @property
    def phi(self) -> np.ndarray:
        """Frozen spectral batch (common random numbers across theta)."""
        if "phi" not in self._cache:
            self._cache["phi"] = sample_gp(self.cf, self.cf.mc_samples)
        return self._cache["phi"]

    @property
    def measure(self) -> EmpiricalMeasure:
        if "measure" not in self._cache:
            self._cache["measure"] = EmpiricalMeasure(self.observations.rows)
        return self._cache["measure"]

    @property
    def obs_cf(self) -> tuple[np.ndarray, np.ndarray]:
        if "obs_cf" not in self._cache:
            self._cache["obs_cf"] = self.measure.cf_parts(self.phi)
        return self._cache["obs_cf"]

    @property
    def sorted_first(self) -> np.ndarray:
        if "sorted" not in self._cache:
            self._cache["sorted"] = np.sort(self.observations.rows[:, 0])
        return self._cache["sorted"]

    # Simulated law (general drift) -------------------------------------------------

    def _layout(self) -> tuple[int, int, int]:
        eu = self.euler
        lag = int(round(self.observations.lag_h / eu.step))
        if lag < 1 or abs(lag * eu.step - self.observations.lag_h) > 1e-9:
            raise ValueError("lag_h must be an integer multiple of fine_step * k0")
        burn_time = burn_in_time(self.drift) if eu.burn_in is None else eu.burn_in
        burn = int(math.ceil(burn_time / eu.fine_step))
        n_fine = fine_steps_needed(eu.n_points, self.observations.q, eu.k0, lag, burn)
        return burn, n_fine, lag

    def noise(self, hurst: float) -> FbmGrid:
        """Frozen fBm for the simulated law; the same normals are reused for every H."""
        burn, n_fine, _ = self._layout()
        if "normals" not in self._cache:
            gen = as_generator(self.noise_rng)
            self._cache["normals"] = gen.standard_normal(normals_needed(n_fine))
        key = ("fbm", hurst)
        if key not in self._cache:
            self._cache = {k: v for k, v in self._cache.items() if not (isinstance(k, tuple) and k[0] == "fbm")}
            self._cache[key] = fbm_from_normals(hurst, self.euler.fine_step, self._cache["normals"])
        return self._cache[key]

    def simulate_law(self, theta: ThetaVector) -> tuple[AugmentedPath, Path, FbmGrid]:
        burn, _, _ = self._layout()
        noise = self.noise(theta.hurst)
        rows, fine = observe(
            self.drift,
            theta,
            noise,
            self.euler.k0,
            self.euler.n_points,
            self.observations.q,
            self.observations.lag_h,
            burn_steps=burn,
            y0=self.euler.y0,
        )
        return rows, fine, noise


def _as_theta(theta, problem: EstimationProblem) -> ThetaVector:
    if isinstance(theta, ThetaVector):
        return ThetaVector.from_array(theta.as_array(), problem.theta.free)
    return problem.theta_from_free(theta)


def contrast_value(theta, problem: EstimationProblem) -> float:
    """Distance between the observation empirical measure and the model law at ``theta``.

    The CF contrast is the squared CF distance estimated on the frozen spectral
    batch; the W1 contrast compares the first coordinate only.

    Args:
        theta: a ThetaVector or the values of the free coordinates.
        problem: estimation setup.
    """
    th = _as_theta(theta, problem)
    if problem.is_analytic:
        p = problem.ou_params(th)
        if problem.distance == "w1":
            v = stationary_variance(p.xi, p.sigma, p.hurst)
            return wasserstein_1d_gaussian(problem.sorted_first, v, presorted=True)
        cov = augmented_cov(p, problem.quad).cov
        phi = problem.phi
        g = np.exp(-0.5 * np.einsum("mi,ij,mj->m", phi, cov, phi))
        re, im = problem.obs_cf
        return float(np.mean((re - g) ** 2 + im**2))
    law, _, _ = problem.simulate_law(th)
    if problem.distance == "w1":
        return wasserstein_1d(problem.sorted_first, law.rows[:, 0])
    re_s, im_s = EmpiricalMeasure(law.rows).cf_parts(problem.phi)
    re, im = problem.obs_cf
    return float(np.mean((re - re_s) ** 2 + (im - im_s) ** 2))


def golden_section(f: Callable[[float], float], a: float, b: float, tol: float = 1e-4, max_evals: int | None = None):
    """Minimize ``f`` on [a, b] by golden-section search.

    Stops when the bracket is narrower than ``tol`` or after ``max_evals``
    evaluations. Returns the best (x, f(x)) pair seen; ties go to the smaller x.
    """
    seen: list[tuple[float, float]] = []

    def ev(x):
        v = f(x)
        seen.append((v, x))
        return v

    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = ev(c), ev(d)
    while (b - a) > tol and (max_evals is None or len(seen) < max_evals):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = ev(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = ev(d)
    v, x = min(seen)
    return x, v


@dataclass(frozen=True)
class Estimate1D:
    """Outcome of a one-parameter minimization."""

    theta_hat: ThetaVector
    contrast: float
    boundary_hit: bool
    evaluations: int

    @property
    def value(self) -> float:
        return float(self.theta_hat.free_values()[0])


_TIE_RTOL = 1e-12


def _plateau_left_edge(f, a: float, x: float, v: float, tol: float) -> float:
    """Smallest point of [a, x] tying with the minimum ``v`` (to rel. 1e-12), located to ``tol``.

    The W1 contrast is piecewise linear and can be exactly flat at its
    minimum; ties go to the smallest theta.
    """
    level = v + _TIE_RTOL * abs(v)
    if x - a <= tol or f(max(a, x - tol)) > level:
        return x
    if f(a) <= level:
        return a
    lo, hi = a, x
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) <= level:
            hi = mid
        else:
            lo = mid
    return hi


def estimate_1d(problem: EstimationProblem, grid_points: int = 32, tol: float = 1e-4) -> Estimate1D:
    """Grid scan plus golden-section refinement over the single free coordinate.

    Exact contrast ties resolve to the smallest theta, including flat minima.

    Raises:
        ValueError: if the problem does not have exactly one free parameter.
    """
    idx = problem.theta.free_indices
    if len(idx) != 1:
        raise ValueError("estimate_1d needs exactly one free parameter")
    i = int(idx[0])
    lo, hi = problem.box.lo[i], problem.box.hi[i]
    count = [0]

    def f(x):
        count[0] += 1
        return contrast_value([x], problem)

    grid = np.linspace(lo, hi, grid_points)
    vals = np.array([f(x) for x in grid])
    # argmin returns the first index, so the smallest theta wins exact ties.
    k = int(np.argmin(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid_points - 1)]
    x, v = golden_section(f, float(a), float(b), tol)
    if vals[k] < v or (vals[k] == v and grid[k] < x):
        x, v = float(grid[k]), float(vals[k])
    x = _plateau_left_edge(f, float(a), x, v, tol)
    boundary = min(x - lo, hi - x) <= 1e-3
    return Estimate1D(problem.theta_from_free([x]), float(v), bool(boundary), count[0])


@dataclass(frozen=True)
class SGDConfig:
    """Projected SGD settings.

    Attributes:
        init_theta: starting point (its free mask is ignored); None uses
            (xi, sigma, H) = (1, 0.7, 0.5).
        batch_size: spectral draws per iteration (m).
        iterations: number of updates.
        eta0: per-free-coordinate initial steps; None calibrates them so the
            first update moves each coordinate by ``calibration_fraction`` of
            its box width.
        tau: decay scale of eta_k = eta0 / (1 + k / tau); None means iterations / 4.
        rng: stream of the fresh spectral batches.
        calibration_batches: batches averaged to calibrate eta0.
        calibration_fraction: target first-step size relative to box width.
        pin_fraction: a coordinate on the boundary for more than this share
            of iterations raises :class:`SGDDivergenceError`.
        hurst_every: for simulated laws, iterations between golden-section
            sweeps of H.
        hurst_sweep_evals: evaluations per H sweep.
    """

    init_theta: Optional[ThetaVector] = None
    batch_size: int = 100
    iterations: int = 1000
    eta0: Optional[Sequence[float]] = None
    tau: Optional[float] = None
    rng: RngStream = field(default_factory=lambda: RngStream(0, 1 << 32))
    calibration_batches: int = 5
    calibration_fraction: float = 0.05
    pin_fraction: float = 0.5
    hurst_every: int = 25
    hurst_sweep_evals: int = 10

    def __post_init__(self):
        if self.batch_size < 1 or self.iterations < 1:
            raise ValueError("batch_size and iterations must be positive")
        if self.eta0 is not None and any(e <= 0 for e in self.eta0):
            raise ValueError("eta0 entries must be positive")
        if self.tau is not None and self.tau <= 0:
            raise ValueError("tau must be positive")
        if not 0 < self.calibration_fraction <= 1:
            raise ValueError("calibration_fraction must lie in (0, 1]")

    def step(self, k: int, eta0: np.ndarray) -> np.ndarray:
        tau = self.tau if self.tau is not None else max(self.iterations / 4, 1.0)
        return eta0 / (1.0 + k / tau)


@dataclass(frozen=True)
class SGDTrace:
    """Iterates and per-iteration loss (normalized loss when the truth is known)."""

    thetas: tuple[ThetaVector, ...]
    losses: np.ndarray
    loss_kind: str
    eta0: np.ndarray

    @property
    def final(self) -> ThetaVector:
        return self.thetas[-1]

    @property
    def iterations(self) -> int:
        return len(self.thetas) - 1


def normalized_loss(theta: ThetaVector, init: ThetaVector, truth: ThetaVector) -> float:
    """Mean over free coordinates of |theta - truth| / |init - truth|."""
    idx = theta.free_indices
    num = np.abs(theta.as_array()[idx] - truth.as_array()[idx])
    den = np.abs(init.as_array()[idx] - truth.as_array()[idx])
    if np.any(den == 0):
        raise ValueError("initial point coincides with the truth in a free coordinate")
    return float(np.mean(num / den))


def sgd_gradient_sample(theta, phi_batch: np.ndarray, problem: EstimationProblem) -> np.ndarray:
    """Batch average of the gradient of |mu(f_phi) - mu_theta(f_phi)|^2 (closed-form law).

    With g = exp(-phi^T Sigma phi / 2) and a = mean cos<phi, X_k>, the derivative
    of (a - g)^2 + b^2 is (a - g) g d(phi^T Sigma phi); only free coordinates are
    returned, in the order of ``problem.free_names``.
    """
    if not problem.is_analytic:
        raise ValueError("sgd_gradient_sample needs the closed-form law; use simulated_gradient_sample")
    th = _as_theta(theta, problem)
    phi = np.atleast_2d(np.asarray(phi_batch, dtype=float))
    p = problem.ou_params(th)
    cov = augmented_cov(p, problem.quad).cov
    grads = grad_augmented_cov(p, problem.quad, problem.free_names)
    g = np.exp(-0.5 * np.einsum("mi,ij,mj->m", phi, cov, phi))
    re, _ = problem.measure.cf_parts(phi)
    w = (re - g) * g
    return np.array([np.mean(w * np.einsum("mi,ij,mj->m", phi, grads[n], phi)) for n in problem.free_names])


def _tangent_rows(problem: EstimationProblem, theta: ThetaVector, fine: Path, noise: FbmGrid) -> dict[str, np.ndarray]:
    burn, _, _ = problem._layout()
    k0 = problem.euler.k0
    out = {}
    names = problem.free_names
    drift = problem.drift

    def rows_of(values):
        coarse = Path(step=fine.step * k0, values=values[burn::k0])
        return augment(coarse, problem.observations.q, problem.observations.lag_h, problem.euler.n_points).rows

    xi_names = [n for n in names if n.startswith("xi")]
    if xi_names:
        tx = tangent_xi(drift, theta, fine).values
        for j, n in enumerate(theta.names[: len(theta.xi)]):
            if n in xi_names:
                out[n] = rows_of(tx[:, j])
    if "sigma" in names:
        out["sigma"] = rows_of(tangent_sigma(drift, theta, fine, noise).values)
    return out


def simulated_gradient_sample(theta, phi_batch: np.ndarray, problem: EstimationProblem) -> dict[str, float]:
    """Batch-averaged gradient of the simulated-law CF contrast for drift and sigma coordinates.

    d/dtheta_i |mu_theta(f) - mu(f)|^2 = 2 [(Re mu_theta - Re mu) rho(-sin)_i
    + (Im mu_theta - Im mu) rho(cos)_i], with rho(g)_i the mean of
    g(<phi, X_k>) <phi, d_i X_k> along the Euler path and its tangent.
    """
    th = _as_theta(theta, problem)
    phi = np.atleast_2d(np.asarray(phi_batch, dtype=float))
    law, fine, noise = problem.simulate_law(th)
    tangents = _tangent_rows(problem, th, fine, noise)
    arg = law.rows @ phi.T
    cos, sin = np.cos(arg), np.sin(arg)
    re_s, im_s = cos.mean(axis=0), sin.mean(axis=0)
    re, im = problem.measure.cf_parts(phi)
    out = {}
    for name, trows in tangents.items():
        dproj = trows @ phi.T
        rho_sin = np.mean(-sin * dproj, axis=0)
        rho_cos = np.mean(cos * dproj, axis=0)
        out[name] = float(np.mean(2 * ((re_s - re) * rho_sin + (im_s - im) * rho_cos)))
    return out


def _run_sgd(problem: EstimationProblem, sgd: SGDConfig, truth, grad_fn, hurst_sweep: bool) -> SGDTrace:
    box_lo = problem.box.lo_array[problem.theta.free_indices]
    box_hi = problem.box.hi_array[problem.theta.free_indices]
    init = sgd.init_theta if sgd.init_theta is not None else DEFAULT_INIT
    if len(init.as_array()) != len(problem.theta.as_array()):
        raise ValueError("init_theta has the wrong number of coordinates")
    x = np.clip(init.as_array()[problem.theta.free_indices], box_lo, box_hi)
    init_theta = problem.theta_from_free(x)
    gen = as_generator(sgd.rng)
    names = problem.free_names
    grad_mask = np.array([not (hurst_sweep and n == "hurst") for n in names])

    if sgd.eta0 is not None:
        eta0 = np.asarray(sgd.eta0, dtype=float)
        if eta0.shape != x.shape:
            raise ValueError("eta0 needs one entry per free coordinate")
    else:
        g0 = np.zeros_like(x)
        for _ in range(sgd.calibration_batches):
            g0 += np.abs(grad_fn(x, sample_gp(problem.cf, sgd.batch_size, gen)))
        g0 /= sgd.calibration_batches
        width = box_hi - box_lo
        eta0 = np.where(g0 > 0, sgd.calibration_fraction * width / np.where(g0 > 0, g0, 1.0), 0.0)

    def loss(v):
        th = problem.theta_from_free(v)
        if truth is not None:
            return normalized_loss(th, init_theta, truth)
        return contrast_value(th, problem)

    thetas = [init_theta]
    losses = [loss(x)]
    pinned = np.zeros(len(x), dtype=int)
    hurst_idx = names.index("hurst") if "hurst" in names else None
    for k in range(sgd.iterations):
        phi = sample_gp(problem.cf, sgd.batch_size, gen)
        g = grad_fn(x, phi)
        x = np.where(grad_mask, x - sgd.step(k, eta0) * g, x)
        x = np.clip(x, box_lo, box_hi)
        if hurst_sweep and hurst_idx is not None and (k + 1) % sgd.hurst_every == 0:
            base = x.copy()

            def fh(h):
                v = base.copy()
                v[hurst_idx] = h
                return contrast_value(v, problem)

            x[hurst_idx], _ = golden_section(
                fh, float(box_lo[hurst_idx]), float(box_hi[hurst_idx]), tol=0.0, max_evals=sgd.hurst_sweep_evals
            )
        pinned += (x <= box_lo) | (x >= box_hi)
        thetas.append(problem.theta_from_free(x))
        losses.append(loss(x))
    bad = pinned > sgd.pin_fraction * sgd.iterations
    if np.any(bad):
        which = [names[i] for i in np.flatnonzero(bad)]
        raise SGDDivergenceError(f"coordinates {which} pinned to the box boundary in most iterations")
    return SGDTrace(tuple(thetas), np.asarray(losses), "normalized" if truth is not None else "contrast", eta0)


def estimate_sgd(problem: EstimationProblem, sgd: SGDConfig = SGDConfig(), truth: Optional[ThetaVector] = None) -> SGDTrace:
    """Projected SGD with a fresh spectral batch per iteration (closed-form fOU law).

    Args:
        problem: analytic estimation problem with the CF distance.
        sgd: optimizer settings.
        truth: when given, the trace records the normalized loss; otherwise
            the frozen-batch contrast.

    Raises:
        SGDDivergenceError: if a coordinate stays pinned to the box boundary.
    """
    if not problem.is_analytic or problem.distance != "cf":
        raise ValueError("estimate_sgd needs the closed-form law and the CF distance")

    def grad_fn(x, phi):
        return sgd_gradient_sample(x, phi, problem)

    return _run_sgd(problem, sgd, truth, grad_fn, hurst_sweep=False)


def estimate_simulated(
    problem: EstimationProblem,
    sgd: Optional[SGDConfig] = None,
    truth: Optional[ThetaVector] = None,
    grid_points: int = 32,
    tol: float = 1e-4,
):
    """Minimum-distance estimate against the simulated Euler law.

    One free coordinate: grid scan plus golden section on the frozen contrast
    (noise and spectral batch fixed). Several: projected SGD where drift and
    sigma coordinates follow tangent-process gradients and H is refreshed by
    golden-section sweeps every ``sgd.hurst_every`` iterations.

    Returns:
        :class:`Estimate1D` or :class:`SGDTrace`.
    """
    if problem.is_analytic:
        raise ValueError("estimate_simulated needs a drift model")
    if len(problem.theta.free_indices) == 1:
        return estimate_1d(problem, grid_points, tol)
    if problem.distance != "cf":
        raise ValueError("multi-parameter simulated estimation uses the CF distance")
    sgd = sgd or SGDConfig()
    names = problem.free_names

    def grad_fn(x, phi):
        d = simulated_gradient_sample(x, phi, problem)
        return np.array([d.get(n, 0.0) for n in names])

    return _run_sgd(problem, sgd, truth, grad_fn, hurst_sweep=True)
