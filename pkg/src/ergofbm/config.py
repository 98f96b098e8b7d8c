"""Experiment configuration: a flat YAML mapping validated into :class:`ExperimentConfig`."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import yaml

from .sde_sim import PARAM_NAMES, ThetaBox, ThetaVector, DriftModel, ou_drift, perturbed_ou_drift

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config"]

MODELS = ("ou", "perturbed_ou")
ESTIMATORS = ("auto", "1d", "sgd", "simulated")


class ConfigError(ValueError):
    """Invalid configuration; names the offending field and, when known, its line."""

    def __init__(self, field_name: str, message: str, line: Optional[int] = None):
        self.field = field_name
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"config field '{field_name}'{where}: {message}")


@dataclass(frozen=True)
class ExperimentConfig:
    """All knobs of one experiment; defaults reproduce the fOU benchmark setting."""

    model: str = "ou"
    perturbation: float = 0.2
    theta_true: tuple = (2.0, 0.5, 0.7)
    free: tuple = ("xi",)
    box_xi: tuple = (0.5, 4.0)
    box_sigma: tuple = (0.1, 1.5)
    box_hurst: tuple = (0.2, 0.95)
    fine_step: float = 1e-3
    k0: int = 100
    n: int = 10_000
    q: int = 2
    lag_h: float = 0.1
    lag_override: bool = False
    burn_in: float = 20.0
    distance: str = "w1"
    cf_p: float = 2.0
    cf_mc_samples: int = 1000
    estimator: str = "auto"
    sgd_iterations: int = 1000
    sgd_iterations_3d: int = 100
    sgd_batch: int = 100
    sgd_init: tuple = (1.0, 0.7, 0.5)
    sgd_calibration_fraction: float = 0.15
    sgd_tau: Optional[float] = None
    hurst_1d_q: int = 1
    hurst_1d_distance: str = "cf"
    euler_fine_step: float = 0.01
    euler_k0: int = 10
    euler_n_points: int = 10_000
    ident_h: float = 0.1
    ident_grid: int = 20
    hist_bins: int = 20
    trials: int = 100
    master_seed: int = 0
    output: str = "results"

    @property
    def step(self) -> float:
        return self.fine_step * self.k0

    @property
    def lag_ratio(self) -> int:
        return int(round(self.lag_h / self.step))

    @property
    def box(self) -> ThetaBox:
        return ThetaBox.ou(self.box_xi, self.box_sigma, self.box_hurst)

    def theta(self, free=None) -> ThetaVector:
        return ThetaVector.ou(*self.theta_true, free=self.free if free is None else free)

    def drift(self) -> DriftModel:
        lo, hi = self.box_xi
        if self.model == "ou":
            return ou_drift(lo, hi)
        return perturbed_ou_drift(self.perturbation, lo, hi)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def replace(self, **kw) -> "ExperimentConfig":
        return validate(dataclasses.replace(self, **kw), {})


_PAIR = {"box_xi", "box_sigma", "box_hurst"}
_TRIPLE = {"theta_true", "sgd_init"}
_NAMES = {"free"}
_INTS = {"k0", "n", "q", "cf_mc_samples", "sgd_iterations", "sgd_iterations_3d", "sgd_batch", "hurst_1d_q",
         "euler_k0", "euler_n_points", "ident_grid", "hist_bins", "trials", "master_seed"}
_BOOLS = {"lag_override"}
_STRS = {"model", "distance", "estimator", "hurst_1d_distance", "output"}
_OPT_FLOATS = {"sgd_tau"}


def _coerce(name: str, value: Any, line: Optional[int]):
    def bad(msg):
        return ConfigError(name, msg, line)

    if name in _PAIR or name in _TRIPLE:
        k = 2 if name in _PAIR else 3
        if not isinstance(value, (list, tuple)) or len(value) != k:
            raise bad(f"expected a list of {k} numbers")
        try:
            return tuple(float(v) for v in value)
        except (TypeError, ValueError):
            raise bad("entries must be numbers") from None
    if name in _NAMES:
        if isinstance(value, str):
            value = [value]
        if not isinstance(value, (list, tuple)) or not value:
            raise bad("expected a nonempty list of parameter names")
        unknown = [v for v in value if v not in PARAM_NAMES]
        if unknown:
            raise bad(f"unknown parameter(s) {unknown}; choose from {list(PARAM_NAMES)}")
        return tuple(n for n in PARAM_NAMES if n in value)
    if name in _BOOLS:
        if not isinstance(value, bool):
            raise bad("expected true or false")
        return value
    if name in _INTS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad("expected an integer")
        return value
    if name in _STRS:
        if not isinstance(value, str):
            raise bad("expected a string")
        return value
    if name in _OPT_FLOATS and value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise bad("expected a number")
    return float(value)


def validate(cfg: ExperimentConfig, lines: dict) -> ExperimentConfig:
    """Cross-field checks; raises :class:`ConfigError` naming the field."""

    def fail(name, msg):
        raise ConfigError(name, msg, lines.get(name))

    if cfg.model not in MODELS:
        fail("model", f"must be one of {MODELS}")
    if cfg.estimator not in ESTIMATORS:
        fail("estimator", f"must be one of {ESTIMATORS}")
    for name in ("distance", "hurst_1d_distance"):
        if getattr(cfg, name) not in ("cf", "w1"):
            fail(name, "must be 'cf' or 'w1'")
    for name in ("box_xi", "box_sigma", "box_hurst"):
        lo, hi = getattr(cfg, name)
        if not lo < hi:
            fail(name, f"lower bound {lo} must be < upper bound {hi}")
    if cfg.box_xi[0] <= 0 or cfg.box_sigma[0] <= 0:
        fail("box_xi" if cfg.box_xi[0] <= 0 else "box_sigma", "bounds must be positive")
    if not (0 < cfg.box_hurst[0] and cfg.box_hurst[1] < 1):
        fail("box_hurst", "bounds must lie inside (0, 1)")
    xi, sigma, hurst = cfg.theta_true
    if not (xi > 0 and sigma > 0 and 0 < hurst < 1):
        fail("theta_true", "need xi > 0, sigma > 0, 0 < H < 1")
    for name in ("fine_step", "lag_h", "cf_p", "euler_fine_step", "ident_h", "sgd_calibration_fraction"):
        if not getattr(cfg, name) > 0:
            fail(name, "must be positive")
    if cfg.burn_in < 0:
        fail("burn_in", "must be non-negative")
    for name in ("k0", "n", "cf_mc_samples", "sgd_iterations", "sgd_iterations_3d", "sgd_batch",
                 "euler_k0", "euler_n_points", "ident_grid", "hist_bins", "trials"):
        if getattr(cfg, name) < 1:
            fail(name, "must be >= 1")
    if cfg.q < 0 or cfg.hurst_1d_q < 0:
        fail("q" if cfg.q < 0 else "hurst_1d_q", "must be >= 0")
    if cfg.q + 1 < len(cfg.free):
        fail("q", f"q + 1 = {cfg.q + 1} cannot identify {len(cfg.free)} free parameters")
    if not 0 <= cfg.master_seed < 2**64:
        fail("master_seed", "must be a 64-bit unsigned integer")
    if not cfg.ident_h < 1:
        fail("ident_h", "must lie in (0, 1)")
    if cfg.sgd_tau is not None and cfg.sgd_tau <= 0:
        fail("sgd_tau", "must be positive")
    ratio = cfg.lag_h / cfg.step
    if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
        fail("lag_h", f"must be a positive multiple of fine_step * k0 = {cfg.step:g}")
    if not cfg.lag_override and abs(cfg.lag_h - cfg.step) > 1e-12 * cfg.step:
        fail("lag_h", f"must equal fine_step * k0 = {cfg.step:g} unless lag_override is true")
    try:
        drift = cfg.drift()
    except ValueError as exc:
        fail("perturbation", str(exc))
    if cfg.fine_step > drift.gamma_max:
        fail("fine_step", f"exceeds the stability bound {drift.gamma_max:.4g} of the drift on box_xi")
    if cfg.model != "ou":
        eu_ratio = cfg.lag_h / (cfg.euler_fine_step * cfg.euler_k0)
        if abs(eu_ratio - round(eu_ratio)) > 1e-9 or round(eu_ratio) < 1:
            fail("euler_k0", "lag_h must be a multiple of euler_fine_step * euler_k0")
        if cfg.euler_fine_step > drift.gamma_max:
            fail("euler_fine_step", f"exceeds the stability bound {drift.gamma_max:.4g}")
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a flat YAML mapping; unknown keys are errors."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError("<document>", f"not valid YAML: {exc}", mark.line + 1 if mark else None) from None
    if node is None:
        return validate(ExperimentConfig(), {})
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError("<document>", "top level must be a key: value mapping", node.start_mark.line + 1)
    lines = {k.value: k.start_mark.line + 1 for k, _ in node.value}
    data = yaml.safe_load(text)
    known = {f.name for f in fields(ExperimentConfig)}
    kw = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(str(key), "unknown field", lines.get(key))
        kw[key] = _coerce(key, value, lines.get(key))
    return validate(ExperimentConfig(**kw), lines)


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return validate(ExperimentConfig(), {})
    return parse_config(Path(path).read_text())
