"""Command-line harness: simulate | estimate | identifiability | benchmark."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .cf_distance import CFConfig
from .config import ConfigError, ExperimentConfig, load_config
from .estimator import (
    EstimationProblem,
    EulerConfig,
    SGDConfig,
    contrast_value,
    estimate_1d,
    estimate_sgd,
    estimate_simulated,
)
from .fbm import sample_fbm
from .fou_analytic import OUParams, identifiability_margin, injectivity_gap
from .rng import PHI_STREAM_OFFSET, RngStream
from .sde_sim import AugmentedPath, ThetaVector, fine_steps_needed, observe

__all__ = ["main", "TrialRecord", "generate_observations", "run_trial", "summarize", "read_records"]

EXIT_OK, EXIT_VALIDATION, EXIT_TRIALS = 0, 2, 3
FAILURE_LIMIT = 0.10
PAIR_CASES = {
    "sigma_hurst": ("sigma", "hurst"),
    "xi_hurst": ("xi", "hurst"),
    "xi_sigma": ("xi", "sigma"),
}


@dataclass(frozen=True)
class TrialRecord:
    """One estimation trial; serializes to a single JSON line."""

    trial: int
    seed: int
    case: str
    theta_hat: Optional[dict]
    contrast: Optional[float]
    wall_time: Optional[float]
    iterations: Optional[int]
    final_loss: Optional[float]
    boundary_hit: Optional[bool]
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, allow_nan=True)

    @classmethod
    def from_json(cls, line: str) -> "TrialRecord":
        return cls(**json.loads(line))


def read_records(path) -> list[TrialRecord]:
    with open(path) as fh:
        return [TrialRecord.from_json(line) for line in fh if line.strip()]


def generate_observations(cfg: ExperimentConfig, trial: int) -> AugmentedPath:
    """Fine Euler path at theta_true driven by the trial's fBm stream, augmented with q lags."""
    theta = cfg.theta()
    drift = cfg.drift()
    burn = int(math.ceil(cfg.burn_in / cfg.fine_step - 1e-9))
    n_fine = fine_steps_needed(cfg.n, cfg.q, cfg.k0, cfg.lag_ratio, burn)
    noise = sample_fbm(theta.hurst, cfg.fine_step, n_fine, RngStream(cfg.master_seed, trial))
    obs, _ = observe(drift, theta, noise, cfg.k0, cfg.n, cfg.q, cfg.lag_h, burn_steps=burn)
    return obs


def _phi_stream(cfg: ExperimentConfig, trial: int) -> RngStream:
    return RngStream(cfg.master_seed, PHI_STREAM_OFFSET + trial)


def build_problem(cfg: ExperimentConfig, obs: AugmentedPath, trial: int, free, q: int, distance: str) -> EstimationProblem:
    obs = obs.truncate(q)
    theta = cfg.theta(free=free)
    general = cfg.model != "ou"
    return EstimationProblem(
        observations=obs,
        theta=theta,
        box=cfg.box,
        distance=distance,
        cf=CFConfig(obs.dim, cfg.cf_p, cfg.cf_mc_samples, _phi_stream(cfg, trial)),
        drift=cfg.drift() if general else None,
        euler=EulerConfig(cfg.euler_fine_step, cfg.euler_k0, cfg.euler_n_points) if general else None,
        noise_rng=RngStream(cfg.master_seed, trial, (1,)) if general else None,
    )


def sgd_config(cfg: ExperimentConfig, trial: int, iterations: int) -> SGDConfig:
    return SGDConfig(
        init_theta=ThetaVector.ou(*cfg.sgd_init),
        batch_size=cfg.sgd_batch,
        iterations=iterations,
        tau=cfg.sgd_tau,
        rng=_phi_stream(cfg, trial).child(1),
        calibration_fraction=cfg.sgd_calibration_fraction,
    )


def run_trial(cfg: ExperimentConfig, trial: int, free=None, q=None, distance=None, iterations=None,
              record_timing=False, obs=None, case="estimate"):
    """Estimate on one dataset; returns (TrialRecord, SGDTrace or None).

    Failures are captured in the record rather than raised.
    """
    free = tuple(cfg.free if free is None else free)
    q = cfg.q if q is None else q
    distance = cfg.distance if distance is None else distance
    start = time.perf_counter()
    trace = None
    try:
        if obs is None:
            obs = generate_observations(cfg, trial)
        problem = build_problem(cfg, obs, trial, free, q, distance)
        single = len(free) == 1
        kind = cfg.estimator
        if kind == "auto":
            kind = "simulated" if cfg.model != "ou" else ("1d" if single else "sgd")
        if kind == "1d" or (kind == "simulated" and single):
            est = estimate_1d(problem)
            theta_hat, contrast, its, loss, boundary = est.theta_hat, est.contrast, None, None, est.boundary_hit
        else:
            n_it = iterations or cfg.sgd_iterations
            sgd = sgd_config(cfg, trial, n_it)
            run = estimate_simulated if kind == "simulated" else estimate_sgd
            trace = run(problem, sgd, truth=cfg.theta(free=free))
            theta_hat, its, loss = trace.final, trace.iterations, float(trace.losses[-1])
            contrast, boundary = contrast_value(theta_hat, problem), None
        hat = {n: float(v) for n, v in zip(theta_hat.names, theta_hat.as_array()) if n in free}
        rec = TrialRecord(trial, cfg.master_seed, case, hat, float(contrast),
                          time.perf_counter() - start if record_timing else None, its, loss, boundary)
    except (ArithmeticError, ValueError, RuntimeError, OverflowError) as exc:
        rec = TrialRecord(trial, cfg.master_seed, case, None, None, None, None, None, None,
                          f"{type(exc).__name__}: {exc}")
    return rec, trace


def summarize(records: Sequence[TrialRecord], truth: dict) -> list[dict]:
    """Per-parameter mean, bias and (population) variance over successful trials."""
    rows = []
    ok = [r for r in records if r.ok]
    names = sorted({n for r in ok for n in r.theta_hat}, key=["xi", "sigma", "hurst"].index)
    for n in names:
        vals = np.array([r.theta_hat[n] for r in ok])
        mean = float(np.mean(vals))
        rows.append({
            "parameter": n,
            "true": truth[n],
            "mean": mean,
            "bias": mean - truth[n],
            "variance": float(np.var(vals)),
            "n_ok": len(vals),
            "n_failed": len(records) - len(ok),
        })
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        values = [row[h] for h in header] if isinstance(row, dict) else row
        w.writerow([_fmt(v) for v in values])
    path.write_text(buf.getvalue())


def write_jsonl(path: Path, records: Sequence[TrialRecord]) -> None:
    path.write_text("".join(r.to_json() + "\n" for r in records))


def _map_trials(cfg: ExperimentConfig, threads: int, record_timing: bool, **kw) -> list[TrialRecord]:
    indices = range(cfg.trials)
    if threads > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futs = [pool.submit(run_trial, cfg, t, record_timing=record_timing, **kw) for t in indices]
            return [f.result()[0] for f in futs]
    return [run_trial(cfg, t, record_timing=record_timing, **kw)[0] for t in indices]


def _truth(cfg: ExperimentConfig) -> dict:
    return dict(zip(["xi", "sigma", "hurst"], cfg.theta_true))


def _failure_exit(records: Sequence[TrialRecord]) -> int:
    failed = sum(not r.ok for r in records)
    return EXIT_TRIALS if failed > FAILURE_LIMIT * max(len(records), 1) else EXIT_OK


# Commands ---------------------------------------------------------------------------

def cmd_simulate(cfg: ExperimentConfig, out: Path, trial: int = 0) -> Path:
    """Write one augmented observation path as CSV (columns t, y, dy1..dyq)."""
    obs = generate_observations(cfg, trial)
    header = ["t", "y"] + [f"dy{i}" for i in range(1, cfg.q + 1)]
    t = cfg.step * np.arange(obs.n)
    rows = (dict(zip(header, [float(tk), *map(float, r)])) for tk, r in zip(t, obs.rows))
    path = out / "data.csv"
    write_csv(path, header, rows)
    return path


def read_data(path: Path, cfg: ExperimentConfig) -> AugmentedPath:
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["t", "y"] or any(h != f"dy{i}" for i, h in enumerate(header[2:], 1)):
            raise ConfigError("data", f"unexpected header {header}")
        rows = np.array([[float(x) for x in r[1:]] for r in reader])
    return AugmentedPath(lag_h=cfg.lag_h, q=len(header) - 2, rows=rows, step=cfg.step)


def cmd_estimate(cfg: ExperimentConfig, out: Path, data: Optional[Path] = None, threads: int = 1,
                 record_timing: bool = False) -> int:
    """Run the configured estimator over all trials (or once on ``data``)."""
    if data is not None:
        obs = read_data(data, cfg)
        if obs.q < cfg.q:
            raise ConfigError("q", f"data file holds q={obs.q} lags, config asks for {cfg.q}")
        records = [run_trial(cfg, 0, obs=obs, record_timing=record_timing)[0]]
    else:
        records = _map_trials(cfg, threads, record_timing)
    write_jsonl(out / "records.jsonl", records)
    summary = summarize(records, _truth(cfg))
    write_csv(out / "summary.csv", ["parameter", "true", "mean", "bias", "variance", "n_ok", "n_failed"], summary)
    return _failure_exit(records)


def identifiability_report(cfg: ExperimentConfig) -> dict:
    """Injectivity gaps and derivative-sign margins for the three parameter pairs."""
    h = cfg.ident_h
    g = cfg.ident_grid
    base = OUParams(*cfg.theta_true, lag_h=h)
    axes = {
        "xi": np.linspace(*cfg.box_xi, g),
        "sigma": np.linspace(*cfg.box_sigma, g),
        "hurst": np.linspace(*cfg.box_hurst, g),
    }
    report = {"lag_h": h, "grid": g, "cases": {}}
    for case, pair in PAIR_CASES.items():
        entry = {"free": list(pair)}
        try:
            gap = injectivity_gap(pair, axes, base)
            entry["injectivity_gap"] = gap
            entry["injective"] = bool(gap >= 1e-8)
        except ArithmeticError as exc:
            entry["injectivity_gap"] = None
            entry["injective"] = False
            entry["injectivity_error"] = str(exc)
        grid = {"xi": axes["xi"] if "xi" in pair else [cfg.theta_true[0]],
                "hurst": axes["hurst"] if "hurst" in pair else [cfg.theta_true[2]]}
        try:
            margin = identifiability_margin(case, grid, h)
            entry.update(margin.to_dict())
        except ArithmeticError as exc:
            entry.update({"passes": False, "margin_error": str(exc)})
        entry.pop("case", None)
        report["cases"][case] = entry
    report["all_pass"] = all(c["passes"] and c["injective"] for c in report["cases"].values())
    return report


def cmd_identifiability(cfg: ExperimentConfig, out: Path) -> Path:
    report = identifiability_report(cfg)
    path = out / "identifiability.json"
    path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    return path


FIG2_CASES = (("sigma", "hurst"), ("xi", "hurst"), ("xi", "sigma"))


def _histogram(values: np.ndarray, bins: int) -> list[dict]:
    if len(values) == 0:
        return []
    counts, edges = np.histogram(values, bins=bins)
    return [{"bin_lo": float(a), "bin_hi": float(b), "count": int(c)} for a, b, c in zip(edges[:-1], edges[1:], counts)]


def cmd_benchmark(cfg: ExperimentConfig, out: Path, threads: int = 1, record_timing: bool = False) -> int:
    """Single-parameter histograms, three 2-D SGD loss series and the 3-D series."""
    out.mkdir(parents=True, exist_ok=True)
    all_records: list[TrialRecord] = []
    summaries = []
    for name in ("xi", "sigma", "hurst"):
        q, dist = (cfg.hurst_1d_q, cfg.hurst_1d_distance) if name == "hurst" else (0, "w1")
        recs = _map_trials(cfg.replace(estimator="auto"), threads, record_timing, free=(name,), q=q, distance=dist,
                           case=f"fig1_{name}")
        all_records += recs
        vals = np.array([r.theta_hat[name] for r in recs if r.ok])
        write_csv(out / f"fig1_{name}.csv", ["bin_lo", "bin_hi", "count"], _histogram(vals, cfg.hist_bins))
        summaries += [dict(row, case=f"fig1_{name}") for row in summarize(recs, _truth(cfg))]
    obs = generate_observations(cfg, 0)
    for free in FIG2_CASES + (("xi", "sigma", "hurst"),):
        label = "_".join(free)
        iters = cfg.sgd_iterations if len(free) == 2 else cfg.sgd_iterations_3d
        rec, trace = run_trial(cfg.replace(estimator="sgd"), 0, free=free, q=len(free) - 1, distance="cf",
                               iterations=iters, record_timing=record_timing, obs=obs,
                               case=f"fig{2 if len(free) == 2 else 3}_{label}")
        all_records.append(rec)
        prefix = "fig2" if len(free) == 2 else "fig3"
        header = ["iteration", "loss", *free]
        rows = []
        if trace is not None:
            for k, (th, loss) in enumerate(zip(trace.thetas, trace.losses)):
                d = th.to_dict()
                rows.append({"iteration": k, "loss": float(loss), **{n: float(d[n]) for n in free}})
        write_csv(out / f"{prefix}_{label}.csv", header, rows)
    write_jsonl(out / "records.jsonl", all_records)
    write_csv(out / "summary.csv", ["case", "parameter", "true", "mean", "bias", "variance", "n_ok", "n_failed"],
              summaries)
    return _failure_exit(all_records)


# Entry point ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ergofbm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "estimate", "identifiability", "benchmark"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="flat YAML experiment file")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker processes for trials")
        p.add_argument("--record-timing", action="store_true", help="store wall times (breaks byte-identity)")
        if name == "simulate":
            p.add_argument("--trial", type=int, default=0)
        if name == "estimate":
            p.add_argument("--data", type=Path, default=None, help="CSV written by 'simulate'")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("seed", "must be a 64-bit unsigned integer")
            cfg = cfg.replace(master_seed=args.seed)
        if args.threads < 1:
            raise ConfigError("threads", "must be >= 1")
        out = Path(args.out if args.out is not None else cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            cmd_simulate(cfg, out, args.trial)
            return EXIT_OK
        if args.command == "estimate":
            return cmd_estimate(cfg, out, args.data, args.threads, args.record_timing)
        if args.command == "identifiability":
            cmd_identifiability(cfg, out)
            return EXIT_OK
        return cmd_benchmark(cfg, out, args.threads, args.record_timing)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
