"""Command-line front end: path, sweep, calibrate, bench, presets.

Numbers serialize with 17 significant digits so reruns of deterministic
commands produce byte-identical CSVs. SVG figures are rebuilt from the CSV
files they accompany, never from in-memory state, so every figure is
regenerable from the data alone.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import subprocess
import sys
import tempfile
from importlib import resources
from pathlib import Path

import numpy as np

from . import _backend, montecarlo
from .config import ExperimentConfig
from .detectors import DETECTOR_FACTORIES
from .errors import AnonQcdError, ConfigError
from .exponent import calibrate_threshold
from .model import NetworkModel, generate_batch
from .svgplot import LinePlot


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    v = float(x)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.17g}"


def _write_csv(path: Path, header: list, rows: list):
    with open(path, "w", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _read_csv(path: Path) -> list:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _resolve_config(spec: str) -> str:
    p = Path(spec)
    if p.exists():
        return p.read_text()
    name = spec[:-4] if spec.endswith(".cfg") else spec
    try:
        return resources.files("anonqcd.presets").joinpath(f"{name}.cfg").read_text()
    except (FileNotFoundError, ModuleNotFoundError):
        raise ConfigError(f"config {spec!r}: no such file and no preset of that name")


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_text(_resolve_config(args.config))
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None) is not None:
        cfg.out = Path(args.out)
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    if getattr(args, "reps", None) is not None:
        cfg.reps = args.reps
    cfg.out.mkdir(parents=True, exist_ok=True)
    return cfg


# ---------------------------------------------------------------------------
# path
# ---------------------------------------------------------------------------


def cmd_path(args) -> int:
    cfg = _load(args)
    if len(cfg.detectors) != 1:
        raise ConfigError("path needs exactly one detector")
    name = cfg.detectors[0]
    b = cfg.threshold
    if b == "auto":
        b = calibrate_threshold(cfg.model, cfg.gamma, cfg.resolution).threshold_b
    if b is None:
        raise ConfigError("path needs a threshold (or auto with gamma)")
    # run with an unreachable threshold so the trajectory spans the horizon;
    # the stopped column marks where the configured threshold was first hit
    detector = DETECTOR_FACTORIES[name](cfg.model, math.inf)
    sample_ss, label_ss = montecarlo._seed_sequences(cfg.seed, 0)
    rng = np.random.default_rng(sample_ss)
    stream = cfg.schedule.bind(cfg.model, label_ss)
    rows = []
    crossed = False
    nu_hat = 1
    prev_stat = 0.0
    for t in range(1, cfg.scenario.horizon + 1):
        batch = generate_batch(cfg.model, stream, cfg.scenario.regime_at(t), rng)
        state = detector.step(batch)
        if prev_stat <= 0.0:
            nu_hat = t
        prev_stat = state.statistic
        crossed = crossed or state.statistic >= b
        rows.append((t, state.statistic, getattr(state, "nu_hat", nu_hat), crossed))
    traj = cfg.out / "trajectory.csv"
    _write_csv(traj, ["t", "statistic", "nu_hat", "stopped"], rows)

    data = _read_csv(traj)
    plot = LinePlot(
        title=cfg.title or f"{name} statistic path",
        xlabel="time step",
        ylabel="statistic",
    )
    plot.add(name, [r["t"] for r in data], [r["statistic"] for r in data], marker=False)
    if cfg.scenario.change_point != math.inf:
        plot.vlines.append((float(cfg.scenario.change_point), "change"))
    plot.hlines.append((float(b), "threshold"))
    plot.write(cfg.out / "path.svg")
    print(f"wrote {traj} and {cfg.out / 'path.svg'}")
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if not cfg.detectors:
        raise ConfigError("sweep needs at least one detector")
    if not cfg.b_grid:
        raise ConfigError("sweep needs a b_grid")
    records: list = []
    results = montecarlo.tradeoff_sweep(
        cfg.model,
        cfg.detectors,
        cfg.b_grid,
        cfg.reps,
        schedule=cfg.schedule,
        warl_horizon=cfg.warl_horizon,
        wadd_horizon=cfg.wadd_horizon,
        master_seed=cfg.seed,
        threads=cfg.threads,
        collect_records=records,
    )
    sweep_rows = [
        (res.detector_name, r.b, r.warl, r.warl_se, r.wadd, r.wadd_se, r.reps, r.censored)
        for res in results
        for r in res.rows
    ]
    sweep_csv = cfg.out / "sweep.csv"
    _write_csv(
        sweep_csv,
        ["detector", "b", "warl", "warl_se", "wadd", "wadd_se", "reps", "censored"],
        sweep_rows,
    )
    run_rows = [
        (r.detector_name, r.threshold_b, r.replication_seed, r.change_point,
         r.stop_time, r.censored, "" if r.delay is None else r.delay)
        for r in records
    ]
    with open(cfg.out / "runs.csv", "w", newline="\n") as f:
        f.write("detector,b,seed,nu,stop_time,censored,delay\n")
        for row in run_rows:
            f.write(",".join(_fmt(v) if v != "" else "" for v in row) + "\n")

    data = _read_csv(sweep_csv)
    plot = LinePlot(
        title=cfg.title or "Delay vs run length",
        xlabel="log10 worst-case average run length",
        ylabel="worst-case average detection delay",
        subtitle="x-axis is log10 of the estimated run length",
    )
    for det in dict.fromkeys(r["detector"] for r in data):
        pts = [r for r in data if r["detector"] == det]
        plot.add(
            det,
            [math.log10(float(r["warl"])) for r in pts],
            [float(r["wadd"]) for r in pts],
        )
    plot.write(cfg.out / "sweep.svg")
    print(f"wrote {sweep_csv}, {cfg.out / 'runs.csv'} and {cfg.out / 'sweep.svg'}")
    return 0


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------


def cmd_calibrate(args) -> int:
    cfg = _load(args)
    gamma = args.gamma if args.gamma is not None else cfg.gamma
    if gamma is None:
        raise ConfigError("calibrate needs gamma (config key or --gamma)")
    if gamma <= 1:
        raise ConfigError("gamma must exceed 1")
    result = calibrate_threshold(cfg.model, gamma, cfg.resolution)
    out = cfg.out / "calibration.csv"
    _write_csv(
        out,
        ["gamma", "threshold_b", "h", "guaranteed_warl", "conservative"],
        [(gamma, result.threshold_b, result.h, result.guaranteed_warl,
          result.conservative_flag)],
    )
    print(f"threshold_b = {result.threshold_b:.6f}")
    print(f"h = {result.h:.6e}")
    print(f"guaranteed_warl = {result.guaranteed_warl:.6g}")
    print(f"conservative = {result.conservative_flag}")
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def _ladder_models(cfg: ExperimentConfig) -> list:
    if cfg.model.K != 2:
        raise ConfigError("bench ladders are built from a two-group config")
    if not cfg.bench_ladder:
        raise ConfigError("bench needs a bench_ladder")
    models = []
    for n in cfg.bench_ladder:
        if n < 2:
            raise ConfigError("ladder sizes must be at least 2")
        sizes = (n - n // 2, n // 2)
        models.append(
            NetworkModel(group_sizes=sizes, pre=cfg.model.pre, post=cfg.model.post)
        )
    return models


def cmd_bench(args) -> int:
    cfg = _load(args)
    models = _ladder_models(cfg)
    rows = montecarlo.benchmark_step_time(
        models,
        reps=cfg.bench_reps,
        steps_per_measurement=cfg.bench_steps,
        master_seed=cfg.seed,
    )
    bench_csv = cfg.out / "bench.csv"
    _write_csv(bench_csv, ["n", "detector", "median_ns", "p90_ns"], rows)

    data = _read_csv(bench_csv)
    plot = LinePlot(
        title=cfg.title or "Per-step update cost",
        xlabel="network size n",
        ylabel="log10 median ns per update",
    )
    for det in dict.fromkeys(r["detector"] for r in data):
        pts = [r for r in data if r["detector"] == det]
        plot.add(
            det,
            [int(r["n"]) for r in pts],
            [math.log10(float(r["median_ns"])) for r in pts],
        )
    plot.write(cfg.out / "bench.svg")
    print(f"wrote {bench_csv} and {cfg.out / 'bench.svg'}")

    if args.compare_backends:
        merged = [(_backend.BACKEND, r[0], r[1], r[2], r[3]) for r in rows]
        other = "numpy" if _backend.USE_NUMBA else "numba"
        with tempfile.TemporaryDirectory() as tmp:
            env = dict(os.environ)
            env["ANONQCD_NUMBA"] = "0" if other == "numpy" else "1"
            cmd = [
                sys.executable, "-m", "anonqcd.cli", "bench",
                "--config", args.config, "--out", tmp, "--seed", str(cfg.seed),
            ]
            proc = subprocess.run(cmd, env=env, capture_output=True, text=True)
            if proc.returncode != 0:
                raise AnonQcdError(
                    f"backend-comparison subprocess failed: {proc.stderr.strip()}"
                )
            for r in _read_csv(Path(tmp) / "bench.csv"):
                merged.append(
                    (other, int(r["n"]), r["detector"],
                     float(r["median_ns"]), float(r["p90_ns"]))
                )
        backends_csv = cfg.out / "bench_backends.csv"
        _write_csv(
            backends_csv, ["backend", "n", "detector", "median_ns", "p90_ns"], merged
        )
        print(f"wrote {backends_csv}")
    return 0


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------


def cmd_presets(args) -> int:
    if args.action != "list":
        raise ConfigError(f"unknown presets action {args.action!r}")
    root = resources.files("anonqcd.presets")
    names = sorted(
        entry.name[:-4] for entry in root.iterdir() if entry.name.endswith(".cfg")
    )
    for name in names:
        first = root.joinpath(f"{name}.cfg").read_text().splitlines()[0]
        desc = first.lstrip("# ").strip()
        print(f"{name:8s} {desc}")
    return 0


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="anonqcd",
        description="Quickest change detection for anonymous heterogeneous sensor networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="config file path or preset name")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--threads", type=int, help="replication worker cap")
        p.add_argument("--reps", type=int, help="replication count override")

    common(sub.add_parser("path", help="single statistic trajectory"))
    common(sub.add_parser("sweep", help="delay vs run-length tradeoff sweep"))
    p_cal = sub.add_parser("calibrate", help="analytic threshold for the efficient test")
    common(p_cal)
    p_cal.add_argument("--gamma", type=float, help="run-length target override")
    p_bench = sub.add_parser("bench", help="per-step update cost ladder")
    common(p_bench)
    p_bench.add_argument(
        "--compare-backends", action="store_true",
        help="also time the other kernel backend in a subprocess",
    )
    p_presets = sub.add_parser("presets", help="packaged experiment configs")
    p_presets.add_argument("action", choices=["list"])

    args = parser.parse_args(argv)
    handlers = {
        "path": cmd_path,
        "sweep": cmd_sweep,
        "calibrate": cmd_calibrate,
        "bench": cmd_bench,
        "presets": cmd_presets,
    }
    try:
        return handlers[args.command](args)
    except AnonQcdError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
