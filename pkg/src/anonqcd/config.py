"""Flat key/value experiment configs.

Grammar: one ``key = value`` pair per line, ``#`` starts a comment, blank
lines ignored. Dotted keys address per-group distributions (``pre.1`` is
group 1's pre-change law). Unknown keys are rejected outright so typos
cannot silently change an experiment.

    kind = discrete | gaussian
    group_sizes = 1,1                # one entry per group
    pre.1 = binomial:10,0.5          # binomial:TRIALS,P
    pre.2 = pmf:0.2,0.8              # explicit masses
    post.1 = normal:0.5,1            # normal:MEAN,VARIANCE
    schedule = uniform | fixed | fixed:1,2,... | cyclic:STEP
    change_point = 500 | inf
    horizon = 1000
    detectors = mixture,bayesian,generalized,efficient
    threshold = 5.0 | auto           # auto needs gamma
    gamma = 1000
    b_grid = 2,3,4,5                 # sweep thresholds, ascending
    reps = 2000
    warl_horizon = 200000
    wadd_horizon = 100000
    seed = 20250801
    threads = 1
    out = out/run1
    resolution = 0.01                # calibration search resolution
    bench_ladder = 2,4,6,8,10        # bench network sizes (K=2 splits)
    bench_reps = 100
    bench_steps = 256
    title = My experiment
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .detectors import DETECTOR_FACTORIES
from .errors import ConfigError
from .model import (
    ChangeScenario,
    CyclicRotationSchedule,
    DiscreteDistribution,
    FixedSchedule,
    GaussianDistribution,
    Labeling,
    NetworkModel,
    UniformRandomSchedule,
    binomial_pmf,
)

_SCALAR_KEYS = {
    "kind", "group_sizes", "schedule", "change_point", "horizon", "detectors",
    "threshold", "gamma", "b_grid", "reps", "warl_horizon", "wadd_horizon",
    "seed", "threads", "out", "resolution", "bench_ladder", "bench_reps",
    "bench_steps", "title",
}
_DOTTED_PREFIXES = ("pre.", "post.")

_DEFAULTS = {
    "schedule": "uniform",
    "change_point": "inf",
    "horizon": "1000",
    "reps": "2000",
    "warl_horizon": "200000",
    "wadd_horizon": "100000",
    "seed": "20250801",
    "threads": "1",
    "out": "out",
    "resolution": "0.01",
    "bench_reps": "100",
    "bench_steps": "256",
    "title": "",
}


def parse_config_text(text: str) -> dict:
    """Raw key/value pairs with grammar and unknown-key validation."""
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if key not in _SCALAR_KEYS and not key.startswith(_DOTTED_PREFIXES):
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        pairs[key] = value
    return pairs


def _parse_distribution(spec: str, kind: str):
    name, _, args = spec.partition(":")
    name = name.strip().lower()
    try:
        if name == "binomial":
            trials, p = args.split(",")
            dist = binomial_pmf(int(trials), float(p))
        elif name == "pmf":
            masses = np.array([float(x) for x in args.split(",")])
            dist = DiscreteDistribution(masses / masses.sum())
        elif name == "normal":
            mean, var = args.split(",")
            dist = GaussianDistribution(float(mean), float(var))
        else:
            raise ConfigError(f"unknown distribution form {name!r}")
    except (ValueError, TypeError) as e:
        raise ConfigError(f"bad distribution spec {spec!r}: {e}") from e
    is_discrete = isinstance(dist, DiscreteDistribution)
    if (kind == "discrete") != is_discrete:
        raise ConfigError(f"distribution {spec!r} does not match kind={kind}")
    return dist


def _ints(value: str) -> list[int]:
    return [int(x) for x in value.split(",") if x.strip()]


def _floats(value: str) -> list[float]:
    return [float(x) for x in value.split(",") if x.strip()]


@dataclass
class ExperimentConfig:
    """Validated experiment description, ready to run."""

    model: NetworkModel
    schedule: object
    scenario: ChangeScenario
    detectors: list[str]
    threshold: object  # float or "auto"
    gamma: float | None
    b_grid: list[float]
    reps: int
    warl_horizon: int
    wadd_horizon: int
    seed: int
    threads: int
    out: Path
    resolution: float
    bench_ladder: list[int]
    bench_reps: int
    bench_steps: int
    title: str

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        pairs = dict(_DEFAULTS)
        pairs.update(parse_config_text(text))
        return cls._build(pairs)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())

    @classmethod
    def _build(cls, pairs: dict) -> "ExperimentConfig":
        try:
            kind = pairs["kind"].strip().lower()
            sizes = _ints(pairs["group_sizes"])
        except KeyError as e:
            raise ConfigError(f"missing required key {e.args[0]!r}") from e
        if kind not in ("discrete", "gaussian"):
            raise ConfigError(f"kind must be discrete or gaussian, got {kind!r}")
        K = len(sizes)
        pre, post = [], []
        for k in range(1, K + 1):
            for regime, into in (("pre", pre), ("post", post)):
                key = f"{regime}.{k}"
                if key not in pairs:
                    raise ConfigError(f"missing distribution {key!r}")
                into.append(_parse_distribution(pairs[key], kind))
        extra = [
            key for key in pairs
            if key.startswith(_DOTTED_PREFIXES)
            and int(key.split(".", 1)[1]) not in range(1, K + 1)
        ]
        if extra:
            raise ConfigError(f"distribution keys for nonexistent groups: {extra}")
        try:
            model = NetworkModel(group_sizes=tuple(sizes), pre=tuple(pre), post=tuple(post))
        except Exception as e:
            raise ConfigError(f"invalid model: {e}") from e

        schedule = cls._parse_schedule(pairs["schedule"], model)
        cp_raw = pairs["change_point"].strip().lower()
        change_point = math.inf if cp_raw in ("inf", "infinity", "none") else int(cp_raw)
        scenario = ChangeScenario(change_point, int(pairs["horizon"]))

        detectors = [d.strip() for d in pairs.get("detectors", "").split(",") if d.strip()]
        for d in detectors:
            if d not in DETECTOR_FACTORIES:
                raise ConfigError(
                    f"unknown detector {d!r}; choose from {sorted(DETECTOR_FACTORIES)}"
                )
        threshold_raw = pairs.get("threshold", "").strip().lower()
        if threshold_raw == "auto":
            threshold = "auto"
        elif threshold_raw:
            threshold = float(threshold_raw)
        else:
            threshold = None
        gamma = float(pairs["gamma"]) if "gamma" in pairs else None
        if threshold == "auto" and gamma is None:
            raise ConfigError("threshold = auto requires a gamma target")
        return cls(
            model=model,
            schedule=schedule,
            scenario=scenario,
            detectors=detectors,
            threshold=threshold,
            gamma=gamma,
            b_grid=_floats(pairs.get("b_grid", "")),
            reps=int(pairs["reps"]),
            warl_horizon=int(pairs["warl_horizon"]),
            wadd_horizon=int(pairs["wadd_horizon"]),
            seed=int(pairs["seed"]),
            threads=int(pairs["threads"]),
            out=Path(pairs["out"]),
            resolution=float(pairs["resolution"]),
            bench_ladder=_ints(pairs.get("bench_ladder", "")),
            bench_reps=int(pairs["bench_reps"]),
            bench_steps=int(pairs["bench_steps"]),
            title=pairs["title"],
        )

    @staticmethod
    def _parse_schedule(spec: str, model: NetworkModel):
        name, _, args = spec.strip().partition(":")
        name = name.lower()
        if name == "uniform":
            return UniformRandomSchedule()
        if name == "cyclic":
            return CyclicRotationSchedule(step=int(args) if args else 1)
        if name == "fixed":
            if not args:
                return FixedSchedule()
            labels = np.array([int(x) - 1 for x in args.split(",")], dtype=np.int64)
            try:
                labeling = Labeling(labels, model.group_sizes)
            except Exception as e:
                raise ConfigError(f"bad fixed labeling: {e}") from e
            return FixedSchedule(labeling)
        raise ConfigError(f"unknown schedule {spec!r}")
