"""Monte Carlo estimation of detection delay and run length to false alarm.

Replications are independent: replication r of a run with master seed s
draws from generators spawned at (s, r), so every record is a pure function
of (configuration, master seed, replication index) and aggregation order
never matters. Hot detectors advance through compiled chunk kernels; custom
detector factories fall back to stepping the public state machines.
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import SimulationError
from .mixture import bayes_log_table
from .model import ChangeScenario, NetworkModel, Schedule, UniformRandomSchedule, sample_block

KERNEL_DETECTORS = ("mixture", "bayesian", "generalized", "efficient")

_CUSUM_CODES = {
    "mixture": _kernels.DET_MIXTURE,
    "bayesian": _kernels.DET_BAYES,
    "generalized": _kernels.DET_GENERALIZED,
}


@dataclass(frozen=True)
class RunRecord:
    """One replication: when the detector stopped, or that it never did."""

    detector_name: str
    threshold_b: float
    replication_seed: int
    change_point: float
    stop_time: int
    censored: bool
    delay: Optional[int]


@dataclass(frozen=True)
class SweepRow:
    b: float
    warl: float
    warl_se: float
    wadd: float
    wadd_se: float
    reps: int
    censored: int


@dataclass(frozen=True)
class SweepResult:
    detector_name: str
    rows: tuple


# ---------------------------------------------------------------------------
# Prepared per-model kernel inputs
# ---------------------------------------------------------------------------


class _Tables:
    def __init__(self, model: NetworkModel):
        self.caps = model.sizes_array
        self.alpha = model.alpha_array
        if model.kind == "discrete":
            self.logp0 = model.log_pmf_matrix("pre")
            self.logp1 = model.log_pmf_matrix("post")
            with np.errstate(invalid="ignore"):
                self.bayes_table = bayes_log_table(model, "post") - bayes_log_table(model, "pre")
        else:
            self.means0, self.vars0 = model.gaussian_params("pre")
            self.means1, self.vars1 = model.gaussian_params("post")
            self.logalpha = np.log(self.alpha)


class GapCache:
    """Shared memo of drift increments, keyed by pooled window counts.

    Entries are pure functions of the counts (cold-start solves), so one
    cache may serve many replications and threads without affecting results.
    """

    MAX_WINDOW_STEPS = 64

    def __init__(self, model: NetworkModel):
        model.require_discrete()
        X = model.alphabet_size
        n = model.n
        limit = self.MAX_WINDOW_STEPS * n
        max_total = 0
        t = n
        while t <= limit and math.comb(t + X, X) <= 2**62:
            max_total = t
            t += n
        self.max_total = max_total
        rows = max_total + X
        pascal = np.zeros((rows + 1, X + 1), dtype=np.int64)
        for r in range(rows + 1):
            pascal[r, 0] = 1
            for c in range(1, X + 1):
                pascal[r, c] = min(math.comb(r, c), 2**62)
        self.pascal = pascal
        n_keys = math.comb(max_total + X, X) if max_total else 1
        bits = min(20, max(12, int(4 * n_keys - 1).bit_length()))
        cap = 1 << bits
        self.keys = np.zeros(cap, dtype=np.int64)
        self.vals = np.zeros(cap, dtype=np.float64)
        self.fill = np.zeros(1, dtype=np.int64)


# ---------------------------------------------------------------------------
# Single-replication simulation
# ---------------------------------------------------------------------------


def _seed_sequences(master_seed: int, rep: int):
    sample = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(rep, 0))
    labels = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(rep, 1))
    return sample, labels


def replication_seed(master_seed: int, rep: int) -> int:
    sample, _ = _seed_sequences(master_seed, rep)
    return int(sample.generate_state(1, np.uint64)[0])


def _chunk_iter(horizon: int):
    sizes = (256, 1024)
    i = 0
    done = 0
    while done < horizon:
        size = sizes[i] if i < len(sizes) else 4096
        size = min(size, horizon - done)
        yield done, size
        done += size
        i += 1


def _block_for(model, stream, rng, scenario: ChangeScenario, t_done: int, count: int):
    """Samples for steps t_done+1 .. t_done+count, honoring the change point."""
    nu = scenario.change_point
    first, last = t_done + 1, t_done + count
    if nu == math.inf or last < nu:
        return sample_block(model, stream, "pre", rng, count)
    if first >= nu:
        return sample_block(model, stream, "post", rng, count)
    n_pre = int(nu) - first
    pre = sample_block(model, stream, "pre", rng, n_pre)
    post = sample_block(model, stream, "post", rng, count - n_pre)
    return np.vstack((pre, post))


def _run_kernel_detector(
    model: NetworkModel,
    tables: _Tables,
    detector: str,
    b: float,
    scenario: ChangeScenario,
    schedule: Schedule,
    master_seed: int,
    rep: int,
    cache: Optional[GapCache],
) -> tuple[int, bool]:
    sample_ss, label_ss = _seed_sequences(master_seed, rep)
    rng = np.random.default_rng(sample_ss)
    stream = schedule.bind(model, label_ss)
    if detector == "efficient":
        S = model.alphabet_size
        counts = np.zeros(S, dtype=np.int64)
        lam0 = np.zeros(S, dtype=np.float64)
        lam1 = np.zeros(S, dtype=np.float64)
        t_hat = 0
        w = 0.0
        for t_done, count in _chunk_iter(scenario.horizon):
            block = _block_for(model, stream, rng, scenario, t_done, count)
            off, t_hat, w = _kernels.run_efficient_chunk(
                block, tables.logp0, tables.logp1, tables.alpha, b,
                counts, t_hat, w, lam0, lam1,
                cache.keys, cache.vals, cache.fill, cache.pascal,
                cache.max_total, 100_000,
            )
            if off == _kernels.CHUNK_SOLVER_FAILED:
                raise SimulationError(
                    f"exponent solver failed in replication {rep} near step {t_done}"
                )
            if off >= 0:
                return t_done + off + 1, False
        return scenario.horizon, True
    code = _CUSUM_CODES[detector]
    w = 0.0
    for t_done, count in _chunk_iter(scenario.horizon):
        block = _block_for(model, stream, rng, scenario, t_done, count)
        if model.kind == "discrete":
            w, off = _kernels.run_cusum_chunk_discrete(
                code, block, tables.logp0, tables.logp1, tables.caps,
                tables.bayes_table, w, b,
            )
        else:
            w, off = _kernels.run_cusum_chunk_gaussian(
                code, block, tables.means0, tables.vars0, tables.means1,
                tables.vars1, tables.caps, tables.logalpha, w, b,
            )
        if off >= 0:
            return t_done + off + 1, False
    return scenario.horizon, True


def _run_factory_detector(
    model, factory: Callable, b, scenario, schedule, master_seed, rep
) -> tuple[int, bool]:
    from .model import generate_batch

    sample_ss, label_ss = _seed_sequences(master_seed, rep)
    rng = np.random.default_rng(sample_ss)
    stream = schedule.bind(model, label_ss)
    det = factory(model, b)
    for t in range(1, scenario.horizon + 1):
        batch = generate_batch(model, stream, scenario.regime_at(t), rng)
        state = det.step(batch)
        if state.stopped:
            return t, False
    return scenario.horizon, True


def simulate_runs(
    model: NetworkModel,
    detector,
    b: float,
    scenario: ChangeScenario,
    schedule: Schedule,
    reps: int,
    master_seed: int = 0,
    threads: int = 1,
) -> list[RunRecord]:
    """Run independent replications of one detector; records sorted by index.

    ``detector`` is one of the kernel detector names, or a factory callable
    ``(model, b) -> sequential detector`` run through the public API.
    """
    if reps < 1:
        raise SimulationError("need at least one replication")
    by_name = isinstance(detector, str)
    if by_name and detector not in KERNEL_DETECTORS:
        raise ValueError(f"unknown detector {detector!r}")
    if by_name and detector == "efficient":
        model.require_discrete()
    name = detector if by_name else getattr(detector, "detector_name", "custom")
    tables = _Tables(model) if by_name else None

    stops = np.zeros(reps, dtype=np.int64)
    cens = np.zeros(reps, dtype=bool)

    def work(lo: int, hi: int):
        cache = GapCache(model) if by_name and detector == "efficient" else None
        for rep in range(lo, hi):
            if by_name:
                stop, censored = _run_kernel_detector(
                    model, tables, detector, b, scenario, schedule, master_seed, rep, cache
                )
            else:
                stop, censored = _run_factory_detector(
                    model, detector, b, scenario, schedule, master_seed, rep
                )
            stops[rep] = stop
            cens[rep] = censored

    threads = max(1, int(threads))
    if threads == 1:
        work(0, reps)
    else:
        bounds = np.linspace(0, reps, threads + 1, dtype=int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(work, int(lo), int(hi))
                for lo, hi in zip(bounds[:-1], bounds[1:])
                if hi > lo
            ]
            for f in futures:
                f.result()

    nu = scenario.change_point
    records = []
    for rep in range(reps):
        stop = int(stops[rep])
        delay = None
        if nu != math.inf:
            delay = max(0, stop - int(nu))
        records.append(
            RunRecord(
                detector_name=name,
                threshold_b=float(b),
                replication_seed=replication_seed(master_seed, rep),
                change_point=nu,
                stop_time=stop,
                censored=bool(cens[rep]),
                delay=delay,
            )
        )
    return records


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return mean, se


def estimate_warl(
    model: NetworkModel,
    detector,
    b: float,
    reps: int,
    schedule: Schedule,
    horizon: int,
    master_seed: int = 0,
    threads: int = 1,
    return_records: bool = False,
):
    """Mean run length of pure pre-change runs.

    Censored runs enter at the horizon, so the returned mean is a downward-
    biased (conservative) lower-bound estimator. Returns (mean, stderr,
    censored_fraction).
    """
    scenario = ChangeScenario(math.inf, horizon)
    records = simulate_runs(model, detector, b, scenario, schedule, reps, master_seed, threads)
    values = np.array([r.stop_time for r in records], dtype=np.float64)
    mean, se = _mean_se(values)
    frac = sum(r.censored for r in records) / reps
    out = (mean, se, frac)
    return (*out, records) if return_records else out


def estimate_wadd(
    model: NetworkModel,
    detector,
    b: float,
    reps: int,
    schedule: Schedule,
    horizon: int = 100_000,
    master_seed: int = 0,
    threads: int = 1,
    return_records: bool = False,
):
    """Mean detection delay with the change at step one and the statistic at
    its reset value, the worst pre-change configuration for these detectors.

    The run-length worst case over label sequences collapses for symmetric
    statistics, so a change at the first step from the zero state realizes
    the defining supremum; this modeling assumption is what the estimator
    computes. Censored runs contribute horizon-1 as a lower bound; more than
    1% censoring warns, more than 5% is an error. Returns (mean, stderr).
    """
    if reps < 100:
        raise SimulationError("delay estimation needs at least 100 replications")
    scenario = ChangeScenario(1, horizon)
    records = simulate_runs(model, detector, b, scenario, schedule, reps, master_seed, threads)
    n_cens = sum(r.censored for r in records)
    if n_cens > 0.05 * reps:
        raise SimulationError(
            f"{n_cens}/{reps} replications censored at horizon {horizon}; raise the horizon"
        )
    if n_cens > 0.01 * reps:
        warnings.warn(f"{n_cens}/{reps} delay replications censored at the horizon")
    values = np.array([r.delay for r in records], dtype=np.float64)
    mean, se = _mean_se(values)
    out = (mean, se)
    return (*out, records) if return_records else out


def tradeoff_sweep(
    model: NetworkModel,
    detectors: Sequence,
    b_grid: Sequence[float],
    reps: int,
    schedule: Optional[Schedule] = None,
    warl_horizon: int = 200_000,
    wadd_horizon: int = 100_000,
    master_seed: int = 0,
    threads: int = 1,
    collect_records: Optional[list] = None,
):
    """Delay/run-length pairs over an ascending threshold grid, per detector."""
    b_grid = [float(b) for b in b_grid]
    if any(b2 <= b1 for b1, b2 in zip(b_grid, b_grid[1:])):
        raise ValueError("threshold grid must be strictly ascending")
    schedule = schedule if schedule is not None else UniformRandomSchedule()
    results = []
    for det in detectors:
        rows = []
        for b in b_grid:
            warl, warl_se, cfrac, recs_w = estimate_warl(
                model, det, b, reps, schedule, warl_horizon, master_seed, threads,
                return_records=True,
            )
            wadd, wadd_se, recs_d = estimate_wadd(
                model, det, b, reps, schedule, wadd_horizon, master_seed, threads,
                return_records=True,
            )
            if collect_records is not None:
                collect_records.extend(recs_w)
                collect_records.extend(recs_d)
            censored = int(round(cfrac * reps)) + sum(r.censored for r in recs_d)
            rows.append(
                SweepRow(
                    b=b, warl=warl, warl_se=warl_se, wadd=wadd, wadd_se=wadd_se,
                    reps=reps, censored=censored,
                )
            )
        name = det if isinstance(det, str) else getattr(det, "detector_name", "custom")
        results.append(SweepResult(detector_name=name, rows=tuple(rows)))
    return results


def find_threshold_for_warl(
    model: NetworkModel,
    detector,
    target: float,
    reps: int,
    schedule: Optional[Schedule] = None,
    master_seed: int = 0,
    threads: int = 1,
    rel_tol: float = 0.05,
    max_rounds: int = 12,
):
    """Secant search (in log run length, which is nearly affine in the
    threshold) for a threshold whose estimated run length matches the target.

    Returns (b, warl, warl_se). Probing rounds use a quarter of the
    replications; the final point is re-estimated at full strength.
    """
    if target <= 1:
        raise ValueError("target run length must exceed 1")
    schedule = schedule if schedule is not None else UniformRandomSchedule()
    # probes run against a short horizon: censored-at-horizon means are lower
    # bounds, which still step the search in the right direction when the
    # current threshold sits far above the target
    probe_horizon = int(10 * target)
    horizon = int(30 * target)
    probe_reps = max(200, reps // 2)
    log_t = math.log(target)

    def probe(b, r, seed_shift):
        warl, se, _ = estimate_warl(
            model, detector, b, r, schedule, probe_horizon, master_seed + seed_shift,
            threads,
        )
        return warl, se

    b1 = math.log(target)
    w1, _ = probe(b1, probe_reps, 1)
    b2 = b1 + (log_t - math.log(w1))
    for round_ in range(max_rounds):
        w2, _ = probe(b2, probe_reps, 2 + round_)
        if abs(math.log(w2) - log_t) <= math.log1p(rel_tol):
            break
        d = math.log(w2) - math.log(w1)
        if abs(d) < 1e-9:
            step = log_t - math.log(w2)
        else:
            step = (log_t - math.log(w2)) * (b2 - b1) / d
        step = max(-3.0, min(3.0, step))
        b1, w1 = b2, w2
        b2 = b2 + step
        if b2 <= 0:
            b2 = b1 / 2 if b1 > 0 else 0.5
    warl, se, _ = estimate_warl(
        model, detector, b2, reps, schedule, horizon, master_seed, threads
    )
    return b2, warl, se


# ---------------------------------------------------------------------------
# Step-time benchmark
# ---------------------------------------------------------------------------


def benchmark_step_time(
    models: Sequence[NetworkModel],
    reps: int = 100,
    steps_per_measurement: int = 256,
    master_seed: int = 0,
    detectors: Sequence[str] = ("mixture", "efficient"),
):
    """Median and p90 wall-clock nanoseconds per statistic update.

    Timing loops run whole blocks of pre-change batches through the chunk
    kernels, so per-call dispatch overhead is amortized away and the numbers
    reflect the update itself. The efficient test runs with its memo cache
    disabled: every step pays its window update plus the (warm-started)
    exponent solves, the per-step cost of the algorithm as such.

    Returns rows (n, detector, median_ns, p90_ns).
    """
    rows = []
    dummy_keys = np.zeros(1, dtype=np.int64)
    dummy_vals = np.zeros(1, dtype=np.float64)
    dummy_pascal = np.ones((2, 2), dtype=np.int64)
    for mi, model in enumerate(models):
        model.require_discrete()
        tables = _Tables(model)
        rng = np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=(mi,)))
        stream = UniformRandomSchedule().bind(
            model, np.random.SeedSequence(entropy=master_seed, spawn_key=(mi, 1))
        )
        blocks = [
            sample_block(model, stream, "pre", rng, steps_per_measurement)
            for _ in range(reps)
        ]
        for det in detectors:
            times = np.empty(reps, dtype=np.float64)
            if det == "efficient":
                S = model.alphabet_size
                counts = np.zeros(S, dtype=np.int64)
                lam0 = np.zeros(S)
                lam1 = np.zeros(S)
                t_hat, w = 0, 0.0
                fill = np.zeros(1, dtype=np.int64)

                def run(block, t_hat, w):
                    return _kernels.run_efficient_chunk(
                        block, tables.logp0, tables.logp1, tables.alpha, 1e300,
                        counts, t_hat, w, lam0, lam1, dummy_keys, dummy_vals,
                        fill, dummy_pascal, 0, 100_000,
                    )

                _, t_hat, w = run(blocks[0], t_hat, w)  # jit warmup
                for i, block in enumerate(blocks):
                    t0 = time.perf_counter_ns()
                    _, t_hat, w = run(block, t_hat, w)
                    times[i] = (time.perf_counter_ns() - t0) / steps_per_measurement
            else:
                code = _CUSUM_CODES[det]
                w = 0.0
                _kernels.run_cusum_chunk_discrete(
                    code, blocks[0], tables.logp0, tables.logp1, tables.caps,
                    tables.bayes_table, w, 1e300,
                )
                for i, block in enumerate(blocks):
                    t0 = time.perf_counter_ns()
                    w, _ = _kernels.run_cusum_chunk_discrete(
                        code, block, tables.logp0, tables.logp1, tables.caps,
                        tables.bayes_table, w, 1e300,
                    )
                    times[i] = (time.perf_counter_ns() - t0) / steps_per_measurement
            rows.append(
                (
                    model.n,
                    det,
                    float(np.median(times)),
                    float(np.percentile(times, 90)),
                )
            )
    return rows
