"""Quickest change detection for anonymous heterogeneous sensor networks.

A fusion center receives unordered batches of samples from K groups of
sensors and must detect a distribution change as quickly as possible under a
false-alarm budget, without knowing which sample came from which group. The
package provides the exact label-mixture CuSum detector, two heuristic
baselines, a computationally efficient large-network test built on a convex
KL-exponent program with analytic threshold calibration, and a Monte Carlo
harness with a CLI for reproducing delay/false-alarm tradeoffs.
"""

from ._backend import BACKEND
from .detectors import (
    CusumState,
    EfficientState,
    EfficientTest,
    MlrtDecision,
    SequentialCusum,
    cusum_step,
    efficient_step,
    make_bayesian_cusum,
    make_efficient_test,
    make_generalized_cusum,
    make_mixture_cusum,
    mlrt_decide,
    new_cusum_state,
    new_efficient_state,
)
from .exponent import (
    CalibrationResult,
    ExponentSolution,
    calibrate_threshold,
    exact_mixture_kl,
    exponent,
    exponent_gap,
    log_warl_guarantee,
    solve_threshold,
    type_count,
    warl_exponent,
)
from .mixture import (
    EmpiricalType,
    LogLikelihoodRatio,
    bayesian_log_ratio,
    empirical_type,
    generalized_log_ratio,
    mixture_log_ratio,
    type_class_log_prob,
    type_class_log_ratio,
)
from .model import (
    ChangeScenario,
    CyclicRotationSchedule,
    DiscreteDistribution,
    FixedSchedule,
    GaussianDistribution,
    Labeling,
    NetworkModel,
    ObservationBatch,
    UniformRandomSchedule,
    binomial_pmf,
    generate_batch,
    mixture_distribution,
    sample_block,
    spawn_rng,
)
from .montecarlo import (
    RunRecord,
    SweepResult,
    SweepRow,
    benchmark_step_time,
    estimate_wadd,
    estimate_warl,
    find_threshold_for_warl,
    simulate_runs,
    tradeoff_sweep,
)

__version__ = "0.1.0"
