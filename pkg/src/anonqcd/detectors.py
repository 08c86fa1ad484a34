"""Sequential stopping rules as explicit recursive state machines.

Three CuSum detectors differing only in their per-batch increment (exact
mixture ratio, Bayesian per-sample mixture, generalized max-likelihood
ratio), the windowed drift test for large networks, and the offline
randomized likelihood-ratio test.

Every state object is immutable; a step returns a fresh state, and stepping
a stopped state raises. Each detector instance is a single-owner sequential
machine: safe to hand between threads, never to share.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DetectorStoppedError, InvalidBatchError, NoConvergenceError
from .exponent import exponent
from .mixture import (
    EmpiricalType,
    LogLikelihoodRatio,
    bayesian_log_ratio,
    empirical_type,
    generalized_log_ratio,
    mixture_log_ratio,
)
from .model import NetworkModel


@dataclass(frozen=True)
class CusumState:
    """Running maximum of partial log-likelihood sums, reset at zero."""

    statistic: float
    time: int
    threshold_b: float
    stopped: bool
    stop_time: Optional[int] = None


def new_cusum_state(threshold_b: float) -> CusumState:
    return CusumState(statistic=0.0, time=0, threshold_b=threshold_b, stopped=False)


def cusum_step(state: CusumState, increment) -> CusumState:
    """One recursion step: positive part of the statistic plus the increment.

    Infinite increments are legal: +inf stops immediately, -inf parks the
    statistic at -inf until the next positive part restores zero.
    """
    if state.stopped:
        raise DetectorStoppedError("cusum state already stopped")
    inc = increment.value if isinstance(increment, LogLikelihoodRatio) else float(increment)
    w = max(state.statistic, 0.0) + inc
    t = state.time + 1
    stopped = w >= state.threshold_b
    return CusumState(
        statistic=w,
        time=t,
        threshold_b=state.threshold_b,
        stopped=stopped,
        stop_time=t if stopped else None,
    )


class SequentialCusum:
    """CuSum detector driven by a per-batch log-ratio function."""

    def __init__(self, model: NetworkModel, threshold_b: float, ratio_fn: Callable, name: str):
        if not threshold_b > 0:
            raise ValueError("threshold must be positive")
        self._model = model
        self._ratio_fn = ratio_fn
        self.name = name
        self.state = new_cusum_state(threshold_b)

    def step(self, batch) -> CusumState:
        self.state = cusum_step(self.state, self._ratio_fn(self._model, batch))
        return self.state


def make_mixture_cusum(model: NetworkModel, threshold_b: float) -> SequentialCusum:
    """Detector whose increment is the exact label-mixture log ratio."""
    return SequentialCusum(model, threshold_b, mixture_log_ratio, "mixture")


def make_bayesian_cusum(model: NetworkModel, threshold_b: float) -> SequentialCusum:
    """Detector whose increment treats group membership as i.i.d. random."""
    return SequentialCusum(model, threshold_b, bayesian_log_ratio, "bayesian")


def make_generalized_cusum(model: NetworkModel, threshold_b: float) -> SequentialCusum:
    """Detector whose increment maximizes the likelihood over labelings."""
    return SequentialCusum(model, threshold_b, generalized_log_ratio, "generalized")


@dataclass(frozen=True)
class EfficientState:
    """Windowed drift statistic with a recursive change-point estimate.

    The window pools all batches since the last nonpositive statistic;
    ``window_counts`` always totals t_hat * n.
    """

    nu_hat: int
    window_counts: Optional[EmpiricalType]
    statistic: float
    time: int
    threshold_b: float
    stopped: bool
    stop_time: Optional[int] = None
    dual_pre: Optional[np.ndarray] = None
    dual_post: Optional[np.ndarray] = None

    @property
    def t_hat(self) -> int:
        return self.time - self.nu_hat + 1 if self.window_counts is not None else 0


def new_efficient_state(threshold_b: float) -> EfficientState:
    if not threshold_b > 0:
        raise ValueError("threshold must be positive")
    return EfficientState(
        nu_hat=0, window_counts=None, statistic=0.0, time=0,
        threshold_b=threshold_b, stopped=False,
    )


def _finite_dual(solution) -> Optional[np.ndarray]:
    if solution.dual is None:
        return None
    lam = solution.dual.copy()
    lam[~np.isfinite(lam)] = 0.0
    return lam


def efficient_step(state: EfficientState, model: NetworkModel, batch) -> EfficientState:
    """One step of the windowed test: extend or restart the window by the
    sign of the previous statistic, then score the pooled empirical mixture
    by its pre/post exponent gap scaled by the pooled sample count.
    """
    if state.stopped:
        raise DetectorStoppedError("efficient state already stopped")
    model.require_discrete()
    t = state.time + 1
    fresh = empirical_type(model, batch)
    if state.statistic <= 0.0 or state.window_counts is None:
        counts = fresh.counts
        nu_hat = t
        warm0 = warm1 = None
    else:
        counts = state.window_counts.counts + fresh.counts
        nu_hat = state.nu_hat
        warm0, warm1 = state.dual_pre, state.dual_post
    t_hat = t - nu_hat + 1
    total = t_hat * model.n
    window = EmpiricalType(counts, total)
    q = window.normalized()
    alpha = model.alpha_array
    try:
        f0 = exponent(model.pre, alpha, q, lam_init=warm0)
        f1 = exponent(model.post, alpha, q, lam_init=warm1)
    except NoConvergenceError as e:
        raise NoConvergenceError(
            f"exponent solver failed at step {t}: {e}",
            residual=e.residual, iterations=e.iterations,
        ) from e
    if not f0.feasible and not f1.feasible:
        raise InvalidBatchError("window impossible under both regimes")
    if not f0.feasible:
        w = math.inf
    elif not f1.feasible:
        w = -math.inf
    else:
        w = total * (f0.value - f1.value)
    stopped = w >= state.threshold_b
    return EfficientState(
        nu_hat=nu_hat,
        window_counts=window,
        statistic=w,
        time=t,
        threshold_b=state.threshold_b,
        stopped=stopped,
        stop_time=t if stopped else None,
        dual_pre=_finite_dual(f0),
        dual_post=_finite_dual(f1),
    )


class EfficientTest:
    """Sequential wrapper around :func:`efficient_step`."""

    name = "efficient"

    def __init__(self, model: NetworkModel, threshold_b: float):
        model.require_discrete()
        self._model = model
        self.state = new_efficient_state(threshold_b)

    def step(self, batch) -> EfficientState:
        self.state = efficient_step(self.state, self._model, batch)
        return self.state


def make_efficient_test(model: NetworkModel, threshold_b: float) -> EfficientTest:
    return EfficientTest(model, threshold_b)


DETECTOR_FACTORIES = {
    "mixture": make_mixture_cusum,
    "bayesian": make_bayesian_cusum,
    "generalized": make_generalized_cusum,
    "efficient": make_efficient_test,
}


# ---------------------------------------------------------------------------
# Offline randomized test
# ---------------------------------------------------------------------------

_TIE_TOL = 1e-12


@dataclass(frozen=True)
class MlrtDecision:
    """Three-branch randomized decision: reject, reject with probability
    beta on a tie, or accept."""

    reject_probability: float
    log_ratio: float
    threshold_eta: float
    beta: float


def mlrt_decide(model: NetworkModel, batch, eta: float, beta: float) -> MlrtDecision:
    """Offline test of post vs pre from one anonymized batch.

    Compares the mixture log ratio against log(eta) with a 1e-12 tie
    tolerance; randomization is left to the caller via the returned
    probability, keeping the decision itself pure.
    """
    if not eta > 0:
        raise ValueError("threshold must be positive")
    if not 0.0 <= beta <= 1.0:
        raise ValueError("tie probability must lie in [0, 1]")
    llr = mixture_log_ratio(model, batch)
    log_eta = math.log(eta)
    if llr.value > log_eta + _TIE_TOL:
        reject = 1.0
    elif llr.value >= log_eta - _TIE_TOL:
        reject = beta
    else:
        reject = 0.0
    return MlrtDecision(
        reject_probability=reject, log_ratio=llr.value, threshold_eta=eta, beta=beta
    )
