"""Per-batch log likelihood ratios under unknown group labels.

Four views of the same batch: the exact label-mixture ratio (a sum over all
feasible assignments, computed by dynamic programming over remaining group
capacities), its type-class form for discrete data (an independent tuple-sum
used as a cross-check oracle), the per-sample Bayesian mixture heuristic, and
the label-maximizing generalized ratio (a small transportation problem).

All values live in the natural-log domain. A zero-probability batch under
exactly one hypothesis yields an infinite value with ``finite_flag`` cleared;
zero under both raises :class:`InvalidBatchError`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidBatchError, ModelError
from .model import NetworkModel, ObservationBatch, PRE, POST

NEG_INF = -math.inf


@dataclass(frozen=True)
class LogLikelihoodRatio:
    value: float
    finite_flag: bool = True


@dataclass(frozen=True)
class EmpiricalType:
    """Integer symbol counts of a sample multiset."""

    counts: np.ndarray
    total: int

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64).copy()
        if np.any(c < 0) or int(c.sum()) != self.total or self.total < 1:
            raise ModelError("counts must be nonnegative and sum to total")
        c.flags.writeable = False
        object.__setattr__(self, "counts", c)

    def normalized(self) -> np.ndarray:
        return self.counts / self.total


def empirical_type(model: NetworkModel, batch) -> EmpiricalType:
    samples = _sorted_samples(model, batch)
    counts = np.bincount(samples, minlength=model.alphabet_size)
    return EmpiricalType(counts, int(samples.size))


def _sorted_samples(model: NetworkModel, batch) -> np.ndarray:
    """Validate a batch and return its samples in canonical sorted order."""
    samples = batch.samples if isinstance(batch, ObservationBatch) else np.asarray(batch)
    if samples.ndim != 1 or samples.size != model.n:
        raise InvalidBatchError(f"batch must hold exactly {model.n} samples")
    if model.kind == "discrete":
        samples = np.asarray(samples, dtype=np.int64)
        if samples.size and (samples.min() < 0 or samples.max() >= model.alphabet_size):
            raise InvalidBatchError("discrete sample outside the alphabet")
    else:
        samples = np.asarray(samples, dtype=np.float64)
    return np.sort(samples)


def _ratio_from_pair(log_num: float, log_den: float) -> LogLikelihoodRatio:
    if log_num == NEG_INF and log_den == NEG_INF:
        raise InvalidBatchError("batch impossible under both hypotheses")
    if log_den == NEG_INF:
        return LogLikelihoodRatio(math.inf, False)
    if log_num == NEG_INF:
        return LogLikelihoodRatio(NEG_INF, False)
    return LogLikelihoodRatio(float(log_num - log_den), True)


def _assignment_sum(model: NetworkModel, samples: np.ndarray, regime: str) -> float:
    caps = model.sizes_array
    if model.kind == "discrete":
        logp = model.log_pmf_matrix(regime)
        K, S = logp.shape
        scaled = np.empty((K, S), dtype=np.float64)
        logmax = np.empty(S, dtype=np.float64)
        _kernels._scaled_tables(logp, scaled, logmax)
        block = samples.reshape(1, -1)
        radix = np.empty(K, dtype=np.int64)
        size = int(np.prod(caps + 1))
        _kernels._dp_radix(caps, radix)
        can = np.empty((size, K), dtype=np.uint8)
        _kernels._dp_can(caps, radix, size, can)
        buf = np.empty((2, size), dtype=np.float64)
        return float(
            _kernels.dp_discrete(
                block, 0, scaled, logmax, caps, radix, size, can, buf
            )
        )
    scratch = np.empty((model.n, model.K), dtype=np.float64)
    means, variances = model.gaussian_params(regime)
    _kernels._fill_loglik_gaussian(samples, means, variances, scratch)
    return float(_kernels.dp_log_assignment_sum(scratch, caps))


def mixture_log_ratio(model: NetworkModel, batch) -> LogLikelihoodRatio:
    """Exact mixture ratio: joint likelihood summed over every feasible labeling,
    post over pre. Polynomial in n for fixed K via the capacity DP."""
    samples = _sorted_samples(model, batch)
    return _ratio_from_pair(
        _assignment_sum(model, samples, POST), _assignment_sum(model, samples, PRE)
    )


def bayes_log_table(model: NetworkModel, regime: str) -> np.ndarray:
    """Per-symbol log of the weighted mixture pmf (discrete models)."""
    model.require_discrete()
    mix = model.alpha_array @ model.pmf_matrix(regime)
    with np.errstate(divide="ignore"):
        return np.log(mix)


def bayesian_log_ratio(model: NetworkModel, batch) -> LogLikelihoodRatio:
    """Heuristic ratio pretending each sample draws its group independently
    with probability n_k/n: a per-sample mixture-density ratio."""
    samples = _sorted_samples(model, batch)
    if model.kind == "discrete":
        t1 = bayes_log_table(model, POST)[samples]
        t0 = bayes_log_table(model, PRE)[samples]
        num = float(t1.sum()) if not np.any(np.isneginf(t1)) else NEG_INF
        den = float(t0.sum()) if not np.any(np.isneginf(t0)) else NEG_INF
        return _ratio_from_pair(num, den)
    logalpha = np.log(model.alpha_array)
    means0, vars0 = model.gaussian_params(PRE)
    means1, vars1 = model.gaussian_params(POST)
    inc = _kernels.bayes_increment_gaussian(samples, means0, vars0, means1, vars1, logalpha)
    return LogLikelihoodRatio(float(inc), True)


def generalized_log_ratio(model: NetworkModel, batch) -> LogLikelihoodRatio:
    """Best-case labeling ratio: each hypothesis takes the assignment of
    samples to groups (respecting sizes) that maximizes its own likelihood."""
    samples = _sorted_samples(model, batch)
    caps = model.sizes_array
    if model.kind == "discrete":
        counts = np.bincount(samples, minlength=model.alphabet_size)
        present = np.flatnonzero(counts)
        supply = counts[present].astype(np.int64)
        c1 = model.log_pmf_matrix(POST)[:, present].T.copy()
        c0 = model.log_pmf_matrix(PRE)[:, present].T.copy()
    else:
        supply = np.ones(model.n, dtype=np.int64)
        c1 = np.empty((model.n, model.K), dtype=np.float64)
        c0 = np.empty((model.n, model.K), dtype=np.float64)
        means0, vars0 = model.gaussian_params(PRE)
        means1, vars1 = model.gaussian_params(POST)
        _kernels._fill_loglik_gaussian(samples, means1, vars1, c1)
        _kernels._fill_loglik_gaussian(samples, means0, vars0, c0)
    num = float(_kernels.transport_max_loglik(c1, supply, caps))
    den = float(_kernels.transport_max_loglik(c0, supply, caps))
    return _ratio_from_pair(num, den)


# ---------------------------------------------------------------------------
# Type-class tuple sums (discrete): independent of the DP path above
# ---------------------------------------------------------------------------


def _iter_subcounts(counts, budget):
    """All integer vectors v <= counts with sum(v) == budget."""
    out = [0] * len(counts)
    suffix = [0] * (len(counts) + 1)
    for i in range(len(counts) - 1, -1, -1):
        suffix[i] = suffix[i + 1] + counts[i]

    def rec(i, remaining):
        if i == len(counts) - 1:
            if remaining <= counts[i]:
                out[i] = remaining
                yield out
            return
        lo = max(0, remaining - suffix[i + 1])
        hi = min(counts[i], remaining)
        for v in range(lo, hi + 1):
            out[i] = v
            yield from rec(i + 1, remaining - v)

    if 0 <= budget <= suffix[0]:
        yield from rec(0, budget)


def type_class_log_prob(model: NetworkModel, counts, regime: str) -> float:
    """log probability that one time step lands in the type class with the
    given symbol counts, for any fixed labeling.

    Sums, over every split of the counts into per-group subtypes matching the
    group sizes, the product of multinomial type probabilities. Exponential in
    the support size; meant as an oracle and for small-n exact computations.
    """
    model.require_discrete()
    counts = np.asarray(counts, dtype=np.int64)
    if counts.sum() != model.n:
        raise InvalidBatchError("type counts must sum to the network size")
    sizes = model.group_sizes
    logp = model.log_pmf_matrix(regime)
    lgam = [math.lgamma(i + 1) for i in range(model.n + 1)]
    terms: list[float] = []

    def split_value(k, v):
        acc = lgam[sizes[k]]
        for x, vx in enumerate(v):
            if vx:
                lp = logp[k, x]
                if lp == NEG_INF:
                    return NEG_INF
                acc += vx * lp - lgam[vx]
        return acc

    def rec(k, remaining, acc):
        if k == len(sizes) - 1:
            t = split_value(k, remaining)
            if t != NEG_INF:
                terms.append(acc + t)
            return
        for v in _iter_subcounts(remaining, sizes[k]):
            t = split_value(k, v)
            if t == NEG_INF:
                continue
            rec(k + 1, [r - w for r, w in zip(remaining, v)], acc + t)

    rec(0, list(counts), 0.0)
    if not terms:
        return NEG_INF
    m = max(terms)
    return m + math.log(math.fsum(math.exp(t - m) for t in terms))


def type_class_log_ratio(model: NetworkModel, etype: EmpiricalType) -> LogLikelihoodRatio:
    """Post/pre log ratio of the type-class probabilities of one batch type.

    Equals the mixture ratio of any batch carrying these counts; computed by
    tuple enumeration, so it cross-checks the DP independently.
    """
    model.require_discrete()
    if etype.total != model.n:
        raise InvalidBatchError("type total must equal the network size")
    return _ratio_from_pair(
        type_class_log_prob(model, etype.counts, POST),
        type_class_log_prob(model, etype.counts, PRE),
    )
