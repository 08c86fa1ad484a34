"""Network model: per-group distributions, label schedules, synthetic data.

A network has n sensors split into K groups; group k holds ``group_sizes[k]``
sensors and draws from its own pre- and post-change distribution. The fusion
center sees the n samples of each time step as an unordered multiset: group
labels exist only inside the generator and are discarded before a batch is
returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

import numpy as np

from .errors import ModelError, UnsupportedKindError

PRE, POST = "pre", "post"

_MASS_TOL = 1e-12
_IDENT_TOL = 1e-9


@dataclass(frozen=True)
class DiscreteDistribution:
    """Probability mass function over symbol indices 0..|X|-1."""

    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ModelError("probability vector must be 1-D and nonempty")
        if np.any(p < 0):
            raise ModelError("negative probability mass")
        if abs(float(p.sum()) - 1.0) > _MASS_TOL:
            raise ModelError(f"masses sum to {p.sum()!r}, not 1")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "probabilities", p)

    @property
    def alphabet_size(self) -> int:
        return int(self.probabilities.size)

    def in_support(self, symbol: int) -> bool:
        return self.probabilities[symbol] > 0.0

    def log_probabilities(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.probabilities)

    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.probabilities)
        c[-1] = 1.0
        return c


@dataclass(frozen=True)
class GaussianDistribution:
    """Normal law with the given mean and (strictly positive) variance."""

    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ModelError("variance must be positive")

    def log_pdf(self, x):
        return -0.5 * math.log(2.0 * math.pi * self.variance) - (
            (np.asarray(x, dtype=np.float64) - self.mean) ** 2 / (2.0 * self.variance)
        )


Distribution = Union[DiscreteDistribution, GaussianDistribution]


def binomial_pmf(trials: int, success_prob: float) -> DiscreteDistribution:
    """Binomial(trials, success_prob) as a pmf on {0, ..., trials}."""
    if trials < 0:
        raise ModelError("trials must be nonnegative")
    if not 0.0 <= success_prob <= 1.0:
        raise ModelError("success probability must lie in [0, 1]")
    p = success_prob
    masses = [
        math.comb(trials, j) * p**j * (1.0 - p) ** (trials - j)
        for j in range(trials + 1)
    ]
    total = math.fsum(masses)
    return DiscreteDistribution(np.array(masses, dtype=np.float64) / total)


@dataclass(frozen=True)
class NetworkModel:
    """Group sizes plus pre/post-change distributions for each group.

    ``alpha`` holds the exact group fractions n_k/n as rationals; a float
    view is cached for numeric code. Both regimes must use one kind of
    distribution (all discrete on a common alphabet, or all Gaussian), and
    the two weighted mixtures must differ, else no test can tell the regimes
    apart from unordered samples.
    """

    group_sizes: tuple
    pre: tuple
    post: tuple
    alpha: tuple = field(init=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.group_sizes)
        if len(sizes) == 0 or any(s < 1 for s in sizes):
            raise ModelError("each group needs at least one sensor")
        pre = tuple(self.pre)
        post = tuple(self.post)
        if not (len(pre) == len(post) == len(sizes)):
            raise ModelError("need one pre and one post distribution per group")
        kinds = {type(d) for d in pre + post}
        if kinds == {DiscreteDistribution}:
            sizes_x = {d.alphabet_size for d in pre + post}
            if len(sizes_x) != 1:
                raise ModelError("all discrete distributions must share one alphabet")
        elif kinds == {GaussianDistribution}:
            pass
        else:
            raise ModelError("distributions must be all discrete or all Gaussian")
        object.__setattr__(self, "group_sizes", sizes)
        object.__setattr__(self, "pre", pre)
        object.__setattr__(self, "post", post)
        n = sum(sizes)
        object.__setattr__(self, "alpha", tuple(Fraction(s, n) for s in sizes))
        self._check_identifiable()

    def _check_identifiable(self):
        if self.kind == "discrete":
            mix0 = _mixture_masses(self, PRE)
            mix1 = _mixture_masses(self, POST)
            if float(np.max(np.abs(mix0 - mix1))) <= _IDENT_TOL:
                raise ModelError("pre and post mixtures coincide; change undetectable")
        else:
            if _gaussian_mixture_key(self, PRE) == _gaussian_mixture_key(self, POST):
                raise ModelError("pre and post Gaussian mixtures coincide")

    @property
    def K(self) -> int:
        return len(self.group_sizes)

    @property
    def n(self) -> int:
        return sum(self.group_sizes)

    @property
    def kind(self) -> str:
        return "discrete" if isinstance(self.pre[0], DiscreteDistribution) else "gaussian"

    @property
    def alphabet_size(self) -> int:
        self.require_discrete()
        return self.pre[0].alphabet_size

    @property
    def alpha_array(self) -> np.ndarray:
        return np.array([float(a) for a in self.alpha], dtype=np.float64)

    @property
    def sizes_array(self) -> np.ndarray:
        return np.array(self.group_sizes, dtype=np.int64)

    def require_discrete(self):
        if self.kind != "discrete":
            raise UnsupportedKindError("operation supports discrete models only")

    def distributions(self, regime: str) -> tuple:
        _check_regime(regime)
        return self.pre if regime == PRE else self.post

    def log_pmf_matrix(self, regime: str) -> np.ndarray:
        """(K, |X|) matrix of log pmfs, -inf where a symbol has zero mass."""
        self.require_discrete()
        return np.stack([d.log_probabilities() for d in self.distributions(regime)])

    def pmf_matrix(self, regime: str) -> np.ndarray:
        self.require_discrete()
        return np.stack([d.probabilities for d in self.distributions(regime)])

    def cdf_matrix(self, regime: str) -> np.ndarray:
        self.require_discrete()
        return np.stack([d.cdf() for d in self.distributions(regime)])

    def gaussian_params(self, regime: str) -> tuple:
        """(means, variances) arrays of the per-group normals."""
        if self.kind != "gaussian":
            raise UnsupportedKindError("model is not Gaussian")
        ds = self.distributions(regime)
        means = np.array([d.mean for d in ds], dtype=np.float64)
        variances = np.array([d.variance for d in ds], dtype=np.float64)
        return means, variances

    def base_labeling(self) -> "Labeling":
        labels = np.repeat(np.arange(self.K, dtype=np.int64), self.sizes_array)
        return Labeling(labels, self.group_sizes)


def _check_regime(regime: str):
    if regime not in (PRE, POST):
        raise ValueError(f"regime must be {PRE!r} or {POST!r}, got {regime!r}")


def _mixture_masses(model: NetworkModel, regime: str) -> np.ndarray:
    cols = zip(*(d.probabilities for d in model.distributions(regime)))
    out = [
        math.fsum(float(a) * m for a, m in zip(model.alpha, col)) for col in cols
    ]
    return np.array(out, dtype=np.float64)


def _gaussian_mixture_key(model: NetworkModel, regime: str):
    merged: dict = {}
    for a, d in zip(model.alpha, model.distributions(regime)):
        key = (d.mean, d.variance)
        merged[key] = merged.get(key, Fraction(0)) + a
    return tuple(sorted(merged.items()))


def mixture_distribution(model: NetworkModel, regime: str) -> DiscreteDistribution:
    """The population mixture: per-symbol average of group pmfs weighted by n_k/n."""
    model.require_discrete()
    masses = _mixture_masses(model, regime)
    return DiscreteDistribution(masses / math.fsum(masses.tolist()))


@dataclass(frozen=True)
class Labeling:
    """Assignment of the n sample slots to groups 0..K-1, respecting group sizes."""

    assignment: np.ndarray
    group_sizes: tuple

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64).copy()
        sizes = tuple(int(s) for s in self.group_sizes)
        counts = np.bincount(a, minlength=len(sizes)) if a.size else np.zeros(len(sizes))
        if a.size != sum(sizes) or not np.array_equal(counts, np.array(sizes)):
            raise ModelError("labeling does not match the group sizes")
        a.flags.writeable = False
        object.__setattr__(self, "assignment", a)
        object.__setattr__(self, "group_sizes", sizes)


@dataclass(frozen=True)
class ObservationBatch:
    """The n unordered samples of one time step.

    Discrete samples are kept in sorted order: the generator forgets which
    sensor produced which value, and sorting is the canonical unordered
    representation.
    """

    time: int
    samples: np.ndarray

    def __post_init__(self):
        if self.time < 1:
            raise ModelError("time starts at 1")
        s = np.asarray(self.samples).copy()
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)


@dataclass(frozen=True)
class ChangeScenario:
    """Change point (a step index, or math.inf for a pure pre-change run) and horizon."""

    change_point: float
    horizon: int

    def __post_init__(self):
        if self.horizon < 1:
            raise ModelError("horizon must be at least 1")
        cp = self.change_point
        if not (cp == math.inf or (float(cp).is_integer() and cp >= 1)):
            raise ModelError("change point must be a positive integer or inf")

    def regime_at(self, t: int) -> str:
        return POST if t >= self.change_point else PRE


# ---------------------------------------------------------------------------
# Label schedules
# ---------------------------------------------------------------------------


class LabelStream:
    """Single-owner source of one labeling per time step.

    Not safe for concurrent mutation; hand each stream to exactly one
    consumer. ``labels_block`` advances the stream by ``count`` steps.
    """

    def __init__(self, model: NetworkModel):
        self._base = model.base_labeling().assignment
        self._n = model.n
        self._t = 0

    @property
    def t(self) -> int:
        return self._t

    def next_labels(self) -> np.ndarray:
        return self.labels_block(1)[0]

    def labels_block(self, count: int) -> np.ndarray:
        raise NotImplementedError


class _FixedStream(LabelStream):
    def __init__(self, model, labeling):
        super().__init__(model)
        self._labels = labeling.assignment

    def labels_block(self, count):
        self._t += count
        return np.broadcast_to(self._labels, (count, self._n)).copy()


class _UniformRandomStream(LabelStream):
    def __init__(self, model, seed):
        super().__init__(model)
        if not isinstance(seed, np.random.SeedSequence):
            seed = np.random.SeedSequence(seed)
        self._rng = np.random.default_rng(seed)

    def labels_block(self, count):
        self._t += count
        # independent uniform draws from the labeling set: permute the base
        # multiset via random sort keys, one permutation per row
        keys = self._rng.random((count, self._n))
        order = np.argsort(keys, axis=1, kind="stable")
        return self._base[order]


class _CyclicRotationStream(LabelStream):
    def __init__(self, model, step):
        super().__init__(model)
        self._step = int(step) % self._n

    def labels_block(self, count):
        ts = np.arange(self._t, self._t + count, dtype=np.int64)
        self._t += count
        shifts = (ts * self._step) % self._n
        idx = (np.arange(self._n)[None, :] + shifts[:, None]) % self._n
        return self._base[idx]


@dataclass(frozen=True)
class FixedSchedule:
    """Every step uses the same labeling (defaults to groups in block order)."""

    labeling: Labeling | None = None

    def bind(self, model: NetworkModel, seed: int = 0) -> LabelStream:
        labeling = self.labeling if self.labeling is not None else model.base_labeling()
        if tuple(labeling.group_sizes) != tuple(model.group_sizes):
            raise ModelError("labeling sizes do not match the model")
        return _FixedStream(model, labeling)


@dataclass(frozen=True)
class UniformRandomSchedule:
    """Each step draws a labeling uniformly from the feasible set."""

    def bind(self, model: NetworkModel, seed: int = 0) -> LabelStream:
        return _UniformRandomStream(model, seed)


@dataclass(frozen=True)
class CyclicRotationSchedule:
    """Deterministic stressor: the base labeling rotated by step*t positions at time t."""

    step: int = 1

    def bind(self, model: NetworkModel, seed: int = 0) -> LabelStream:
        return _CyclicRotationStream(model, self.step)


Schedule = Union[FixedSchedule, UniformRandomSchedule, CyclicRotationSchedule]


# ---------------------------------------------------------------------------
# Sample generation
# ---------------------------------------------------------------------------


def sample_block(
    model: NetworkModel,
    stream: LabelStream,
    regime: str,
    rng: np.random.Generator,
    count: int,
) -> np.ndarray:
    """Generate ``count`` consecutive batches as a (count, n) array of sorted rows."""
    _check_regime(regime)
    labels = stream.labels_block(count)
    if model.kind == "discrete":
        cdfs = model.cdf_matrix(regime)
        u = rng.random((count, model.n))
        samples = np.empty((count, model.n), dtype=np.int64)
        for k in range(model.K):
            mask = labels == k
            samples[mask] = np.searchsorted(cdfs[k], u[mask], side="right")
        np.clip(samples, 0, model.alphabet_size - 1, out=samples)
    else:
        means, variances = model.gaussian_params(regime)
        z = rng.standard_normal((count, model.n))
        samples = means[labels] + np.sqrt(variances)[labels] * z
    samples.sort(axis=1)
    return samples


def _generate_labeled(model, stream, regime, rng):
    """One batch with its labels kept (test instrumentation; labels stay internal)."""
    labels = stream.labels_block(1)[0]
    if model.kind == "discrete":
        cdfs = model.cdf_matrix(regime)
        u = rng.random(model.n)
        samples = np.empty(model.n, dtype=np.int64)
        for i, k in enumerate(labels):
            samples[i] = np.searchsorted(cdfs[k], u[i], side="right")
        np.clip(samples, 0, model.alphabet_size - 1, out=samples)
    else:
        means, variances = model.gaussian_params(regime)
        samples = means[labels] + np.sqrt(variances)[labels] * rng.standard_normal(model.n)
    return samples, labels


def generate_batch(
    model: NetworkModel,
    stream: LabelStream,
    regime: str,
    rng: np.random.Generator,
) -> ObservationBatch:
    """Draw the next batch: one sample per sensor, labels discarded."""
    _check_regime(regime)
    samples, _ = _generate_labeled(model, stream, regime, rng)
    samples = np.sort(samples) if model.kind == "discrete" else samples
    return ObservationBatch(time=stream.t, samples=samples)


def spawn_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Reproducible child generator for a (replication, role, ...) key."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)
