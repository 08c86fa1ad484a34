"""Shared fixtures and brute-force oracles.

The oracles enumerate label assignments directly and never touch the DP or
transportation code they are used to check.
"""

import itertools
import math

import numpy as np
import pytest

from anonqcd.model import (
    DiscreteDistribution,
    GaussianDistribution,
    NetworkModel,
    binomial_pmf,
)


def lse(values):
    finite = [v for v in values if v != -math.inf]
    if not finite:
        return -math.inf
    m = max(finite)
    return m + math.log(math.fsum(math.exp(v - m) for v in finite))


def label_arrangements(group_sizes):
    base = []
    for k, c in enumerate(group_sizes):
        base += [k] * c
    return sorted(set(itertools.permutations(base)))


def naive_log_assignment_sum(logp_rows, batch, group_sizes):
    """log sum over assignments of products, by explicit enumeration.

    logp_rows[k][x] or a callable giving log density of sample x under
    group k.
    """
    terms = []
    for sigma in label_arrangements(group_sizes):
        terms.append(math.fsum(logp_rows[sigma[i]](batch[i]) for i in range(len(batch))))
    return lse(terms)


def naive_mixture_log_ratio(model, batch):
    rows = {}
    for regime in ("pre", "post"):
        dists = model.distributions(regime)
        if model.kind == "discrete":
            rows[regime] = [
                (lambda d: lambda x: float(d.log_probabilities()[int(x)]))(d) for d in dists
            ]
        else:
            rows[regime] = [(lambda d: lambda x: float(d.log_pdf(x)))(d) for d in dists]
    num = naive_log_assignment_sum(rows["post"], batch, model.group_sizes)
    den = naive_log_assignment_sum(rows["pre"], batch, model.group_sizes)
    return num - den


def naive_max_assignment(logp_rows, batch, group_sizes):
    best = -math.inf
    for sigma in label_arrangements(group_sizes):
        best = max(
            best, math.fsum(logp_rows[sigma[i]](batch[i]) for i in range(len(batch)))
        )
    return best


def random_discrete_model(rng, max_k=3, max_size=3, max_alpha=4, zeros=False, min_sep=0.0):
    """Identifiable random model; resamples until the mixtures differ by at
    least min_sep in max norm."""
    while True:
        K = int(rng.integers(1, max_k + 1))
        sizes = tuple(int(s) for s in rng.integers(1, max_size + 1, size=K))
        X = int(rng.integers(2, max_alpha + 1))
        pm = rng.random((2 * K, X)) + 0.02
        if zeros and rng.random() < 0.5:
            for _ in range(int(rng.integers(1, X))):
                pm[rng.integers(2 * K), rng.integers(X)] = 0.0
        if np.any(pm.sum(axis=1) == 0):
            continue
        pm /= pm.sum(axis=1, keepdims=True)
        alpha = np.array(sizes) / sum(sizes)
        if np.max(np.abs(alpha @ pm[:K] - alpha @ pm[K:])) < min_sep:
            continue
        try:
            return NetworkModel(
                group_sizes=sizes,
                pre=tuple(DiscreteDistribution(pm[i]) for i in range(K)),
                post=tuple(DiscreteDistribution(pm[K + i]) for i in range(K)),
            )
        except Exception:
            continue


@pytest.fixture
def binomial_model():
    """Two one-sensor binomial groups; the efficient-test reference setup."""
    return NetworkModel(
        group_sizes=(1, 1),
        pre=(binomial_pmf(10, 0.5), binomial_pmf(10, 0.5)),
        post=(binomial_pmf(10, 0.3), binomial_pmf(10, 0.7)),
    )


def binomial_model_sized(per_group: int) -> NetworkModel:
    return NetworkModel(
        group_sizes=(per_group, per_group),
        pre=(binomial_pmf(10, 0.5), binomial_pmf(10, 0.5)),
        post=(binomial_pmf(10, 0.3), binomial_pmf(10, 0.7)),
    )


@pytest.fixture
def gaussian_model():
    """Two one-sensor Gaussian groups with half-unit mean shifts."""
    return NetworkModel(
        group_sizes=(1, 1),
        pre=(GaussianDistribution(0.0, 1.0), GaussianDistribution(2.0, 1.0)),
        post=(GaussianDistribution(0.5, 1.0), GaussianDistribution(1.5, 1.0)),
    )
