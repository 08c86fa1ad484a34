import math

import numpy as np
import pytest

from anonqcd import _kernels
from anonqcd.errors import InvalidBatchError, UnsupportedKindError
from anonqcd.mixture import (
    EmpiricalType,
    bayesian_log_ratio,
    empirical_type,
    generalized_log_ratio,
    mixture_log_ratio,
    type_class_log_prob,
    type_class_log_ratio,
)
from anonqcd.model import (
    DiscreteDistribution,
    NetworkModel,
    binomial_pmf,
)

from conftest import (
    label_arrangements,
    lse,
    naive_max_assignment,
    naive_mixture_log_ratio,
    random_discrete_model,
)


def _phi(x, mu):
    return math.exp(-0.5 * (x - mu) ** 2) / math.sqrt(2 * math.pi)


class TestMixtureLogRatio:
    def test_single_group_reduces_to_iid_sum(self):
        model = NetworkModel(
            group_sizes=(3,), pre=(binomial_pmf(4, 0.3),), post=(binomial_pmf(4, 0.6),)
        )
        batch = np.array([0, 2, 4])
        lp0 = model.pre[0].log_probabilities()
        lp1 = model.post[0].log_probabilities()
        want = float((lp1[batch] - lp0[batch]).sum())
        got = mixture_log_ratio(model, batch)
        assert got.finite_flag and abs(got.value - want) < 1e-12

    def test_gaussian_two_term_enumeration(self, gaussian_model):
        batch = np.array([0.0, 2.0])
        num = _phi(0.0, 0.5) * _phi(2.0, 1.5) + _phi(2.0, 0.5) * _phi(0.0, 1.5)
        den = _phi(0.0, 0.0) * _phi(2.0, 2.0) + _phi(2.0, 0.0) * _phi(0.0, 2.0)
        want = math.log(num / den)
        got = mixture_log_ratio(gaussian_model, batch).value
        assert abs(got - want) < 1e-12

    def test_permutation_invariance_is_exact(self, binomial_model):
        rng = np.random.default_rng(0)
        model = NetworkModel(
            group_sizes=(2, 3),
            pre=(binomial_pmf(6, 0.4), binomial_pmf(6, 0.5)),
            post=(binomial_pmf(6, 0.2), binomial_pmf(6, 0.7)),
        )
        batch = rng.integers(0, 7, size=5)
        base = mixture_log_ratio(model, batch).value
        for _ in range(10):
            assert mixture_log_ratio(model, rng.permutation(batch)).value == base

    def test_matches_enumeration_and_type_class(self):
        rng = np.random.default_rng(42)
        for _ in range(25):
            model = random_discrete_model(rng)
            batch = rng.integers(0, model.alphabet_size, size=model.n)
            got = mixture_log_ratio(model, batch).value
            want = naive_mixture_log_ratio(model, batch)
            assert abs(got - want) <= 1e-10 * max(1.0, abs(want))
            tc = type_class_log_ratio(model, empirical_type(model, batch)).value
            assert abs(got - tc) <= 1e-10 * max(1.0, abs(tc))

    def test_impossible_under_both_raises(self):
        model = NetworkModel(
            group_sizes=(1,),
            pre=(DiscreteDistribution(np.array([1.0, 0.0, 0.0])),),
            post=(DiscreteDistribution(np.array([0.0, 1.0, 0.0])),),
        )
        with pytest.raises(InvalidBatchError):
            mixture_log_ratio(model, np.array([2]))

    def test_one_sided_zero_gives_signed_infinity(self):
        model = NetworkModel(
            group_sizes=(1,),
            pre=(DiscreteDistribution(np.array([1.0, 0.0])),),
            post=(DiscreteDistribution(np.array([0.5, 0.5])),),
        )
        out = mixture_log_ratio(model, np.array([1]))
        assert out.value == math.inf and not out.finite_flag

    def test_wrong_length_rejected(self, binomial_model):
        with pytest.raises(InvalidBatchError):
            mixture_log_ratio(binomial_model, np.array([1, 2, 3]))


class TestTypeClass:
    def test_single_group_multinomial_coefficients_cancel(self):
        model = NetworkModel(
            group_sizes=(4,), pre=(binomial_pmf(3, 0.4),), post=(binomial_pmf(3, 0.7),)
        )
        counts = np.array([1, 0, 2, 1])
        lp0 = model.pre[0].log_probabilities()
        lp1 = model.post[0].log_probabilities()
        want = float((counts * (lp1 - lp0)).sum())
        got = type_class_log_ratio(model, EmpiricalType(counts, 4)).value
        assert abs(got - want) < 1e-12

    def test_two_assignment_case(self):
        rng = np.random.default_rng(5)
        pm = rng.random((4, 2)) + 0.1
        pm /= pm.sum(axis=1, keepdims=True)
        model = NetworkModel(
            group_sizes=(1, 1),
            pre=(DiscreteDistribution(pm[0]), DiscreteDistribution(pm[1])),
            post=(DiscreteDistribution(pm[2]), DiscreteDistribution(pm[3])),
        )
        got = type_class_log_ratio(model, EmpiricalType(np.array([1, 1]), 2)).value
        want = mixture_log_ratio(model, np.array([0, 1])).value
        assert abs(got - want) < 1e-12

    def test_probability_normalizes_over_types(self, binomial_model):
        # type-class probabilities of all two-sample types sum to one
        total = []
        X = binomial_model.alphabet_size
        for a in range(X):
            for b in range(a, X):
                counts = np.zeros(X, dtype=int)
                counts[a] += 1
                counts[b] += 1
                total.append(math.exp(type_class_log_prob(binomial_model, counts, "pre")))
        assert abs(math.fsum(total) - 1.0) < 1e-12

    def test_rejects_gaussian(self, gaussian_model):
        with pytest.raises(UnsupportedKindError):
            type_class_log_ratio(gaussian_model, EmpiricalType(np.array([2]), 2))


class TestBayesianLogRatio:
    def test_single_group_equals_mixture(self):
        model = NetworkModel(
            group_sizes=(2,), pre=(binomial_pmf(5, 0.5),), post=(binomial_pmf(5, 0.2),)
        )
        batch = np.array([1, 4])
        assert (
            abs(
                bayesian_log_ratio(model, batch).value
                - mixture_log_ratio(model, batch).value
            )
            < 1e-12
        )

    def test_repeated_sample_doubles_value(self):
        model = NetworkModel(
            group_sizes=(1, 1),
            pre=(binomial_pmf(4, 0.5), binomial_pmf(4, 0.3)),
            post=(binomial_pmf(4, 0.7), binomial_pmf(4, 0.2)),
        )
        x = 2
        one = math.log(
            (0.5 * model.post[0].probabilities[x] + 0.5 * model.post[1].probabilities[x])
            / (0.5 * model.pre[0].probabilities[x] + 0.5 * model.pre[1].probabilities[x])
        )
        got = bayesian_log_ratio(model, np.array([x, x])).value
        assert abs(got - 2 * one) < 1e-12

    def test_gaussian_closed_form(self, gaussian_model):
        batch = np.array([1.0, 1.0])
        one = math.log(
            (0.5 * _phi(1.0, 0.5) + 0.5 * _phi(1.0, 1.5))
            / (0.5 * _phi(1.0, 0.0) + 0.5 * _phi(1.0, 2.0))
        )
        got = bayesian_log_ratio(gaussian_model, batch).value
        assert abs(got - 2 * one) < 1e-12


class TestGeneralizedLogRatio:
    def test_single_group_equals_mixture(self):
        model = NetworkModel(
            group_sizes=(3,), pre=(binomial_pmf(4, 0.4),), post=(binomial_pmf(4, 0.8),)
        )
        batch = np.array([1, 2, 3])
        assert (
            abs(
                generalized_log_ratio(model, batch).value
                - mixture_log_ratio(model, batch).value
            )
            < 1e-12
        )

    def test_two_case_maximum(self, gaussian_model):
        batch = np.array([0.3, 1.8])

        def best(mus):
            a = _phi(0.3, mus[0]) * _phi(1.8, mus[1])
            b = _phi(1.8, mus[0]) * _phi(0.3, mus[1])
            return math.log(max(a, b))

        want = best([0.5, 1.5]) - best([0.0, 2.0])
        got = generalized_log_ratio(gaussian_model, batch).value
        assert abs(got - want) < 1e-12

    def test_matches_enumeration_on_random_models(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            model = random_discrete_model(rng, zeros=True)
            batch = rng.integers(0, model.alphabet_size, size=model.n)
            rows = {
                reg: [
                    (lambda d: lambda x: float(d.log_probabilities()[int(x)]))(d)
                    for d in model.distributions(reg)
                ]
                for reg in ("pre", "post")
            }
            num = naive_max_assignment(rows["post"], batch, model.group_sizes)
            den = naive_max_assignment(rows["pre"], batch, model.group_sizes)
            if num == -math.inf and den == -math.inf:
                with pytest.raises(InvalidBatchError):
                    generalized_log_ratio(model, batch)
                continue
            got = generalized_log_ratio(model, batch)
            want = num - den
            if math.isinf(want):
                assert got.value == want and not got.finite_flag
            else:
                assert abs(got.value - want) < 1e-10

    def test_constant_shift_moves_value_by_n_times_c(self):
        # transport objective is additive: shifting every post log density
        # by c shifts the maximum by n*c
        rng = np.random.default_rng(3)
        loglik = np.log(rng.random((4, 3)))
        supply = np.ones(4, dtype=np.int64)
        caps = np.array([2, 1, 1], dtype=np.int64)
        base = _kernels.transport_max_loglik(loglik, supply, caps)
        c = 0.37
        shifted = _kernels.transport_max_loglik(loglik + c, supply, caps)
        assert abs(shifted - (base + 4 * c)) < 1e-12


class TestOrdering:
    def test_max_vs_log_mean_exp_vs_min(self):
        rng = np.random.default_rng(12)
        for _ in range(15):
            model = random_discrete_model(rng)
            batch = rng.integers(0, model.alphabet_size, size=model.n)
            sigmas = label_arrangements(model.group_sizes)
            for regime in ("pre", "post"):
                logp = model.log_pmf_matrix(regime)
                terms = [
                    float(sum(logp[s[i], batch[i]] for i in range(model.n))) for s in sigmas
                ]
                log_mean = lse(terms) - math.log(len(terms))
                assert max(terms) + 1e-12 >= log_mean >= min(terms) - 1e-12


class TestEmpiricalType:
    def test_validation(self):
        with pytest.raises(Exception):
            EmpiricalType(np.array([1, 1]), 3)

    def test_from_batch(self, binomial_model):
        et = empirical_type(binomial_model, np.array([4, 4]))
        assert et.total == 2 and et.counts[4] == 2
