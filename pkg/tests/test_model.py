import math

import numpy as np
import pytest

from anonqcd.errors import ModelError, UnsupportedKindError
from anonqcd.model import (
    ChangeScenario,
    CyclicRotationSchedule,
    DiscreteDistribution,
    FixedSchedule,
    GaussianDistribution,
    Labeling,
    NetworkModel,
    UniformRandomSchedule,
    _generate_labeled,
    binomial_pmf,
    generate_batch,
    mixture_distribution,
    sample_block,
    spawn_rng,
)

# chi-square 99.9% critical values by degrees of freedom
_CHI2_999 = {1: 10.83, 2: 13.82, 3: 16.27, 4: 18.47, 5: 20.52, 10: 29.59}


class TestDiscreteDistribution:
    def test_rejects_negative_mass(self):
        with pytest.raises(ModelError):
            DiscreteDistribution(np.array([1.1, -0.1]))

    def test_rejects_bad_sum(self):
        with pytest.raises(ModelError):
            DiscreteDistribution(np.array([0.5, 0.4]))

    def test_support_is_exact(self):
        d = DiscreteDistribution(np.array([0.5, 0.0, 0.5]))
        assert d.in_support(0) and not d.in_support(1) and d.in_support(2)

    def test_immutable(self):
        d = DiscreteDistribution(np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            d.probabilities[0] = 1.0


class TestBinomialPmf:
    def test_two_trials(self):
        d = binomial_pmf(2, 0.5)
        assert np.array_equal(d.probabilities, np.array([0.25, 0.5, 0.25]))

    def test_mass_at_center(self):
        assert binomial_pmf(10, 0.5).probabilities[5] == 0.24609375

    def test_degenerate(self):
        d = binomial_pmf(10, 0.0)
        assert d.probabilities[0] == 1.0 and d.probabilities[1:].sum() == 0.0

    def test_negative_trials(self):
        with pytest.raises(ModelError):
            binomial_pmf(-1, 0.5)

    def test_sum_tolerance(self):
        for p in (0.01, 0.37, 0.92):
            assert abs(binomial_pmf(25, p).probabilities.sum() - 1.0) <= 1e-12


class TestNetworkModel:
    def test_alpha_exact_rationals(self, binomial_model):
        assert sum(binomial_model.alpha) == 1
        assert [float(a) for a in binomial_model.alpha] == [0.5, 0.5]

    def test_rejects_mixed_kinds(self):
        with pytest.raises(ModelError):
            NetworkModel(
                group_sizes=(1, 1),
                pre=(binomial_pmf(2, 0.5), GaussianDistribution(0, 1)),
                post=(binomial_pmf(2, 0.4), GaussianDistribution(1, 1)),
            )

    def test_rejects_unidentifiable_discrete(self):
        # post components swap but the half/half mixture is unchanged
        with pytest.raises(ModelError):
            NetworkModel(
                group_sizes=(1, 1),
                pre=(
                    DiscreteDistribution(np.array([0.5, 0.5])),
                    DiscreteDistribution(np.array([0.5, 0.5])),
                ),
                post=(
                    DiscreteDistribution(np.array([0.3, 0.7])),
                    DiscreteDistribution(np.array([0.7, 0.3])),
                ),
            )

    def test_rejects_unidentifiable_gaussian(self):
        with pytest.raises(ModelError):
            NetworkModel(
                group_sizes=(1, 1),
                pre=(GaussianDistribution(0, 1), GaussianDistribution(2, 1)),
                post=(GaussianDistribution(2, 1), GaussianDistribution(0, 1)),
            )

    def test_zero_group_rejected(self):
        with pytest.raises(ModelError):
            NetworkModel(group_sizes=(0, 2), pre=(), post=())


class TestMixtureDistribution:
    def test_symmetric_point_masses(self):
        model = NetworkModel(
            group_sizes=(1, 1),
            pre=(
                DiscreteDistribution(np.array([1.0, 0.0])),
                DiscreteDistribution(np.array([0.0, 1.0])),
            ),
            post=(
                DiscreteDistribution(np.array([0.8, 0.2])),
                DiscreteDistribution(np.array([0.1, 0.9])),
            ),
        )
        mix = mixture_distribution(model, "pre")
        assert np.allclose(mix.probabilities, [0.5, 0.5], atol=1e-15)

    def test_binomial_post_mass_at_zero(self, binomial_model):
        mix = mixture_distribution(binomial_model, "post")
        assert abs(mix.probabilities[0] - (0.7**10 + 0.3**10) / 2) < 1e-15

    def test_single_group_identity(self):
        model = NetworkModel(
            group_sizes=(2,), pre=(binomial_pmf(4, 0.3),), post=(binomial_pmf(4, 0.6),)
        )
        assert np.array_equal(
            mixture_distribution(model, "pre").probabilities,
            binomial_pmf(4, 0.3).probabilities,
        )

    def test_gaussian_unsupported(self, gaussian_model):
        with pytest.raises(UnsupportedKindError):
            mixture_distribution(gaussian_model, "pre")


class TestLabeling:
    def test_wrong_counts_rejected(self):
        with pytest.raises(ModelError):
            Labeling(np.array([0, 0, 1]), (1, 2))
        Labeling(np.array([0, 1, 1]), (1, 2))


class TestSchedules:
    @pytest.mark.parametrize(
        "schedule",
        [FixedSchedule(), UniformRandomSchedule(), CyclicRotationSchedule(step=3)],
    )
    def test_every_step_preserves_group_multiset(self, schedule):
        model = NetworkModel(
            group_sizes=(2, 3, 1),
            pre=tuple(binomial_pmf(3, p) for p in (0.2, 0.5, 0.8)),
            post=tuple(binomial_pmf(3, p) for p in (0.3, 0.6, 0.9)),
        )
        rng = spawn_rng(7, 0)
        stream = schedule.bind(model, 7)
        for _ in range(50):
            _, labels = _generate_labeled(model, stream, "pre", rng)
            assert np.array_equal(np.bincount(labels, minlength=3), [2, 3, 1])

    def test_cyclic_rotation_is_deterministic(self, binomial_model):
        s1 = CyclicRotationSchedule(step=1).bind(binomial_model, 0)
        labels = [tuple(s1.next_labels()) for _ in range(4)]
        assert labels == [(0, 1), (1, 0), (0, 1), (1, 0)]

    def test_uniform_same_seed_same_labels(self, binomial_model):
        a = UniformRandomSchedule().bind(binomial_model, 42)
        b = UniformRandomSchedule().bind(binomial_model, 42)
        assert np.array_equal(a.labels_block(20), b.labels_block(20))


class TestGeneration:
    def test_point_mass_batch(self):
        model = NetworkModel(
            group_sizes=(3,),
            pre=(DiscreteDistribution(np.array([0.0, 0.0, 1.0, 0.0])),),
            post=(DiscreteDistribution(np.array([0.0, 1.0, 0.0, 0.0])),),
        )
        stream = FixedSchedule().bind(model, 0)
        batch = generate_batch(model, stream, "pre", spawn_rng(1, 0))
        assert np.array_equal(batch.samples, [2, 2, 2])

    def test_same_seed_identical_batches(self, binomial_model):
        outs = []
        for _ in range(2):
            stream = UniformRandomSchedule().bind(binomial_model, 5)
            rng = spawn_rng(99, 0)
            outs.append([generate_batch(binomial_model, stream, "pre", rng).samples for _ in range(10)])
        assert all(np.array_equal(x, y) for x, y in zip(*outs))

    def test_gaussian_premix_mean(self, gaussian_model):
        # pre-change groups average to (0 + 2) / 2 = 1
        stream = UniformRandomSchedule().bind(gaussian_model, 3)
        block = sample_block(gaussian_model, stream, "pre", spawn_rng(3, 0), 100_000)
        assert abs(block.mean() - 1.0) < 0.01

    def test_pooled_empirical_matches_mixture(self, binomial_model):
        reps = 100_000
        stream = UniformRandomSchedule().bind(binomial_model, 8)
        block = sample_block(binomial_model, stream, "pre", spawn_rng(8, 0), reps)
        counts = np.bincount(block.ravel(), minlength=11)
        emp = counts / counts.sum()
        mix = mixture_distribution(binomial_model, "pre").probabilities
        se = np.sqrt(mix * (1 - mix) / counts.sum())
        assert np.all(np.abs(emp - mix) <= 3 * np.maximum(se, 1e-6))

    def test_fixed_schedule_equivariance(self, binomial_model):
        # relabeling the slots permutes nothing observable: pooled counts of
        # the two fixed schedules agree by a chi-square check
        reps = 40_000
        lab_a = Labeling(np.array([0, 1]), (1, 1))
        lab_b = Labeling(np.array([1, 0]), (1, 1))
        pooled = []
        for lab in (lab_a, lab_b):
            stream = FixedSchedule(lab).bind(binomial_model, 0)
            block = sample_block(binomial_model, stream, "pre", spawn_rng(4, 0), reps)
            pooled.append(np.bincount(block.ravel(), minlength=11))
        c1, c2 = (p.astype(float) for p in pooled)
        mask = (c1 + c2) > 0
        stat = float(((c1[mask] - c2[mask]) ** 2 / (c1[mask] + c2[mask])).sum())
        assert stat < _CHI2_999[10]

    def test_block_generation_matches_single_steps(self, binomial_model):
        stream_a = UniformRandomSchedule().bind(binomial_model, 11)
        block = sample_block(binomial_model, stream_a, "pre", spawn_rng(11, 0), 16)
        stream_b = UniformRandomSchedule().bind(binomial_model, 11)
        rng = spawn_rng(11, 0)
        singles = np.stack(
            [generate_batch(binomial_model, stream_b, "pre", rng).samples for _ in range(16)]
        )
        assert np.array_equal(block, singles)


class TestChangeScenario:
    def test_validation(self):
        with pytest.raises(ModelError):
            ChangeScenario(0, 10)
        with pytest.raises(ModelError):
            ChangeScenario(1, 0)
        ChangeScenario(math.inf, 10)

    def test_regimes(self):
        sc = ChangeScenario(5, 10)
        assert sc.regime_at(4) == "pre" and sc.regime_at(5) == "post"
        assert ChangeScenario(math.inf, 10).regime_at(10**9) == "pre"
