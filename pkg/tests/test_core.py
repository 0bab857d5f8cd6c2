import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from embedopt.core import (EmbeddingVector, FitnessConfig, MetricScores, RngSeed,
                           ValidationError, flatten, standard_normal_draws)


class TestFlatten:
    def test_row_major(self):
        vec = flatten([[1.0, 2.0], [3.0, 4.0]])
        assert vec.data.tolist() == [1.0, 2.0, 3.0, 4.0]
        assert vec.shape == (2, 2)

    def test_identity_case(self):
        vec = flatten([7.0])
        assert vec.data.tolist() == [7.0]
        assert vec.shape == (1,)

    def test_large_round_trip_exact(self):
        rng = np.random.default_rng(7)
        tensor = rng.normal(size=(77, 2048))
        vec = flatten(tensor)
        assert vec.dim == 77 * 2048
        np.testing.assert_array_equal(vec.unflatten(), tensor)

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            flatten([[1.0, np.nan]])
        with pytest.raises(ValidationError):
            flatten([np.inf])

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            flatten(np.zeros((0, 3)))

    @given(st.lists(st.integers(min_value=1, max_value=6), min_size=1, max_size=4),
           st.integers(min_value=0, max_value=2**32 - 1))
    def test_round_trip_bijection(self, shape, seed):
        tensor = np.random.default_rng(seed).normal(size=tuple(shape))
        vec = flatten(tensor)
        assert vec.shape == tuple(shape)
        np.testing.assert_array_equal(vec.unflatten(), tensor)


class TestEmbeddingVector:
    def test_shape_product_must_match(self):
        with pytest.raises(ValidationError):
            EmbeddingVector(data=np.zeros(4), shape=(3,))

    def test_non_finite_rejected(self):
        with pytest.raises(ValidationError):
            EmbeddingVector(data=np.array([1.0, np.nan]), shape=(2,))

    def test_nonpositive_shape_rejected(self):
        with pytest.raises(ValidationError):
            EmbeddingVector(data=np.zeros(0), shape=(0,))

    def test_with_data_keeps_shape(self):
        vec = EmbeddingVector(data=np.zeros(6), shape=(2, 3))
        out = vec.with_data(np.ones(6))
        assert out.shape == (2, 3)
        assert out.data.sum() == 6.0


class TestNormalDraws:
    def test_deterministic_given_state(self):
        a = standard_normal_draws(np.random.default_rng(123), 5)
        b = standard_normal_draws(np.random.default_rng(123), 5)
        np.testing.assert_array_equal(a, b)

    def test_moment_check(self):
        draws = standard_normal_draws(RngSeed(2024).generator(), 10**6)
        assert abs(draws.mean()) < 0.01
        assert abs(draws.var() - 1.0) < 0.02

    def test_zero_draws_rejected(self):
        with pytest.raises(ValidationError):
            standard_normal_draws(np.random.default_rng(0), 0)


class TestRngSeed:
    def test_seed_range(self):
        with pytest.raises(ValidationError):
            RngSeed(-1)
        with pytest.raises(ValidationError):
            RngSeed(2**64)
        RngSeed(2**64 - 1)  # boundary is fine

    def test_children_are_deterministic_and_distinct(self):
        a = RngSeed(9).child(1, 2).standard_normal(8)
        b = RngSeed(9).child(1, 2).standard_normal(8)
        c = RngSeed(9).child(1, 3).standard_normal(8)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)


class TestConfigTypes:
    def test_metric_scores_validation(self):
        with pytest.raises(ValidationError):
            MetricScores(aesthetic=np.nan, clip=0.0)
        with pytest.raises(ValidationError):
            MetricScores(aesthetic=5.0, clip=0.1, eval_wall_time=-1.0)

    def test_fitness_config_validation(self):
        with pytest.raises(ValidationError):
            FitnessConfig(a=-0.1, b=0.5)
        with pytest.raises(ValidationError):
            FitnessConfig(a=0.0, b=0.0)
        with pytest.raises(ValidationError):
            FitnessConfig(a=1.0, b=0.0, aesthetic_divisor=0.0)
