import math

import numpy as np
import pytest

from embedopt.adam import finite_difference_gradient
from embedopt.core import (DomainError, EmbeddingVector, FitnessConfig,
                           ValidationError)
from embedopt.objectives import (ObjectiveSpec, SyntheticObjective,
                                 build_objective, evaluate, make_synthetic_suite,
                                 synthetic_gradient, synthetic_scores)


def vec(arr):
    arr = np.asarray(arr, dtype=np.float64)
    return EmbeddingVector(data=arr, shape=(arr.size,))


class TestSyntheticScores:
    def test_at_target(self):
        z = vec([1.0, -2.0, 0.5])
        s = synthetic_scores(z, z)
        assert s.aesthetic == pytest.approx(10.0)
        assert s.clip == pytest.approx(1.0)

    def test_orthogonal_at_distance(self):
        # ||z - z*||^2 = 2d with orthogonal directions
        d = 8
        z = np.zeros(d)
        z[0] = math.sqrt(d)
        t = np.zeros(d)
        t[1] = math.sqrt(d)
        s = synthetic_scores(vec(z), vec(t))
        assert s.aesthetic == pytest.approx(1.0 + 9.0 * math.exp(-1.0), abs=1e-12)
        assert s.aesthetic == pytest.approx(4.3109, abs=5e-4)
        assert s.clip == pytest.approx(0.0, abs=1e-12)

    def test_antipodal(self):
        z = vec([0.4, -1.1, 2.0])
        s = synthetic_scores(vec(-z.data), z)
        assert s.clip == pytest.approx(-1.0)

    def test_zero_norm_clip_convention(self):
        s = synthetic_scores(vec([0.0, 0.0]), vec([1.0, 1.0]))
        assert s.clip == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            synthetic_scores(vec([1.0]), vec([1.0, 2.0]))

    def test_score_ranges(self):
        # the open lower bound saturates to 1.0 in float64 once the bump
        # underflows, so assert the closed interval plus strictness nearby
        rng = np.random.default_rng(4)
        for _ in range(200):
            d = int(rng.integers(1, 30))
            s = synthetic_scores(rng.normal(size=d) * 10, rng.normal(size=d))
            assert 1.0 <= s.aesthetic <= 10.0
            assert -1.0 <= s.clip <= 1.0 + 1e-12
        near = synthetic_scores(np.full(4, 3.0), np.zeros(4))
        assert 1.0 < near.aesthetic <= 10.0


class TestSyntheticGradient:
    def test_stationary_at_target_aesthetic_only(self):
        z = vec([0.3, 0.9, -1.4])
        g = synthetic_gradient(z, z, FitnessConfig(a=1.0, b=0.0))
        np.testing.assert_allclose(g, np.zeros(3), atol=1e-15)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            d = int(rng.integers(2, 16))
            z = rng.normal(size=d)
            t = rng.normal(size=d)
            a, b = rng.uniform(0.05, 1.0, size=2)
            cfg = FitnessConfig(a=a, b=b)
            obj = SyntheticObjective(vec(t), cfg)
            analytic = synthetic_gradient(z, t, cfg)
            fd = -finite_difference_gradient(obj.loss, z, 1e-4)
            denom = max(np.linalg.norm(fd), 1e-12)
            assert np.linalg.norm(analytic - fd) / denom < 1e-5

    def test_alignment_gradient_orthogonal_to_z(self):
        rng = np.random.default_rng(6)
        cfg = FitnessConfig(a=0.0, b=1.0)
        for _ in range(30):
            d = int(rng.integers(2, 12))
            z, t = rng.normal(size=d), rng.normal(size=d)
            for scale in (1.0, 2.0):
                g = synthetic_gradient(scale * z, t, cfg)
                assert abs(np.dot(g, scale * z)) < 1e-9

    def test_zero_norm_domain_error(self):
        with pytest.raises(DomainError):
            synthetic_gradient(np.zeros(3), np.ones(3), FitnessConfig(a=0.0, b=1.0))


class TestEvaluate:
    def test_at_target_aesthetic_only(self):
        z = vec([1.0, 2.0])
        spec = ObjectiveSpec(kind="synthetic", fitness_config=FitnessConfig(a=1.0, b=0.0),
                             target=z)
        _, fv = evaluate(spec, z)
        assert fv.value == pytest.approx(1.0)

    def test_unclamped_fitness_above_one(self):
        z = vec([1.0, 2.0])
        spec = ObjectiveSpec(kind="synthetic",
                             fitness_config=FitnessConfig(a=0.5, b=0.5), target=z)
        _, fv = evaluate(spec, z)
        assert fv.value == pytest.approx(1.5)  # 0.5*1.0 + 0.5*2.0

    def test_mock_backend_is_deterministic(self):
        spec = ObjectiveSpec(kind="mock-backend",
                             fitness_config=FitnessConfig(a=0.5, b=0.5),
                             prompt="a cat")
        z = vec(np.linspace(-1, 1, 256))
        s1, f1 = evaluate(spec, z)
        s2, f2 = evaluate(spec, z)
        assert (s1.aesthetic, s1.clip) == (s2.aesthetic, s2.clip)
        assert f1.value == f2.value

    def test_spec_validation(self):
        with pytest.raises(ValidationError):
            ObjectiveSpec(kind="synthetic", fitness_config=FitnessConfig())
        with pytest.raises(ValidationError):
            ObjectiveSpec(kind="remote-backend", fitness_config=FitnessConfig())

    def test_target_beats_random_probes(self):
        rng = np.random.default_rng(7)
        d = 12
        target = vec(rng.normal(size=d))
        obj = SyntheticObjective(target, FitnessConfig(a=0.5, b=0.5))
        _, best = obj.evaluate(target)
        for _ in range(10**4):
            _, fv = obj.evaluate(rng.normal(size=d) * rng.uniform(0.1, 3.0))
            assert fv.value <= best.value


class TestSyntheticSuite:
    def test_deterministic_and_distinct(self):
        a = make_synthetic_suite(8, 16, 42, FitnessConfig())
        b = make_synthetic_suite(8, 16, 42, FitnessConfig())
        assert [n for n, _ in a] == [n for n, _ in b]
        for (_, oa), (_, ob) in zip(a, b):
            np.testing.assert_array_equal(oa.target.data, ob.target.data)
        targets = np.stack([o.target.data for _, o in a])
        assert len(np.unique(targets, axis=0)) == 8

    def test_validation(self):
        with pytest.raises(ValidationError):
            make_synthetic_suite(0, 4, 1, FitnessConfig())


def test_build_objective_synthetic_capability():
    spec = ObjectiveSpec(kind="synthetic", fitness_config=FitnessConfig(),
                         target=vec([1.0, 0.0]))
    obj = build_objective(spec)
    assert obj.gradient_capability == "analytic"
