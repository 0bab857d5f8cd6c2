import numpy as np
import pytest

from embedopt.core import MetricScores
from embedopt.fitness import FitnessValue


class ArrayObjective:
    """Wrap a plain f(np.ndarray) -> float as an engine objective.

    The scalar doubles as the fitness value; call count is tracked so tests
    can assert evaluation budgets.
    """

    gradient_capability = "none"

    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def evaluate(self, z):
        self.calls += 1
        v = float(self.fn(np.asarray(z.data, dtype=np.float64)))
        scores = MetricScores(aesthetic=v, clip=0.0)
        return scores, FitnessValue(value=v, norm_aesthetic=v, norm_clip=0.0)


class QuadraticLossObjective:
    """loss = ||z||^2 / 2 with analytic gradients; fitness = 1 - loss."""

    gradient_capability = "analytic"

    def evaluate(self, z):
        arr = np.asarray(z.data, dtype=np.float64)
        f = 1.0 - 0.5 * float(np.dot(arr, arr))
        scores = MetricScores(aesthetic=f, clip=0.0)
        return scores, FitnessValue(value=f, norm_aesthetic=f, norm_clip=0.0)

    def loss_gradient(self, z):
        return np.asarray(z, dtype=np.float64).ravel().copy()


@pytest.fixture
def sphere_objective():
    return ArrayObjective(lambda z: -float(np.dot(z, z)))
