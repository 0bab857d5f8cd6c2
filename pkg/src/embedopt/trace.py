"""Run traces, best-so-far bookkeeping, and the clock abstraction that makes
deterministic runs possible.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from .core import EmbeddingVector, EngineError, MetricScores, ValidationError
from .fitness import FitnessValue


@dataclass(frozen=True)
class TraceEntry:
    """One row of a convergence trace: best-so-far state after an iteration."""

    iteration: int
    evaluations: int
    wall_s: float
    best_fitness: float
    best_aesthetic: float
    best_clip: float


@dataclass
class RunTrace:
    """Time-stamped best-so-far sequence for one optimizer on one prompt."""

    prompt_id: str
    optimizer_id: str
    entries: list[TraceEntry] = field(default_factory=list)

    def check_monotone(self) -> None:
        """Best-so-far fitness and wall seconds must be non-decreasing."""
        for prev, cur in zip(self.entries, self.entries[1:]):
            if cur.best_fitness < prev.best_fitness:
                raise ValidationError("best-so-far fitness decreased within a trace")
            if cur.wall_s < prev.wall_s:
                raise ValidationError("wall time decreased within a trace")

    @property
    def final_best_fitness(self) -> float | None:
        return self.entries[-1].best_fitness if self.entries else None


@dataclass
class BestSeen:
    """Highest-fitness candidate observed over all evaluations of a run."""

    vector: EmbeddingVector
    fitness: FitnessValue
    scores: MetricScores
    evaluations: int = 0

    def consider(self, vector: EmbeddingVector, fv: FitnessValue,
                 scores: MetricScores, evaluations: int) -> bool:
        """Adopt the candidate iff strictly better; first-seen wins ties."""
        if fv.value > self.fitness.value:
            self.vector = vector
            self.fitness = fv
            self.scores = scores
            self.evaluations = evaluations
            return True
        return False


class RunAborted(EngineError):
    """Objective failure mid-run; carries the partial trace gathered so far."""

    def __init__(self, message: str, trace: RunTrace, best: BestSeen | None):
        super().__init__(message)
        self.trace = trace
        self.best = best


class RealClock:
    """Wall-clock seconds since construction."""

    def __init__(self):
        self._t0 = time.perf_counter()

    def advance(self, evaluations: int = 1) -> None:
        pass

    def now(self) -> float:
        return time.perf_counter() - self._t0


class VirtualClock:
    """Deterministic clock: one objective evaluation costs ``cost_per_eval``
    virtual seconds. Keeps trace and report files byte-identical across runs.
    """

    def __init__(self, cost_per_eval: float = 1.0):
        if cost_per_eval < 0:
            raise ValidationError("cost_per_eval must be >= 0")
        self.cost_per_eval = cost_per_eval
        self._t = 0.0

    def advance(self, evaluations: int = 1) -> None:
        self._t += self.cost_per_eval * evaluations

    def now(self) -> float:
        return self._t
