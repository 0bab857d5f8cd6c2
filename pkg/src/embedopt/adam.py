"""Adam over the embedding vector, minimizing 1 - fitness.

Weight decay is decoupled by default (applied outside the moment machinery);
a switch restores classic coupled L2 for comparison. A central-difference
gradient fallback makes the optimizer usable against backends that cannot
supply gradients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import EmbeddingVector, EngineError, ValidationError
from .trace import BestSeen, RunAborted, RunTrace, TraceEntry, VirtualClock


@dataclass(frozen=True)
class AdamParams:
    """Hyperparameters; defaults are the hand-tuned embedding-run values."""

    alpha: float = 5e-3
    beta1: float = 0.85
    beta2: float = 0.98
    epsilon: float = 1e-8
    weight_decay: float = 1e-5
    decoupled_decay: bool = True

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValidationError("learning rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValidationError("betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be positive")
        if self.weight_decay < 0:
            raise ValidationError("weight decay must be >= 0")


class GradientProbeError(EngineError):
    """A finite-difference probe failed; carries the coordinate index."""

    def __init__(self, coordinate: int, cause: Exception):
        super().__init__(f"objective failed while probing coordinate {coordinate}: {cause}")
        self.coordinate = coordinate


class Adam:
    """Stateful Adam on a flat vector; steps are strictly sequential."""

    def __init__(self, z0: EmbeddingVector | np.ndarray, params: AdamParams | None = None):
        if isinstance(z0, EmbeddingVector):
            z = z0.data.copy()
            self.shape = z0.shape
        else:
            z = np.asarray(z0, dtype=np.float64).ravel().copy()
            self.shape = (z.size,)
        if z.size < 1 or not np.all(np.isfinite(z)):
            raise ValidationError("initial vector must be non-empty and finite")
        self.params = params if params is not None else AdamParams()
        self.z = z
        self.m = np.zeros(z.size)
        self.v = np.zeros(z.size)
        self.t = 0

    @property
    def dim(self) -> int:
        return self.z.size

    def step(self, gradient) -> None:
        """One update from the gradient of the loss at the current iterate."""
        g = np.asarray(gradient, dtype=np.float64).ravel()
        if g.size != self.dim:
            raise ValidationError(f"gradient length {g.size} != dimension {self.dim}")
        if not np.all(np.isfinite(g)):
            raise ValidationError("gradient must be finite")
        p = self.params
        if not p.decoupled_decay and p.weight_decay > 0:
            g = g + p.weight_decay * self.z  # classic L2: decay enters the moments
        self.t += 1
        self.m = p.beta1 * self.m + (1.0 - p.beta1) * g
        self.v = p.beta2 * self.v + (1.0 - p.beta2) * g * g
        m_hat = self.m / (1.0 - p.beta1**self.t)
        v_hat = self.v / (1.0 - p.beta2**self.t)
        update = m_hat / (np.sqrt(v_hat) + p.epsilon)
        if p.decoupled_decay and p.weight_decay > 0:
            update = update + p.weight_decay * self.z
        self.z = self.z - p.alpha * update

    def current(self) -> EmbeddingVector:
        return EmbeddingVector(data=self.z.copy(), shape=self.shape)

    def run(self, objective, iterations: int, fd_step: float = 1e-3, clock=None,
            max_wall_s: float | None = None,
            prompt_id: str = "", optimizer_id: str = "adam") -> tuple[RunTrace, BestSeen]:
        """Iterate evaluate/gradient/step, tracing best-so-far fitness.

        The gradient comes from ``objective.loss_gradient`` when the objective
        is analytic, otherwise from central differences at ``fd_step`` (2d
        extra evaluations per iteration, all counted). Best-so-far tracks the
        visited iterates only, never the probe points.
        """
        if iterations < 1:
            raise ValidationError(f"need iterations >= 1, got {iterations}")
        clock = clock if clock is not None else VirtualClock()
        analytic = getattr(objective, "gradient_capability", "finite-difference") == "analytic"
        trace = RunTrace(prompt_id=prompt_id, optimizer_id=optimizer_id)
        best: BestSeen | None = None
        evals = 0
        for t in range(iterations):
            if max_wall_s is not None and clock.now() >= max_wall_s:
                break
            z = self.current()
            try:
                scores, fv = objective.evaluate(z)
            except Exception as exc:
                raise RunAborted(f"objective failed at iteration {t}: {exc}",
                                 trace, best) from exc
            clock.advance(1)
            evals += 1
            if best is None:
                best = BestSeen(vector=z, fitness=fv, scores=scores, evaluations=evals)
            else:
                best.consider(z, fv, scores, evals)
            if analytic:
                g = objective.loss_gradient(self.z)
            else:
                def loss_at(vec: np.ndarray) -> float:
                    _, probe = objective.evaluate(EmbeddingVector(data=vec, shape=self.shape))
                    clock.advance(1)
                    return 1.0 - probe.value
                g = finite_difference_gradient(loss_at, self.z, fd_step)
                evals += 2 * self.dim
            self.step(g)
            trace.entries.append(TraceEntry(
                iteration=t + 1, evaluations=evals, wall_s=clock.now(),
                best_fitness=best.fitness.value,
                best_aesthetic=best.scores.aesthetic,
                best_clip=best.scores.clip))
        assert best is not None
        return trace, best


def finite_difference_gradient(objective, z, h: float = 1e-3) -> np.ndarray:
    """Central differences of a scalar objective: exactly 2d calls.

    g_j = (L(z + h e_j) - L(z - h e_j)) / (2h); exact on polynomials of
    degree <= 2, O(h^2) error otherwise.
    """
    if not (h > 0):
        raise ValidationError(f"finite-difference step must be positive, got {h}")
    z = np.asarray(z, dtype=np.float64).ravel()
    g = np.empty(z.size)
    for j in range(z.size):
        probe = z.copy()
        try:
            probe[j] = z[j] + h
            up = objective(probe)
            probe[j] = z[j] - h
            down = objective(probe)
        except Exception as exc:
            raise GradientProbeError(j, exc) from exc
        g[j] = (up - down) / (2.0 * h)
    return g
