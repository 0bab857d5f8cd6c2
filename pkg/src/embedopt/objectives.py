"""Objective abstraction consumed by both optimizers, plus deterministic
synthetic objectives that emulate the aesthetic/alignment structure so the
whole engine can be exercised without a generator in the loop.

The synthetic landscape places a Gaussian aesthetic bump at a target vector
and uses cosine similarity to the same target as the alignment score, giving
smooth, bounded scores in the ranges the real predictors produce.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .core import (DomainError, EmbeddingVector, FitnessConfig, MetricScores,
                   RngSeed, ValidationError)
from .fitness import FitnessValue, fitness

ObjectiveKind = Literal["remote-backend", "synthetic", "mock-backend"]
GradientCapability = Literal["analytic", "finite-difference", "none"]


@dataclass(frozen=True)
class ObjectiveSpec:
    """Declarative description of an objective, resolvable to an instance."""

    kind: ObjectiveKind
    fitness_config: FitnessConfig
    prompt: str = ""
    target: Optional[EmbeddingVector] = None
    gradient_capability: GradientCapability = "finite-difference"
    endpoint: str = ""

    def __post_init__(self):
        if self.kind == "synthetic" and self.target is None:
            raise ValidationError("synthetic objectives require a target vector")
        if self.kind == "remote-backend" and not self.endpoint:
            raise ValidationError("remote-backend objectives require an endpoint")


def _as_array(z) -> np.ndarray:
    if isinstance(z, EmbeddingVector):
        return z.data
    return np.asarray(z, dtype=np.float64).ravel()


def synthetic_scores(z, target) -> MetricScores:
    """Deterministic stand-in for generate-then-score.

    aesthetic = 1 + 9 * exp(-||z - z*||^2 / (2d)) in (1, 10];
    clip      = cosine(z, z*) in [-1, 1], 0 if either norm vanishes.
    """
    zv, tv = _as_array(z), _as_array(target)
    if zv.size != tv.size:
        raise ValidationError(f"dimension mismatch: {zv.size} vs {tv.size}")
    d = zv.size
    delta = zv - tv
    aesthetic = 1.0 + 9.0 * math.exp(-float(np.dot(delta, delta)) / (2.0 * d))
    nz = math.sqrt(float(np.dot(zv, zv)))
    nt = math.sqrt(float(np.dot(tv, tv)))
    if nz == 0.0 or nt == 0.0:
        clip = 0.0
    else:
        clip = float(np.dot(zv, tv)) / (nz * nt)
    return MetricScores(aesthetic=aesthetic, clip=clip)


def synthetic_gradient(z, target, cfg: FitnessConfig) -> np.ndarray:
    """Analytic gradient of the synthetic fitness with respect to z."""
    zv, tv = _as_array(z), _as_array(target)
    if zv.size != tv.size:
        raise ValidationError(f"dimension mismatch: {zv.size} vs {tv.size}")
    d = zv.size
    delta = zv - tv
    # d/dz [1 + 9 exp(-||delta||^2 / (2d))] = -(9/d) exp(.) delta
    bump = math.exp(-float(np.dot(delta, delta)) / (2.0 * d))
    grad_aes = -(9.0 / d) * bump * delta
    grad = (cfg.a / cfg.aesthetic_divisor) * grad_aes
    if cfg.b > 0:
        nz = math.sqrt(float(np.dot(zv, zv)))
        nt = math.sqrt(float(np.dot(tv, tv)))
        if nz == 0.0:
            raise DomainError("cosine gradient undefined at the zero vector")
        if nt > 0.0:
            cos = float(np.dot(zv, tv)) / (nz * nt)
            grad_cos = tv / (nz * nt) - cos * zv / (nz * nz)
            grad = grad + (cfg.b / cfg.clip_divisor) * grad_cos
    return grad


class SyntheticObjective:
    """Pure, reentrant objective with analytic gradients."""

    gradient_capability: GradientCapability = "analytic"

    def __init__(self, target: EmbeddingVector, cfg: FitnessConfig):
        self.target = target
        self.cfg = cfg

    @property
    def dim(self) -> int:
        return self.target.dim

    def evaluate(self, z) -> tuple[MetricScores, FitnessValue]:
        t0 = time.perf_counter()
        scores = synthetic_scores(z, self.target)
        scores = MetricScores(aesthetic=scores.aesthetic, clip=scores.clip,
                              eval_wall_time=time.perf_counter() - t0)
        return scores, fitness(scores, self.cfg)

    def loss(self, z) -> float:
        _, fv = self.evaluate(z)
        return 1.0 - fv.value

    def fitness_gradient(self, z) -> np.ndarray:
        return synthetic_gradient(z, self.target, self.cfg)

    def loss_gradient(self, z) -> np.ndarray:
        return -self.fitness_gradient(z)


class BackendObjective:
    """Objective backed by a generate-and-score client (mock or remote)."""

    gradient_capability: GradientCapability = "finite-difference"

    def __init__(self, client, prompt: str, cfg: FitnessConfig, seed: int = 0,
                 inference_steps: int = 1, guidance_scale: float = 0.0,
                 width: int = 512, height: int = 512):
        from .backend import GenerationRequest  # deferred: backend imports us

        self._request_cls = GenerationRequest
        self.client = client
        self.prompt = prompt
        self.cfg = cfg
        self.seed = seed
        self.inference_steps = inference_steps
        self.guidance_scale = guidance_scale
        self.width = width
        self.height = height

    def evaluate(self, z) -> tuple[MetricScores, FitnessValue]:
        if not isinstance(z, EmbeddingVector):
            z = EmbeddingVector(data=np.asarray(z, dtype=np.float64),
                                shape=(np.asarray(z).size,))
        req = self._request_cls(
            prompt=self.prompt, embedding=z, seed=self.seed,
            inference_steps=self.inference_steps, guidance_scale=self.guidance_scale,
            width=self.width, height=self.height)
        t0 = time.perf_counter()
        resp = self.client.generate_and_score(req)
        scores = MetricScores(aesthetic=resp.aesthetic, clip=resp.clip,
                              eval_wall_time=time.perf_counter() - t0)
        return scores, fitness(scores, self.cfg)

    def loss(self, z) -> float:
        _, fv = self.evaluate(z)
        return 1.0 - fv.value


def build_objective(spec: ObjectiveSpec, client=None):
    """Resolve an ObjectiveSpec into a callable objective instance."""
    if spec.kind == "synthetic":
        return SyntheticObjective(target=spec.target, cfg=spec.fitness_config)
    if client is None:
        from .backend import HttpBackendClient, MockBackend  # deferred

        client = (MockBackend() if spec.kind == "mock-backend"
                  else HttpBackendClient(spec.endpoint))
    return BackendObjective(client=client, prompt=spec.prompt, cfg=spec.fitness_config)


def evaluate(spec: ObjectiveSpec, z, client=None) -> tuple[MetricScores, FitnessValue]:
    """One-shot evaluation of z under a spec; wall time recorded per call."""
    return build_objective(spec, client=client).evaluate(z)


def make_synthetic_suite(n_prompts: int, dim: int, seed: RngSeed | int,
                         cfg: FitnessConfig) -> list[tuple[str, SyntheticObjective]]:
    """Seeded random targets standing in for an n-prompt evaluation set."""
    if n_prompts < 1 or dim < 1:
        raise ValidationError("need n_prompts >= 1 and dim >= 1")
    root = seed if isinstance(seed, RngSeed) else RngSeed(seed)
    suite = []
    for i in range(n_prompts):
        target = EmbeddingVector(data=root.child(i).standard_normal(dim), shape=(dim,))
        suite.append((f"synthetic-{i:02d}", SyntheticObjective(target, cfg)))
    return suite
