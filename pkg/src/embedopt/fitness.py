"""Weighted fitness over normalized metric scores, its loss complement, and
the cosine-similarity alignment score.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DomainError, FitnessConfig, MetricScores, ValidationError


@dataclass(frozen=True)
class FitnessValue:
    """Scalarized fitness with its normalized components retained."""

    value: float
    norm_aesthetic: float
    norm_clip: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValidationError("fitness must be finite")

    @property
    def components(self) -> tuple[float, float]:
        return (self.norm_aesthetic, self.norm_clip)


def clip_score(image_embedding, text_embedding) -> float:
    """Cosine similarity between an image embedding and a text embedding.

    Estimates prompt-image alignment; lives in [-1, 1].
    """
    u = np.asarray(image_embedding, dtype=np.float64).ravel()
    v = np.asarray(text_embedding, dtype=np.float64).ravel()
    if u.size != v.size:
        raise ValidationError(f"embedding lengths differ: {u.size} vs {v.size}")
    if u.size < 1:
        raise ValidationError("embeddings must be non-empty")
    nu = math.sqrt(float(np.dot(u, u)))
    nv = math.sqrt(float(np.dot(v, v)))
    if nu == 0.0 or nv == 0.0:
        raise DomainError("cosine similarity undefined for zero-norm input")
    return float(np.dot(u, v)) / (nu * nv)


def normalize(raw: float, divisor: float) -> float:
    """raw / divisor, unclamped.

    Values may leave [0, 1]: the divisors are observed maxima, not bounds.
    """
    if divisor <= 0:
        raise ValidationError(f"divisor must be positive, got {divisor}")
    return raw / divisor


def fitness(scores: MetricScores, cfg: FitnessConfig) -> FitnessValue:
    """a * (aesthetic / D_a) + b * (clip / D_c), components recorded."""
    na = normalize(scores.aesthetic, cfg.aesthetic_divisor)
    nc = normalize(scores.clip, cfg.clip_divisor)
    return FitnessValue(value=cfg.a * na + cfg.b * nc, norm_aesthetic=na, norm_clip=nc)


def loss(fitness_value: float) -> float:
    """1 - F(z): the quantity the gradient-based path minimizes."""
    if not math.isfinite(fitness_value):
        raise ValidationError("fitness must be finite")
    return 1.0 - fitness_value
