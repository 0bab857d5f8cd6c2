"""Shared value types: flat embeddings with shape sidecars, raw metric scores,
fitness weights, and the seeded-randomness contract every other module relies on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class EngineError(Exception):
    """Base class for engine failures."""


class ValidationError(EngineError, ValueError):
    """An input violates a declared precondition."""


class DomainError(EngineError, ValueError):
    """An input is syntactically fine but mathematically out of domain."""


@dataclass(frozen=True)
class EmbeddingVector:
    """A flat decision vector plus the shape it was flattened from.

    Optimizers treat ``data`` as an unconstrained point in R^d; ``shape``
    is carried along so the backend can reassemble its native tensor.
    """

    data: np.ndarray
    shape: tuple[int, ...]

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64).ravel()
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if len(self.shape) == 0 or any(s < 1 for s in self.shape):
            raise ValidationError(f"shape must be positive integers, got {self.shape}")
        if math.prod(self.shape) != arr.size:
            raise ValidationError(
                f"shape product {math.prod(self.shape)} != data length {arr.size}"
            )
        if arr.size < 1:
            raise ValidationError("embedding must hold at least one entry")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("embedding entries must be finite")

    @property
    def dim(self) -> int:
        return self.data.size

    def unflatten(self) -> np.ndarray:
        """Reassemble the row-major tensor this vector was flattened from."""
        return self.data.reshape(self.shape)

    def with_data(self, data: np.ndarray) -> "EmbeddingVector":
        """Same shape sidecar, new coordinates."""
        return EmbeddingVector(data=np.asarray(data, dtype=np.float64), shape=self.shape)

    def tolist(self) -> list[float]:
        return self.data.tolist()


def flatten(tensor) -> EmbeddingVector:
    """Row-major flattening of a shaped tensor into an EmbeddingVector.

    Round-trips exactly with :meth:`EmbeddingVector.unflatten`.
    """
    arr = np.asarray(tensor, dtype=np.float64)
    if arr.size == 0:
        raise ValidationError("cannot flatten an empty tensor")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("tensor entries must be finite")
    return EmbeddingVector(data=arr.ravel(order="C"), shape=arr.shape)


@dataclass(frozen=True)
class MetricScores:
    """Raw (aesthetic, alignment) pair for one candidate.

    Nominal ranges are aesthetic in [1, 10] and clip in [-1, 1], but the
    predictors may stray outside them, so nothing is clamped here.
    """

    aesthetic: float
    clip: float
    eval_wall_time: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.aesthetic) and math.isfinite(self.clip)):
            raise ValidationError("scores must be finite")
        if not (math.isfinite(self.eval_wall_time) and self.eval_wall_time >= 0):
            raise ValidationError("eval_wall_time must be >= 0")


@dataclass(frozen=True)
class FitnessConfig:
    """Weights (a, b) and normalization divisors for the scalarized fitness.

    The divisors are observed-maximum normalizers: aesthetic scores divided
    by 10, alignment scores by 0.5. Both divisors are fully configurable.
    """

    a: float = 0.5
    b: float = 0.5
    aesthetic_divisor: float = 10.0
    clip_divisor: float = 0.5

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise ValidationError("weights must be nonnegative")
        if self.a + self.b <= 0:
            raise ValidationError("at least one weight must be positive")
        if self.aesthetic_divisor <= 0 or self.clip_divisor <= 0:
            raise ValidationError("divisors must be strictly positive")


_U64 = 2**64


@dataclass(frozen=True)
class RngSeed:
    """64-bit run seed. Identical seed + identical call sequence gives an
    identical stream of draws; all engine randomness derives from one seed.
    """

    seed: int

    def __post_init__(self):
        if not (0 <= int(self.seed) < _U64):
            raise ValidationError(f"seed must fit in 64 bits, got {self.seed}")
        object.__setattr__(self, "seed", int(self.seed))

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def child(self, *keys: int) -> np.random.Generator:
        """Independent substream keyed by integers (prompt index, optimizer
        slot, ...). Deterministic in (seed, keys)."""
        return np.random.default_rng(np.random.SeedSequence([self.seed, *map(int, keys)]))


def standard_normal_draws(rng: np.random.Generator, n: int) -> np.ndarray:
    """n i.i.d. draws from N(0, 1); deterministic given the generator state."""
    if n < 1:
        raise ValidationError(f"need n >= 1 draws, got {n}")
    return rng.standard_normal(int(n))
