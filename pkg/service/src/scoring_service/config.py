"""Service configuration."""
from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class ServiceConfig:
    """Mode, model identifiers, and the advertised embedding shape.

    Mock mode is fully deterministic and requires no accelerator. Real mode
    loads the generator and scorers lazily on first use.
    """

    mode: str = "mock"  # "mock" | "real"
    embedding_shape: tuple[int, ...] = (4, 64)
    generator_id: str = "stabilityai/sdxl-turbo"
    clip_id: str = "openai/clip-vit-large-patch14"
    aesthetic_head_id: str = "laion/aesthetic-predictor-v2"
    device: str = "cuda"

    def __post_init__(self):
        if self.mode not in ("mock", "real"):
            raise ValueError(f"mode must be 'mock' or 'real', got {self.mode!r}")
        shape = tuple(int(s) for s in self.embedding_shape)
        if not shape or any(s < 1 for s in shape):
            raise ValueError(f"bad embedding shape {self.embedding_shape!r}")
        object.__setattr__(self, "embedding_shape", shape)

    @property
    def dim(self) -> int:
        return math.prod(self.embedding_shape)
