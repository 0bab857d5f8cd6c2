"""Deterministic mock generate-and-score model.

Independent implementation of the documented mock contract so it can be
conformance-tested against other engines on the same protocol:

  * fnv1a64 is FNV-1a over the UTF-8 bytes of the text.
  * target(prompt)   = default_rng(fnv1a64(prompt)).standard_normal(d)
  * encoding(prompt) = default_rng(fnv1a64("encode:" + prompt)).standard_normal(d)
  * aesthetic = 1 + 9 * exp(-||z - target||^2 / (2d)), d = len(z)
  * clip      = cosine(z, target), 0 if either norm vanishes
  * quantizers: qa = round(aesthetic * 25.5), qc = round((clip + 1) * 127.5),
    both clamped to [0, 255] (Python round: nearest, ties to even)
  * image: integer ramp gradient keyed by (prompt hash bytes, qa, qc)
  * image_id = hex(fnv1a64("{hash:016x}|{qa}|{qc}|{w}x{h}"))
"""
from __future__ import annotations

import io
import math

import numpy as np
from PIL import Image

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_U64 = 2**64


def fnv1a64(text: str) -> int:
    h = FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * FNV_PRIME) % _U64
    return h


def target_vector(prompt: str, dim: int) -> np.ndarray:
    return np.random.default_rng(fnv1a64(prompt)).standard_normal(dim)


def encoding_vector(prompt: str, dim: int) -> np.ndarray:
    return np.random.default_rng(fnv1a64("encode:" + prompt)).standard_normal(dim)


def score_embedding(embedding: np.ndarray, prompt: str) -> tuple[float, float]:
    z = np.asarray(embedding, dtype=np.float64).ravel()
    d = z.size
    t = target_vector(prompt, d)
    delta = z - t
    aesthetic = 1.0 + 9.0 * math.exp(-float(np.dot(delta, delta)) / (2.0 * d))
    nz = math.sqrt(float(np.dot(z, z)))
    nt = math.sqrt(float(np.dot(t, t)))
    clip = 0.0 if nz == 0.0 or nt == 0.0 else float(np.dot(z, t)) / (nz * nt)
    return aesthetic, clip


def quantize(aesthetic: float, clip: float) -> tuple[int, int]:
    qa = int(min(255, max(0, round(aesthetic * 25.5))))
    qc = int(min(255, max(0, round((clip + 1.0) * 127.5))))
    return qa, qc


def image_id_for(prompt_hash: int, qa: int, qc: int, width: int, height: int) -> str:
    return format(fnv1a64(f"{prompt_hash:016x}|{qa}|{qc}|{width}x{height}"), "016x")


def render_image(prompt_hash: int, qa: int, qc: int,
                 width: int, height: int) -> np.ndarray:
    h0 = prompt_hash & 0xFF
    h1 = (prompt_hash >> 8) & 0xFF
    h2 = (prompt_hash >> 16) & 0xFF
    xs = np.arange(width, dtype=np.int64)
    ys = np.arange(height, dtype=np.int64)
    r = (h0 + (xs[None, :] * qa) // max(width - 1, 1)) % 256
    g = (h1 + (ys[:, None] * qc) // max(height - 1, 1)) % 256
    b = (h2 + ((xs[None, :] + ys[:, None]) * (qa ^ qc)) // max(width + height - 2, 1)) % 256
    img = np.empty((height, width, 3), dtype=np.uint8)
    img[:, :, 0] = r
    img[:, :, 1] = np.broadcast_to(g, (height, width))
    img[:, :, 2] = b
    return img


def png_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


class MockModel:
    """Protocol-level mock; stateless, safe for concurrent requests."""

    backend_name = "mock"

    def __init__(self, embedding_shape: tuple[int, ...]):
        self.embedding_shape = tuple(embedding_shape)
        self.dim = int(np.prod(self.embedding_shape))

    def status(self) -> str:
        return "ok"

    def encode(self, prompt: str) -> tuple[list[float], list[int]]:
        vec = encoding_vector(prompt, self.dim)
        return vec.tolist(), list(self.embedding_shape)

    def generate_and_score(self, prompt: str, embedding: np.ndarray, seed: int,
                           steps: int, guidance: float, width: int, height: int,
                           return_image: bool) -> dict:
        aesthetic, clip = score_embedding(embedding, prompt)
        qa, qc = quantize(aesthetic, clip)
        prompt_hash = fnv1a64(prompt)
        image_b64 = None
        if return_image:
            import base64

            image_b64 = base64.b64encode(
                png_bytes(render_image(prompt_hash, qa, qc, width, height))
            ).decode("ascii")
        return {
            "aesthetic": aesthetic,
            "clip": clip,
            "image_id": image_id_for(prompt_hash, qa, qc, width, height),
            "image_png_b64": image_b64,
        }
