"""Image-space divergence between optimized outputs and the baseline image:
mean SSIM over Gaussian windows and cosine distance over raw pixels.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .core import DomainError, ValidationError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
# Rec. 601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class ImageBuffer:
    """Row-major image samples: uint8 or real-valued, 1 or 3 channels."""

    width: int
    height: int
    channels: int
    data: np.ndarray  # (height, width, channels)

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise ValidationError(f"channels must be 1 or 3, got {self.channels}")
        if self.width < 1 or self.height < 1:
            raise ValidationError("width and height must be positive")
        arr = np.asarray(self.data)
        if arr.dtype != np.uint8:
            arr = np.asarray(arr, dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValidationError("image samples must be finite")
        if arr.size != self.width * self.height * self.channels:
            raise ValidationError("data length must equal width*height*channels")
        object.__setattr__(self, "data", arr.reshape(self.height, self.width, self.channels))

    @classmethod
    def from_array(cls, arr) -> "ImageBuffer":
        arr = np.asarray(arr)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValidationError(f"expected a 2-D or 3-D array, got ndim={arr.ndim}")
        h, w, c = arr.shape
        return cls(width=w, height=h, channels=c, data=arr)

    @property
    def dynamic_range(self) -> float:
        return 255.0 if self.data.dtype == np.uint8 else 1.0

    def flat(self) -> np.ndarray:
        return np.asarray(self.data, dtype=np.float64).ravel()


def to_grayscale(img: ImageBuffer) -> ImageBuffer:
    """Rec. 601 luma; identity (bit-exact copy) for single-channel input."""
    if img.channels == 1:
        return ImageBuffer(width=img.width, height=img.height, channels=1,
                           data=img.data.copy())
    if img.data.dtype == np.uint8:
        y = img.data.astype(np.float64) @ _LUMA
        y = np.floor(y + 0.5).astype(np.uint8)  # round half up, not banker's
    else:
        y = img.data @ _LUMA
    return ImageBuffer(width=img.width, height=img.height, channels=1, data=y[:, :, None])


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _windowed_mean(plane: np.ndarray, window: np.ndarray) -> np.ndarray:
    # Separable filtering, then crop to windows that fit entirely inside the
    # image so the boundary mode never leaks into the result.
    pad = (window.size - 1) // 2
    out = correlate1d(plane, window, axis=0, mode="constant")
    out = correlate1d(out, window, axis=1, mode="constant")
    return out[pad:-pad, pad:-pad]


def ssim(a: ImageBuffer, b: ImageBuffer) -> float:
    """Mean SSIM over 11x11 Gaussian windows (sigma 1.5, K1 0.01, K2 0.03).

    Dynamic range is 255 for 8-bit images and 1.0 for real-valued ones;
    inputs with three channels are converted to luma first.
    """
    if (a.width, a.height) != (b.width, b.height):
        raise ValidationError("images must share dimensions")
    if a.data.dtype != b.data.dtype:
        raise ValidationError("images must share sample type")
    if a.width < SSIM_WINDOW or a.height < SSIM_WINDOW:
        raise ValidationError(f"images must be at least {SSIM_WINDOW}px per side")
    x = np.asarray(to_grayscale(a).data[:, :, 0], dtype=np.float64)
    y = np.asarray(to_grayscale(b).data[:, :, 0], dtype=np.float64)
    dynamic_range = a.dynamic_range
    c1 = (SSIM_K1 * dynamic_range) ** 2
    c2 = (SSIM_K2 * dynamic_range) ** 2

    window = _gaussian_window()
    mu_x = _windowed_mean(x, window)
    mu_y = _windowed_mean(y, window)
    var_x = _windowed_mean(x * x, window) - mu_x * mu_x
    var_y = _windowed_mean(y * y, window) - mu_y * mu_y
    cov = _windowed_mean(x * y, window) - mu_x * mu_y

    ssim_map = ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)) / (
        (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2))
    return float(ssim_map.mean())


def vector_cosine_distance(u, v) -> float:
    """1 - cosine similarity between two flat representations, in [0, 2].

    The default image comparison feeds raw pixels through this; any other
    representation (an image embedding, say) can be swapped in by the caller.
    """
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.size != v.size:
        raise ValidationError(f"representation lengths differ: {u.size} vs {v.size}")
    nu = math.sqrt(float(np.dot(u, u)))
    nv = math.sqrt(float(np.dot(v, v)))
    if nu == 0.0 or nv == 0.0:
        raise DomainError("cosine distance undefined for zero-norm input")
    cos = float(np.dot(u, v)) / (nu * nv)
    return 1.0 - max(-1.0, min(1.0, cos))


def cosine_distance(a: ImageBuffer, b: ImageBuffer) -> float:
    """1 - cosine similarity of the flattened raw pixel vectors, in [0, 2]."""
    if (a.width, a.height, a.channels) != (b.width, b.height, b.channels):
        raise ValidationError("images must share dimensions and channel count")
    return vector_cosine_distance(a.flat(), b.flat())


def decode_png(data: bytes) -> ImageBuffer:
    """Decode 8-bit RGB or grayscale PNG bytes from the backend."""
    from PIL import Image

    img = Image.open(io.BytesIO(data))
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB")
    return ImageBuffer.from_array(np.asarray(img, dtype=np.uint8))


def encode_png(img: ImageBuffer) -> bytes:
    """Encode an 8-bit ImageBuffer as PNG."""
    from PIL import Image

    arr = img.data
    if arr.dtype != np.uint8:
        raise ValidationError("PNG encoding expects 8-bit samples")
    pil = Image.fromarray(arr[:, :, 0] if img.channels == 1 else arr,
                          mode="L" if img.channels == 1 else "RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()
