"""Wire-protocol client for the generate-and-score service, plus an
in-process deterministic mock implementing the identical protocol.

Protocol (HTTP/1.1 + JSON, field names fixed):
  GET  /health             -> {"status": "ok", "backend": "mock"|"real",
                               "embedding_shape": [...]}
  POST /encode             <- {"prompt": "..."}
                           -> {"embedding": [...], "shape": [...]}
  POST /generate_and_score <- {"prompt", "embedding", "shape", "seed",
                               "steps", "guidance", "width", "height",
                               "return_image"}
                           -> {"aesthetic", "clip", "image_id",
                               "image_png_b64"}

Mock determinism contract (shared with any other implementation):
  * target(prompt)  = default_rng(fnv1a64(prompt)).standard_normal(d)
  * encode(prompt)  = default_rng(fnv1a64("encode:" + prompt)).standard_normal(d)
  * aesthetic/clip  = the synthetic-objective formulas against target(prompt),
                      with d taken from the request's embedding
  * image           = integer ramp gradient keyed by (prompt hash, quantized
                      scores); see make_mock_image
"""
from __future__ import annotations

import base64
import functools
import json
import math
import threading
import time
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import requests

from .core import EmbeddingVector, EngineError, ValidationError
from .objectives import synthetic_scores

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_U64 = 2**64


class TransportError(EngineError):
    """The backend could not be reached (after retries)."""


class ProtocolError(EngineError):
    """The backend answered, but not with a schema-valid message."""


def fnv1a64(text: str) -> int:
    """FNV-1a over the UTF-8 bytes; the mock's only source of prompt entropy."""
    h = FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * FNV_PRIME) % _U64
    return h


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    embedding: EmbeddingVector
    seed: int = 0
    inference_steps: int = 1
    guidance_scale: float = 0.0
    width: int = 512
    height: int = 512
    return_image: bool = False

    def __post_init__(self):
        if self.inference_steps < 1:
            raise ValidationError("inference_steps must be >= 1")
        if self.guidance_scale < 0:
            raise ValidationError("guidance_scale must be >= 0")
        if self.width < 1 or self.height < 1:
            raise ValidationError("image dimensions must be positive")


@dataclass(frozen=True)
class ScoreResponse:
    aesthetic: float
    clip: float
    image_id: str
    image_png: bytes | None = None

    def __post_init__(self):
        if not (math.isfinite(self.aesthetic) and math.isfinite(self.clip)):
            raise ValidationError("scores must be finite")


# ---------------------------------------------------------------------------
# Wire codecs. serialize(deserialize(msg)) round-trips for schema-valid
# messages; numbers travel as IEEE-754 doubles in decimal.

def request_to_wire(req: GenerationRequest) -> dict:
    return {
        "prompt": req.prompt,
        "embedding": req.embedding.tolist(),
        "shape": list(req.embedding.shape),
        "seed": req.seed,
        "steps": req.inference_steps,
        "guidance": req.guidance_scale,
        "width": req.width,
        "height": req.height,
        "return_image": req.return_image,
    }


def request_from_wire(msg: dict) -> GenerationRequest:
    try:
        embedding = EmbeddingVector(data=np.asarray(msg["embedding"], dtype=np.float64),
                                    shape=tuple(msg["shape"]))
        return GenerationRequest(
            prompt=str(msg["prompt"]), embedding=embedding, seed=int(msg["seed"]),
            inference_steps=int(msg["steps"]), guidance_scale=float(msg["guidance"]),
            width=int(msg["width"]), height=int(msg["height"]),
            return_image=bool(msg["return_image"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ProtocolError(f"malformed generation request: {exc}") from exc


def response_to_wire(resp: ScoreResponse) -> dict:
    return {
        "aesthetic": resp.aesthetic,
        "clip": resp.clip,
        "image_id": resp.image_id,
        "image_png_b64": (base64.b64encode(resp.image_png).decode("ascii")
                          if resp.image_png is not None else None),
    }


def response_from_wire(msg: dict) -> ScoreResponse:
    try:
        png = msg.get("image_png_b64")
        return ScoreResponse(
            aesthetic=float(msg["aesthetic"]), clip=float(msg["clip"]),
            image_id=str(msg["image_id"]),
            image_png=base64.b64decode(png) if png is not None else None)
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed score response: {exc}") from exc


# ---------------------------------------------------------------------------
# In-process deterministic mock.

@functools.lru_cache(maxsize=4096)
def _seeded_normal(seed: int, dim: int) -> np.ndarray:
    arr = np.random.default_rng(seed).standard_normal(dim)
    arr.flags.writeable = False  # cached, shared across calls
    return arr


def mock_target(prompt: str, dim: int) -> np.ndarray:
    return _seeded_normal(fnv1a64(prompt), dim)


def mock_encoding(prompt: str, dim: int) -> np.ndarray:
    # Distinct stream from the target: the starting point must not sit on
    # the optimum the mock scores against.
    return _seeded_normal(fnv1a64("encode:" + prompt), dim)


def quantized_scores(aesthetic: float, clip: float) -> tuple[int, int]:
    """Scores quantized to bytes; the image key. aesthetic 0..10 and clip
    -1..1 map onto 0..255 with saturation."""
    qa = int(min(255, max(0, round(aesthetic * 25.5))))
    qc = int(min(255, max(0, round((clip + 1.0) * 127.5))))
    return qa, qc


def make_mock_image(prompt_hash: int, qa: int, qc: int,
                    width: int, height: int) -> np.ndarray:
    """Deterministic RGB ramp keyed by (prompt hash, quantized scores).

    Integer-only arithmetic so any implementation reproduces it bit-exactly.
    """
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


class MockBackend:
    """Deterministic generate-and-score stand-in; safe for concurrent use."""

    name = "mock"

    def __init__(self, shape: tuple[int, ...] = (4, 64)):
        self.shape = tuple(int(s) for s in shape)
        self.dim = int(np.prod(self.shape))
        if self.dim < 1:
            raise ValidationError("mock embedding shape must be non-empty")

    def clone(self) -> "MockBackend":
        return self  # stateless

    def health(self) -> dict:
        return {"status": "ok", "backend": "mock", "embedding_shape": list(self.shape)}

    def encode_prompt(self, prompt: str) -> EmbeddingVector:
        if not prompt:
            raise ValidationError("prompt must be non-empty")
        return EmbeddingVector(data=mock_encoding(prompt, self.dim), shape=self.shape)

    def generate_and_score(self, req: GenerationRequest) -> ScoreResponse:
        d = req.embedding.dim
        target = mock_target(req.prompt, d)
        scores = synthetic_scores(req.embedding, target)
        qa, qc = quantized_scores(scores.aesthetic, scores.clip)
        prompt_hash = fnv1a64(req.prompt)
        image_id = format(
            fnv1a64(f"{prompt_hash:016x}|{qa}|{qc}|{req.width}x{req.height}"), "016x")
        png = None
        if req.return_image:
            from .similarity import ImageBuffer, encode_png

            arr = make_mock_image(prompt_hash, qa, qc, req.width, req.height)
            png = encode_png(ImageBuffer.from_array(arr))
        return ScoreResponse(aesthetic=scores.aesthetic, clip=scores.clip,
                             image_id=image_id, image_png=png)


# ---------------------------------------------------------------------------
# HTTP client.

class HttpBackendClient:
    """Thin JSON client with idempotent retries (exponential backoff, max 3).

    Each logical request carries a client-generated X-Request-Id so a retried
    delivery is recognizable server-side; the JSON bodies stay schema-exact.
    """

    name = "http"

    def __init__(self, base_url: str, timeout: float = 30.0, max_retries: int = 3,
                 backoff_s: float = 0.25):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self._session = requests.Session()

    def clone(self) -> "HttpBackendClient":
        return HttpBackendClient(self.base_url, timeout=self.timeout,
                                 max_retries=self.max_retries, backoff_s=self.backoff_s)

    def _call(self, method: str, path: str, body: dict | None = None) -> dict:
        url = f"{self.base_url}{path}"
        headers = {"X-Request-Id": uuid.uuid4().hex}
        last_exc: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                if method == "GET":
                    resp = self._session.get(url, headers=headers, timeout=self.timeout)
                else:
                    resp = self._session.post(url, json=body, headers=headers,
                                              timeout=self.timeout)
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_exc = exc
                if attempt + 1 < self.max_retries:
                    time.sleep(self.backoff_s * (2**attempt))
                continue
            if resp.status_code != 200:
                raise ProtocolError(f"{path} returned HTTP {resp.status_code}: "
                                    f"{resp.text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise ProtocolError(f"{path} returned non-JSON body") from exc
        raise TransportError(f"backend unreachable after {self.max_retries} attempts: "
                             f"{last_exc}")

    def health(self) -> dict:
        msg = self._call("GET", "/health")
        if "status" not in msg or "embedding_shape" not in msg:
            raise ProtocolError("health response missing required fields")
        return msg

    def encode_prompt(self, prompt: str) -> EmbeddingVector:
        if not prompt:
            raise ValidationError("prompt must be non-empty")
        msg = self._call("POST", "/encode", {"prompt": prompt})
        try:
            return EmbeddingVector(data=np.asarray(msg["embedding"], dtype=np.float64),
                                   shape=tuple(msg["shape"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed encode response: {exc}") from exc

    def generate_and_score(self, req: GenerationRequest) -> ScoreResponse:
        return response_from_wire(self._call("POST", "/generate_and_score",
                                             request_to_wire(req)))


# ---------------------------------------------------------------------------
# Minimal HTTP server exposing a backend object over the wire protocol.

class _BackendHandler(BaseHTTPRequestHandler):
    backend: MockBackend  # set on the subclass by serve()

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length", "0"))
        return json.loads(self.rfile.read(length).decode("utf-8"))

    def do_GET(self):
        if self.path == "/health":
            self._send(200, self.backend.health())
        else:
            self._send(404, {"error": f"unknown path {self.path}"})

    def do_POST(self):
        try:
            body = self._read_body()
            if self.path == "/encode":
                vec = self.backend.encode_prompt(str(body.get("prompt", "")))
                self._send(200, {"embedding": vec.tolist(), "shape": list(vec.shape)})
            elif self.path == "/generate_and_score":
                resp = self.backend.generate_and_score(request_from_wire(body))
                self._send(200, response_to_wire(resp))
            else:
                self._send(404, {"error": f"unknown path {self.path}"})
        except (ValidationError, ProtocolError) as exc:
            self._send(400, {"error": str(exc)})
        except Exception as exc:  # structured error body, never a stack trace
            self._send(500, {"error": f"internal error: {exc}"})

    def log_message(self, fmt, *args):  # quiet by default
        pass


class BackendServer:
    """Owns a ThreadingHTTPServer wrapping a backend object."""

    def __init__(self, backend: MockBackend, host: str = "127.0.0.1", port: int = 0):
        handler = type("Handler", (_BackendHandler,), {"backend": backend})
        self._httpd = ThreadingHTTPServer((host, port), handler)
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start_background(self) -> "BackendServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def shutdown(self) -> None:
        self._httpd.shutdown()
        if self._thread is not None:
            self._thread.join(timeout=5)


def resolve_backend(spec: str, mock_shape: tuple[int, ...] = (4, 64)):
    """'mock' -> in-process MockBackend; anything else is treated as a URL."""
    if spec == "mock":
        return MockBackend(shape=mock_shape)
    return HttpBackendClient(spec)
