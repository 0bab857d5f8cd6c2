"""FastAPI application exposing /health, /encode, /generate_and_score."""
from __future__ import annotations

import argparse
import math

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .config import ServiceConfig
from .mockmodel import MockModel
from .realmodel import RealModel


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    model = (MockModel(config.embedding_shape) if config.mode == "mock"
             else RealModel(config))
    app = FastAPI(title="scoring-service", docs_url=None, redoc_url=None)
    app.state.model = model
    app.state.config = config

    @app.get("/health")
    def health():
        return {
            "status": model.status(),
            "backend": model.backend_name,
            "embedding_shape": list(model.embedding_shape),
        }

    @app.post("/encode")
    async def encode(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "body must be JSON")
        prompt = body.get("prompt")
        if not isinstance(prompt, str) or not prompt:
            return _error(400, "prompt must be a non-empty string")
        try:
            embedding, shape = model.encode(prompt)
        except Exception as exc:
            return _error(503, f"encode failed: {exc}")
        return {"embedding": embedding, "shape": shape}

    @app.post("/generate_and_score")
    async def generate_and_score(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "body must be JSON")
        try:
            prompt = str(body["prompt"])
            embedding = np.asarray(body["embedding"], dtype=np.float64).ravel()
            shape = [int(s) for s in body["shape"]]
            seed = int(body.get("seed", 0))
            steps = int(body.get("steps", 1))
            guidance = float(body.get("guidance", 0.0))
            width = int(body.get("width", 512))
            height = int(body.get("height", 512))
            return_image = bool(body.get("return_image", False))
        except (KeyError, TypeError, ValueError) as exc:
            return _error(400, f"malformed request: {exc}")
        if embedding.size < 1 or not np.all(np.isfinite(embedding)):
            return _error(400, "embedding must be non-empty and finite")
        if math.prod(shape) != embedding.size:
            return _error(400, f"shape product {math.prod(shape)} != "
                               f"embedding length {embedding.size}")
        if steps < 1 or guidance < 0 or width < 1 or height < 1:
            return _error(400, "steps >= 1, guidance >= 0, positive dimensions")
        try:
            return model.generate_and_score(prompt, embedding, seed, steps,
                                            guidance, width, height, return_image)
        except Exception as exc:
            return _error(503, f"generation failed: {exc}")

    return app


def parse_shape(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.lower().split("x"))


def main(argv=None) -> int:
    import uvicorn

    ap = argparse.ArgumentParser(description="generate-and-score HTTP service")
    ap.add_argument("--mode", choices=["mock", "real"], default="mock")
    ap.add_argument("--shape", default="4x64",
                    help="advertised embedding shape in mock mode, e.g. 4x64")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8100)
    ap.add_argument("--device", default="cuda")
    args = ap.parse_args(argv)
    config = ServiceConfig(mode=args.mode, embedding_shape=parse_shape(args.shape),
                           device=args.device)
    uvicorn.run(create_app(config), host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
