"""Cross-implementation conformance: the service's mock mode must reproduce
the optimization engine's in-process mock, exercised purely over the engine's
public surfaces (its CLI mock server and wire protocol).

200-request corpus: 40 encodes + 160 generate-and-score calls across varied
prompts, dimensions, and image flags. Scores must agree within 1e-6.
"""
import socket
import subprocess
import sys
import time

import jsonschema
import numpy as np
import pytest
import requests
from fastapi.testclient import TestClient

from scoring_service.app import create_app
from scoring_service.config import ServiceConfig
from scoring_service.schemas import (ENCODE_RESPONSE_SCHEMA,
                                     SCORE_RESPONSE_SCHEMA)

PROMPTS = [
    "a cat",
    "happiness",
    "metal",
    "a house with no windows",
    "Portrait of a gecko wearing a train conductor’s hat and holding a flag "
    "that has a yin-yang symbol on it. Oil on canvas.",
    "two chemtrails forming an X in blue sky",
    "αβγ un prompt accentué — öäü",
    "a walnut",
]


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture(scope="module")
def engine_mock_url():
    """The engine's own mock served through its CLI."""
    port = free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "embedopt.cli", "serve",
         "--port", str(port), "--mock-shape", "4x8"],
        stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
    url = f"http://127.0.0.1:{port}"
    try:
        for _ in range(100):
            try:
                if requests.get(f"{url}/health", timeout=1).ok:
                    break
            except requests.ConnectionError:
                time.sleep(0.1)
        else:
            pytest.fail("engine mock server did not come up")
        yield url
    finally:
        proc.terminate()
        proc.wait(timeout=10)


@pytest.fixture(scope="module")
def service():
    return TestClient(create_app(ServiceConfig(mode="mock", embedding_shape=(4, 8))))


def generate_body(prompt, embedding, width=64, height=64, return_image=False):
    return {
        "prompt": prompt,
        "embedding": list(embedding),
        "shape": [len(embedding)],
        "seed": 0,
        "steps": 1,
        "guidance": 0.0,
        "width": width,
        "height": height,
        "return_image": return_image,
    }


def test_health_shapes_agree(engine_mock_url, service):
    engine = requests.get(f"{engine_mock_url}/health", timeout=5).json()
    svc = service.get("/health").json()
    assert engine["embedding_shape"] == svc["embedding_shape"]
    assert engine["backend"] == svc["backend"] == "mock"


def test_conformance_corpus(engine_mock_url, service):
    rng = np.random.default_rng(2024)
    requests_sent = 0

    # 40 encode requests across prompts and repeats
    for i in range(40):
        prompt = PROMPTS[i % len(PROMPTS)] + ("" if i < len(PROMPTS) else f" #{i}")
        engine = requests.post(f"{engine_mock_url}/encode",
                               json={"prompt": prompt}, timeout=5).json()
        svc = service.post("/encode", json={"prompt": prompt}).json()
        jsonschema.validate(svc, ENCODE_RESPONSE_SCHEMA)
        assert svc["shape"] == engine["shape"]
        np.testing.assert_allclose(svc["embedding"], engine["embedding"], atol=1e-6)
        requests_sent += 1

    # 160 generate-and-score requests with varied dims and payloads
    for i in range(160):
        prompt = PROMPTS[i % len(PROMPTS)]
        dim = [8, 32, 64][i % 3]
        embedding = (rng.normal(size=dim) * rng.uniform(0.1, 3.0)).tolist()
        body = generate_body(prompt, embedding,
                             width=32 if i % 5 else 48,
                             height=32 if i % 7 else 40,
                             return_image=(i % 10 == 0))
        engine = requests.post(f"{engine_mock_url}/generate_and_score",
                               json=body, timeout=5).json()
        svc = service.post("/generate_and_score", json=body).json()
        jsonschema.validate(svc, SCORE_RESPONSE_SCHEMA)
        assert abs(svc["aesthetic"] - engine["aesthetic"]) <= 1e-6
        assert abs(svc["clip"] - engine["clip"]) <= 1e-6
        assert svc["image_id"] == engine["image_id"]
        if body["return_image"]:
            assert svc["image_png_b64"] == engine["image_png_b64"]
        requests_sent += 1

    assert requests_sent == 200
