"""Real generate-and-score pipeline: distilled SDXL generator, CLIP alignment
scorer, and an aesthetic regression head over CLIP image embeddings.

Models load lazily on first use; a load failure flips the service health to
"degraded" instead of crashing the process. This path needs accelerator-scale
dependencies (torch, diffusers, transformers) and is exercised by live smoke
tests, not CI.
"""
from __future__ import annotations

import threading

import numpy as np

from .config import ServiceConfig

# SDXL text conditioning: per-token sequence plus a pooled summary vector.
SEQUENCE_SHAPE = (77, 2048)
POOLED_DIM = 1280
FLAT_DIM = SEQUENCE_SHAPE[0] * SEQUENCE_SHAPE[1] + POOLED_DIM


class RealModel:
    """One request at a time: generation holds the accelerator."""

    backend_name = "real"

    def __init__(self, config: ServiceConfig):
        self.config = config
        # Convention: flat vector = sequence embedding (row-major) followed by
        # the pooled embedding.
        self.embedding_shape = (FLAT_DIM,)
        self.dim = FLAT_DIM
        self._lock = threading.Lock()
        self._loaded = False
        self._load_error: str | None = None
        self._pipe = None
        self._clip = None
        self._clip_processor = None
        self._aesthetic_head = None
        self._torch = None

    def _ensure_loaded(self) -> bool:
        if self._loaded:
            return True
        if self._load_error is not None:
            return False
        try:
            import torch
            from diffusers import AutoPipelineForText2Image
            from transformers import CLIPModel, CLIPProcessor

            self._torch = torch
            self._pipe = AutoPipelineForText2Image.from_pretrained(
                self.config.generator_id,
                torch_dtype=torch.float16 if self.config.device == "cuda" else torch.float32,
            ).to(self.config.device)
            self._clip = CLIPModel.from_pretrained(self.config.clip_id).to(self.config.device)
            self._clip_processor = CLIPProcessor.from_pretrained(self.config.clip_id)
            self._aesthetic_head = self._load_aesthetic_head()
            self._loaded = True
            return True
        except Exception as exc:  # missing deps, no GPU, download failure
            self._load_error = f"{type(exc).__name__}: {exc}"
            return False

    def _load_aesthetic_head(self):
        # Linear head over the CLIP image embedding, weights fetched from the
        # predictor checkpoint release.
        import torch

        head = torch.nn.Linear(768, 1)
        state = torch.hub.load_state_dict_from_url(
            "https://github.com/LAION-AI/aesthetic-predictor/raw/main/"
            "sa_0_4_vit_l_14_linear.pth", map_location=self.config.device)
        head.load_state_dict(state)
        return head.to(self.config.device).eval()

    def status(self) -> str:
        return "ok" if self._ensure_loaded() else "degraded"

    @property
    def load_error(self) -> str | None:
        return self._load_error

    def encode(self, prompt: str) -> tuple[list[float], list[int]]:
        if not self._ensure_loaded():
            raise RuntimeError(f"real backend unavailable: {self._load_error}")
        torch = self._torch
        with torch.no_grad():
            seq, _, pooled, _ = self._pipe.encode_prompt(
                prompt=prompt, device=self.config.device,
                num_images_per_prompt=1, do_classifier_free_guidance=False)
        flat = np.concatenate([
            seq[0].float().cpu().numpy().ravel(),
            pooled[0].float().cpu().numpy().ravel(),
        ])
        return flat.tolist(), list(self.embedding_shape)

    def generate_and_score(self, prompt: str, embedding: np.ndarray, seed: int,
                           steps: int, guidance: float, width: int, height: int,
                           return_image: bool) -> dict:
        if not self._ensure_loaded():
            raise RuntimeError(f"real backend unavailable: {self._load_error}")
        if embedding.size != FLAT_DIM:
            raise ValueError(f"expected flat embedding of length {FLAT_DIM}, "
                             f"got {embedding.size}")
        torch = self._torch
        with self._lock, torch.no_grad():
            flat = torch.as_tensor(embedding, dtype=self._pipe.dtype,
                                   device=self.config.device)
            seq = flat[: SEQUENCE_SHAPE[0] * SEQUENCE_SHAPE[1]].reshape(
                1, *SEQUENCE_SHAPE)
            pooled = flat[SEQUENCE_SHAPE[0] * SEQUENCE_SHAPE[1]:].reshape(1, POOLED_DIM)
            image = self._pipe(
                prompt_embeds=seq, pooled_prompt_embeds=pooled,
                num_inference_steps=steps, guidance_scale=guidance,
                width=width, height=height,
                generator=torch.Generator(self.config.device).manual_seed(seed),
            ).images[0]

            inputs = self._clip_processor(text=[prompt], images=image,
                                          return_tensors="pt", padding=True,
                                          truncation=True).to(self.config.device)
            out = self._clip(**inputs)
            img_emb = out.image_embeds / out.image_embeds.norm(dim=-1, keepdim=True)
            txt_emb = out.text_embeds / out.text_embeds.norm(dim=-1, keepdim=True)
            clip_score = float((img_emb * txt_emb).sum())
            aesthetic = float(self._aesthetic_head(img_emb).squeeze())

        image_b64 = None
        if return_image:
            import base64
            import io

            buf = io.BytesIO()
            image.save(buf, format="PNG")
            image_b64 = base64.b64encode(buf.getvalue()).decode("ascii")
        import hashlib

        digest = hashlib.sha256(
            f"{prompt}|{seed}|{steps}|{guidance}|{width}x{height}".encode()).hexdigest()
        return {
            "aesthetic": aesthetic,
            "clip": clip_score,
            "image_id": digest[:16],
            "image_png_b64": image_b64,
        }
