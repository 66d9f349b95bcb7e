"""Embedding backends.

``hash`` is a fully offline, deterministic feature encoder (fixed random
projections seeded from content digests): it produces stable unit-norm
vectors on any machine with no model downloads, which makes it the default
for tests and plumbing validation. ``clip:<model>`` loads a pretrained
frozen vision-language checkpoint through sentence-transformers and is the
backend to use for real extractions (requires the weights to be cached or
downloadable).
"""

from __future__ import annotations

import hashlib
import re

import numpy as np
from PIL import Image

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def _seeded_rng(tag: str) -> np.random.Generator:
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def _unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("zero-norm embedding row")
    return m / norms


class HashEncoder:
    """Deterministic offline encoder: text via token-digest vectors, images
    via a fixed projection of downsampled pixels."""

    name = "hash"
    _THUMB = 16

    def __init__(self, dim: int = 512):
        if dim < 8:
            raise ValueError("hash encoder needs dim >= 8")
        self.dim = dim
        n_pixels = self._THUMB * self._THUMB * 3
        self._pixel_proj = _seeded_rng(f"embex/pixel-proj/v1/{dim}").standard_normal(
            (n_pixels, dim)
        ) / np.sqrt(n_pixels)

    def _token_vector(self, token: str) -> np.ndarray:
        return _seeded_rng(f"embex/token/v1/{self.dim}/{token}").standard_normal(self.dim)

    def encode_texts(self, texts: list[str], batch_size: int = 32) -> np.ndarray:
        rows = []
        for text in texts:
            tokens = _TOKEN_RE.findall(text.lower())
            if not tokens:
                raise ValueError(f"cannot embed empty prompt {text!r}")
            acc = np.zeros(self.dim)
            for tok in tokens:
                acc += self._token_vector(tok)
            rows.append(acc / len(tokens))
        return _unit_rows(np.stack(rows)).astype(np.float32)

    def encode_images(self, images: list[Image.Image], batch_size: int = 32) -> np.ndarray:
        rows = []
        for img in images:
            thumb = img.convert("RGB").resize(
                (self._THUMB, self._THUMB), Image.Resampling.BILINEAR
            )
            pixels = np.asarray(thumb, dtype=np.float64).ravel() / 255.0
            rows.append((pixels - pixels.mean()) @ self._pixel_proj)
        return _unit_rows(np.stack(rows)).astype(np.float32)


class ClipEncoder:
    """Pretrained frozen vision-language encoder via sentence-transformers."""

    def __init__(self, model_name: str = "clip-ViT-B-32", device: str = "cpu"):
        from sentence_transformers import SentenceTransformer

        self.name = f"clip:{model_name}"
        self._model = SentenceTransformer(model_name, device=device)
        self._model.eval()
        self.dim = int(self._model.get_sentence_embedding_dimension() or 512)

    def encode_texts(self, texts: list[str], batch_size: int = 32) -> np.ndarray:
        for text in texts:
            if not text.strip():
                raise ValueError("cannot embed an empty prompt")
        out = self._model.encode(
            texts, batch_size=batch_size, convert_to_numpy=True, show_progress_bar=False
        )
        return _unit_rows(np.asarray(out, dtype=np.float64)).astype(np.float32)

    def encode_images(self, images: list[Image.Image], batch_size: int = 32) -> np.ndarray:
        out = self._model.encode(
            images, batch_size=batch_size, convert_to_numpy=True, show_progress_bar=False
        )
        return _unit_rows(np.asarray(out, dtype=np.float64)).astype(np.float32)


def make_encoder(spec: str, dim: int = 512, device: str = "cpu"):
    """``hash`` or ``clip:<model-name>``."""
    if spec == "hash":
        return HashEncoder(dim=dim)
    if spec.startswith("clip:"):
        return ClipEncoder(model_name=spec.split(":", 1)[1] or "clip-ViT-B-32", device=device)
    raise ValueError(f"unknown encoder {spec!r} (expected 'hash' or 'clip:<model>')")
