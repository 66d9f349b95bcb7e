"""Short descriptive captions for manifest ``ic`` fields.

The default backend derives a caption deterministically from coarse image
statistics (brightness, dominant hue, aspect); it keeps the caption
pipeline runnable offline. A generative backend can be plugged in through
the same ``caption(image)`` interface when a pretrained captioning model
is available.
"""

from __future__ import annotations

import colorsys

import numpy as np
from PIL import Image

DEFAULT_PREFIX = "a photo that contains"

_HUES = (
    (15, "red"), (45, "orange"), (70, "yellow"), (160, "green"),
    (200, "cyan"), (260, "blue"), (320, "purple"), (361, "red"),
)


class BasicCaptioner:
    """Deterministic image-statistics captioner."""

    def __init__(self, prefix: str = DEFAULT_PREFIX):
        self.prefix = prefix.strip()

    def caption(self, image: Image.Image) -> str:
        rgb = np.asarray(image.convert("RGB").resize((32, 32)), dtype=np.float64) / 255.0
        mean = rgb.reshape(-1, 3).mean(axis=0)
        h, _, v = colorsys.rgb_to_hsv(*mean)
        brightness = "dark" if v < 0.35 else ("bright" if v > 0.7 else "muted")
        hue = next(name for limit, name in _HUES if h * 360.0 < limit)
        w, ht = image.size
        shape = "wide" if w > 1.2 * ht else ("tall" if ht > 1.2 * w else "square")
        return f"{self.prefix} a {brightness} {hue} {shape} scene"


def make_captioner(spec: str, prefix: str = DEFAULT_PREFIX):
    if spec == "basic":
        return BasicCaptioner(prefix=prefix)
    raise ValueError(f"unknown captioner {spec!r} (expected 'basic')")
