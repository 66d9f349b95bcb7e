import numpy as np
import pytest
from PIL import Image

from embex.encoders import HashEncoder, make_encoder


class TestHashText:
    def test_deterministic(self):
        a = HashEncoder(dim=64).encode_texts(["a photo that seems to express optimism"])
        b = HashEncoder(dim=64).encode_texts(["a photo that seems to express optimism"])
        np.testing.assert_array_equal(a, b)

    def test_unit_norm(self):
        out = HashEncoder(dim=64).encode_texts(["one", "two words", "three word prompt"])
        np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-3)

    def test_distinct_texts_distinct_vectors(self):
        enc = HashEncoder(dim=64)
        out = enc.encode_texts(["optimism", "suffering"])
        assert abs(float(out[0] @ out[1])) < 0.5

    def test_empty_prompt_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            HashEncoder(dim=64).encode_texts(["   "])


class TestHashImages:
    def _img(self, color, seed=0):
        rng = np.random.default_rng(seed)
        arr = np.clip(
            np.tile(np.array(color), (32, 48, 1)) + rng.normal(0, 10, (32, 48, 3)), 0, 255
        ).astype(np.uint8)
        return Image.fromarray(arr, mode="RGB")

    def test_deterministic(self):
        img = self._img((200, 40, 40))
        a = HashEncoder(dim=64).encode_images([img])
        b = HashEncoder(dim=64).encode_images([img])
        np.testing.assert_array_equal(a, b)

    def test_unit_norm(self):
        imgs = [self._img((200, 40, 40), 1), self._img((20, 40, 200), 2)]
        out = HashEncoder(dim=64).encode_images(imgs)
        np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-3)

    def test_same_image_twice_cosine_one(self):
        img = self._img((90, 160, 60))
        out = HashEncoder(dim=64).encode_images([img, img])
        cos = float(out[0] @ out[1] / (np.linalg.norm(out[0]) * np.linalg.norm(out[1])))
        assert cos == pytest.approx(1.0, abs=1e-5)

    def test_color_classes_separate(self):
        warm = [self._img((210, 180, 40), s) for s in range(3)]
        cold = [self._img((30, 40, 120), s + 10) for s in range(3)]
        enc = HashEncoder(dim=64)
        w = enc.encode_images(warm).astype(np.float64)
        c = enc.encode_images(cold).astype(np.float64)
        within = float(w[0] @ w[1])
        across = float(w[0] @ c[0])
        assert within > across + 0.2


def test_make_encoder_spec():
    assert make_encoder("hash", dim=32).dim == 32
    with pytest.raises(ValueError, match="unknown encoder"):
        make_encoder("bogus")
