import math

import numpy as np
import pytest

from sentikit.errors import DataError
from sentikit.losses import TrainBatch, contrastive_loss, cross_entropy_loss


def brute_force_contrastive(images, texts):
    """Independent double-loop oracle: explicit cosines, explicit exp sums,
    no shared code with the implementation."""
    n = len(images)

    def cos(a, b):
        dot = sum(float(x) * float(y) for x, y in zip(a, b))
        na = math.sqrt(sum(float(x) * float(x) for x in a))
        nb = math.sqrt(sum(float(y) * float(y) for y in b))
        return dot / (na * nb)

    s = [[cos(images[i], texts[j]) for j in range(n)] for i in range(n)]
    l_img = 0.0
    for i in range(n):
        denom = sum(math.exp(s[i][j]) for j in range(n))
        l_img += -math.log(math.exp(s[i][i]) / denom)
    l_text = 0.0
    for i in range(n):
        denom = sum(math.exp(s[j][i]) for j in range(n))
        l_text += -math.log(math.exp(s[i][i]) / denom)
    return (l_img / n + l_text / n) / 2.0


class TestCrossEntropy:
    def test_uniform_two_classes(self):
        loss, _ = cross_entropy_loss(np.zeros((1, 2)), np.array([0]))
        assert loss == pytest.approx(math.log(2.0), abs=1e-12)

    def test_uniform_k_classes(self):
        for k in (3, 7, 25):
            loss, _ = cross_entropy_loss(np.zeros((4, k)), np.zeros(4, dtype=int))
            assert loss == pytest.approx(math.log(k), abs=1e-12)

    def test_gradient_finite_differences(self):
        rng = np.random.default_rng(17)
        logits = rng.normal(size=(4, 3))
        labels = rng.integers(0, 3, size=4)
        _, grad = cross_entropy_loss(logits, labels)
        h = 1e-6
        for i in range(4):
            for j in range(3):
                up = logits.copy()
                up[i, j] += h
                down = logits.copy()
                down[i, j] -= h
                num = (cross_entropy_loss(up, labels)[0] - cross_entropy_loss(down, labels)[0]) / (2 * h)
                assert grad[i, j] == pytest.approx(num, rel=1e-5, abs=1e-9)

    def test_grad_row_sums_zero(self):
        rng = np.random.default_rng(18)
        _, grad = cross_entropy_loss(rng.normal(size=(6, 5)), rng.integers(0, 5, size=6))
        np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-15)

    def test_label_out_of_range(self):
        with pytest.raises(DataError, match="range"):
            cross_entropy_loss(np.zeros((2, 3)), np.array([0, 3]))

    def test_perfect_prediction_low_loss(self):
        logits = np.array([[100.0, 0.0, 0.0]])
        loss, _ = cross_entropy_loss(logits, np.array([0]))
        assert loss < 1e-40


class TestContrastiveClosedForms:
    def test_single_pair_exactly_zero(self):
        rng = np.random.default_rng(0)
        batch = TrainBatch(rng.normal(size=(1, 5)), rng.normal(size=(1, 5)))
        loss, grad = contrastive_loss(batch)
        assert loss == 0.0
        np.testing.assert_allclose(grad, 0.0, atol=1e-15)

    def test_two_identical_pairs_ln2(self):
        same = np.tile(np.array([[0.3, -0.7, 1.1]]), (2, 1))
        loss, _ = contrastive_loss(TrainBatch(same.copy(), same.copy()))
        assert loss == pytest.approx(math.log(2.0), abs=1e-12)

    def test_zero_norm_row_rejected(self):
        with pytest.raises(DataError, match="zero-norm"):
            contrastive_loss(TrainBatch(np.zeros((2, 3)), np.ones((2, 3))))


class TestContrastiveOracle:
    def test_matches_brute_force_100_batches(self):
        rng = np.random.default_rng(99)
        for _ in range(100):
            n = int(rng.integers(1, 17))
            d = int(rng.integers(2, 33))
            images = rng.normal(size=(n, d))
            texts = rng.normal(size=(n, d))
            loss, _ = contrastive_loss(TrainBatch(images, texts))
            assert loss == pytest.approx(brute_force_contrastive(images, texts), abs=1e-10)

    def test_gradient_finite_differences(self):
        rng = np.random.default_rng(4)
        images = rng.normal(size=(4, 8))
        texts = rng.normal(size=(4, 8))
        _, grad = contrastive_loss(TrainBatch(images.copy(), texts))
        h = 1e-6
        for i in range(4):
            for j in range(8):
                up = images.copy()
                up[i, j] += h
                down = images.copy()
                down[i, j] -= h
                num = (
                    contrastive_loss(TrainBatch(up, texts))[0]
                    - contrastive_loss(TrainBatch(down, texts))[0]
                ) / (2 * h)
                assert grad[i, j] == pytest.approx(num, rel=1e-5, abs=1e-9)

    def test_temperature_gradient(self):
        rng = np.random.default_rng(5)
        images = rng.normal(size=(3, 6))
        texts = rng.normal(size=(3, 6))
        _, grad = contrastive_loss(TrainBatch(images.copy(), texts), temperature=0.25)
        h = 1e-6
        up = images.copy()
        up[1, 2] += h
        down = images.copy()
        down[1, 2] -= h
        num = (
            contrastive_loss(TrainBatch(up, texts), temperature=0.25)[0]
            - contrastive_loss(TrainBatch(down, texts), temperature=0.25)[0]
        ) / (2 * h)
        assert grad[1, 2] == pytest.approx(num, rel=1e-5)


class TestContrastiveProperties:
    def test_image_text_swap_symmetry(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            n = int(rng.integers(2, 9))
            images = rng.normal(size=(n, 6))
            texts = rng.normal(size=(n, 6))
            a, _ = contrastive_loss(TrainBatch(images, texts))
            b, _ = contrastive_loss(TrainBatch(texts, images))
            assert a == pytest.approx(b, abs=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(22)
        images = rng.normal(size=(6, 5))
        texts = rng.normal(size=(6, 5))
        perm = rng.permutation(6)
        a, _ = contrastive_loss(TrainBatch(images, texts))
        b, _ = contrastive_loss(TrainBatch(images[perm], texts[perm]))
        assert a == pytest.approx(b, abs=1e-12)

    def test_nonnegative(self):
        rng = np.random.default_rng(23)
        for _ in range(50):
            n = int(rng.integers(1, 10))
            loss, _ = contrastive_loss(
                TrainBatch(rng.normal(size=(n, 4)), rng.normal(size=(n, 4)))
            )
            assert loss >= 0.0

    def test_row_scale_invariance(self):
        rng = np.random.default_rng(24)
        images = rng.normal(size=(5, 7))
        texts = rng.normal(size=(5, 7))
        base, _ = contrastive_loss(TrainBatch(images.copy(), texts))
        scaled = images.copy()
        scaled[2] *= 37.5
        after, _ = contrastive_loss(TrainBatch(scaled, texts))
        assert after == pytest.approx(base, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DataError, match="mismatch"):
            TrainBatch(np.ones((2, 3)), np.ones((2, 4)))

    def test_bad_temperature(self):
        with pytest.raises(DataError, match="temperature"):
            contrastive_loss(TrainBatch(np.ones((1, 2)), np.ones((1, 2))), temperature=0.0)
