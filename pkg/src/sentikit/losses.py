"""Training losses with analytic gradients.

The contrastive loss is the symmetric batch loss over the pairwise cosine
similarity matrix S, S[i][j] = cos(image_i, text_j): the image term is a
row-softmax cross entropy against the diagonal, the text term the same
column-wise, and the loss is their average. Gradients flow to the image
projections only; text embeddings come from a frozen encoder and are
treated as constants. There is no temperature by default (``exp`` applies
to raw cosines); a fixed divisor is exposed for experimentation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .numcore import as_float64, log_sum_exp, softmax

__all__ = ["TrainBatch", "cross_entropy_loss", "contrastive_loss"]


@dataclass(eq=False)
class TrainBatch:
    """N image-text pairs: row i of the text matrix is the caption paired
    with image row i. Labels are optional (classification path only)."""

    image_projections: np.ndarray  # (N, d)
    text_embeddings: np.ndarray    # (N, d)
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.image_projections = as_float64(self.image_projections, "image projections")
        self.text_embeddings = as_float64(self.text_embeddings, "text embeddings")
        if self.image_projections.ndim != 2 or self.text_embeddings.ndim != 2:
            raise DataError("batch matrices must be 2-D")
        if self.image_projections.shape != self.text_embeddings.shape:
            raise DataError(
                f"image/text shape mismatch: {self.image_projections.shape} "
                f"vs {self.text_embeddings.shape}"
            )
        if self.image_projections.shape[0] < 1:
            raise DataError("batch must contain at least one pair")


def cross_entropy_loss(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean negative log softmax probability of the true class.

    Returns (loss, gradient w.r.t. logits); the gradient is
    (softmax - one_hot) / N.
    """
    z = as_float64(logits, "logits")
    if z.ndim != 2:
        raise DataError(f"logits must be 2-D, got shape {z.shape}")
    y = np.asarray(labels, dtype=np.int64)
    if y.ndim != 1 or y.shape[0] != z.shape[0]:
        raise DataError("labels must be a 1-D array matching the batch size")
    n, k = z.shape
    if np.any(y < 0) or np.any(y >= k):
        raise DataError(f"label out of range for {k} classes")

    lse = log_sum_exp(z, axis=1)
    loss = float(np.mean(lse - z[np.arange(n), y]))
    grad = softmax(z, axis=1)
    grad[np.arange(n), y] -= 1.0
    grad /= n
    return loss, grad


def contrastive_loss(
    batch: TrainBatch, temperature: float = 1.0
) -> tuple[float, np.ndarray]:
    """Symmetric contrastive loss and its gradient w.r.t. the image
    projections.

    The gradient includes contributions from both the image and the text
    terms, since the column-softmax denominators also contain the image
    projections.
    """
    if temperature <= 0:
        raise DataError("temperature must be positive")
    x = batch.image_projections
    t = batch.text_embeddings
    n = x.shape[0]

    x_norms = np.linalg.norm(x, axis=1)
    t_norms = np.linalg.norm(t, axis=1)
    if np.any(x_norms == 0.0) or np.any(t_norms == 0.0):
        raise DataError("zero-norm row in contrastive batch")
    xh = x / x_norms[:, None]
    th = t / t_norms[:, None]

    sim = xh @ th.T
    z = sim / temperature
    diag = np.diagonal(z)
    loss_img = float(np.mean(log_sum_exp(z, axis=1) - diag))
    loss_text = float(np.mean(log_sum_exp(z, axis=0) - diag))
    loss = (loss_img + loss_text) / 2.0

    # d(loss)/dz = (row_softmax + col_softmax - 2 I) / (2 N)
    grad_z = (softmax(z, axis=1) + softmax(z, axis=0) - 2.0 * np.eye(n)) / (2.0 * n)
    grad_sim = grad_z / temperature
    # Chain through the cosine: dS[i,j]/dx_i = (th_j - S[i,j] xh_i) / |x_i|
    grad_x = (grad_sim @ th - np.sum(grad_sim * sim, axis=1, keepdims=True) * xh)
    grad_x /= x_norms[:, None]
    return loss, grad_x
