"""Dense float64 kernels shared by every other module.

All functions operate on (and return) ``numpy`` arrays in float64, reject
non-finite inputs, and are pure: safe to call from any number of threads.
Embedding files store float32 but everything in memory is widened to
float64 so numeric tolerances stay out of the way of gradient checks.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_float64",
    "l2_norm",
    "l2_normalize",
    "l2_normalize_rows",
    "cosine_similarity",
    "cosine_matrix",
    "softmax",
    "log_sum_exp",
]


def as_float64(values, name: str = "values") -> np.ndarray:
    """Convert to a float64 array, rejecting non-finite entries."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def l2_norm(v) -> float:
    return float(np.linalg.norm(as_float64(v, "vector")))


def l2_normalize(v) -> np.ndarray:
    """Scale a vector to unit L2 norm. Zero vectors are an error, not a
    silent zero: unit norm is the upstream contract, so a zero vector
    signals corrupt data."""
    arr = as_float64(v, "vector")
    norm = np.linalg.norm(arr)
    if norm == 0.0:
        raise ValueError("cannot normalize a zero-norm vector")
    return arr / norm


def l2_normalize_rows(m) -> np.ndarray:
    """Row-wise unit normalization of a 2-D matrix."""
    arr = as_float64(m, "matrix")
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    norms = np.linalg.norm(arr, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise ValueError(f"row {bad} has zero norm")
    return arr / norms[:, None]


def cosine_similarity(a, b) -> float:
    """Cosine similarity a.b / (|a||b|) between two vectors.

    Raises on dimension mismatch and on zero-norm inputs; the result lies
    in [-1, 1] up to floating error (not clipped).
    """
    va = as_float64(a, "a")
    vb = as_float64(b, "b")
    if va.ndim != 1 or vb.ndim != 1:
        raise ValueError("cosine_similarity expects 1-D vectors")
    if va.shape[0] != vb.shape[0]:
        raise ValueError(f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}")
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity is undefined for zero-norm vectors")
    return float(np.dot(va, vb) / (na * nb))


def cosine_matrix(a, b) -> np.ndarray:
    """Pairwise cosine similarities between the rows of two matrices.

    Returns an (n, m) matrix for inputs of shape (n, d) and (m, d).
    """
    am = as_float64(a, "a")
    bm = as_float64(b, "b")
    if am.ndim != 2 or bm.ndim != 2:
        raise ValueError("cosine_matrix expects 2-D matrices")
    if am.shape[1] != bm.shape[1]:
        raise ValueError(f"dimension mismatch: {am.shape[1]} vs {bm.shape[1]}")
    return l2_normalize_rows(am) @ l2_normalize_rows(bm).T


def softmax(logits, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax via max-subtraction.

    Nonnegative, sums to 1 along ``axis``, and preserves the argmax of the
    input.
    """
    arr = as_float64(logits, "logits")
    if arr.size == 0:
        raise ValueError("softmax of an empty sequence is undefined")
    shifted = arr - np.max(arr, axis=axis, keepdims=True)
    exps = np.exp(shifted)
    return exps / np.sum(exps, axis=axis, keepdims=True)


def log_sum_exp(xs, axis: int | None = None):
    """log(sum(exp(xs))) computed with a max shift so large inputs do not
    overflow. Exact for a single element."""
    arr = as_float64(xs, "xs")
    if arr.size == 0:
        raise ValueError("log_sum_exp of an empty sequence is undefined")
    top = np.max(arr, axis=axis, keepdims=True)
    out = top + np.log(np.sum(np.exp(arr - top), axis=axis, keepdims=True))
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)
