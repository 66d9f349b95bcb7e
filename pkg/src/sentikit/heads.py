"""The two trainable head architectures over frozen image embeddings.

Both are two-layer perceptrons with a ReLU hidden layer: the
classification head ends in class logits, the projection head in a linear
layer (negative activations are meaningful in the embedding space, so no
final nonlinearity and no output normalization; normalization happens
inside cosine similarity).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError
from .numcore import as_float64

__all__ = [
    "CrossEntropyHead",
    "ContrastiveHead",
    "init_head",
    "forward_ce",
    "forward_proj",
    "backward",
    "head_params",
    "set_head_params",
    "parameter_count",
    "identity_projection_head",
    "save_model",
    "load_model",
]

DEFAULT_HIDDEN = 512


@dataclass(eq=False)
class _TwoLayerHead:
    w1: np.ndarray  # (in_dim, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, out)
    b2: np.ndarray  # (out,)
    taxonomy_fingerprint: str | None = None
    seed: int | None = None

    def __post_init__(self):
        self.w1 = as_float64(self.w1, "w1")
        self.b1 = as_float64(self.b1, "b1")
        self.w2 = as_float64(self.w2, "w2")
        self.b2 = as_float64(self.b2, "b2")
        if self.w1.ndim != 2 or self.w2.ndim != 2:
            raise DataError("weight matrices must be 2-D")
        if self.b1.shape != (self.w1.shape[1],) or self.b2.shape != (self.w2.shape[1],):
            raise DataError("bias shapes do not match weight shapes")
        if self.w1.shape[1] != self.w2.shape[0]:
            raise DataError(
                f"hidden size mismatch: w1 gives {self.w1.shape[1]}, w2 expects {self.w2.shape[0]}"
            )

    @property
    def in_dim(self) -> int:
        return int(self.w1.shape[0])

    @property
    def hidden(self) -> int:
        return int(self.w1.shape[1])

    @property
    def out_dim(self) -> int:
        return int(self.w2.shape[1])


class CrossEntropyHead(_TwoLayerHead):
    """ReLU hidden layer followed by a class-logit prediction layer."""

    kind = "ce"

    @property
    def n_classes(self) -> int:
        return self.out_dim


class ContrastiveHead(_TwoLayerHead):
    """ReLU hidden layer followed by a linear projection layer."""

    kind = "contrastive"


_KINDS = {"ce": CrossEntropyHead, "contrastive": ContrastiveHead}


def init_head(
    kind: str,
    in_dim: int,
    n_classes: int = 0,
    seed: int = 0,
    hidden: int = DEFAULT_HIDDEN,
    out_dim: int | None = None,
):
    """Seeded deterministic initialization: layer-1 weights Gaussian with
    variance 2/in_dim (ReLU-appropriate), layer-2 with variance 1/hidden,
    biases zero."""
    if kind not in _KINDS:
        raise DataError(f"unknown head kind {kind!r}")
    if in_dim < 1 or hidden < 1:
        raise DataError("in_dim and hidden must be at least 1")
    if kind == "ce":
        if n_classes < 1:
            raise DataError("a classification head needs n_classes >= 1")
        out = n_classes
    else:
        out = out_dim if out_dim is not None else hidden
        if out < 1:
            raise DataError("out_dim must be at least 1")

    rng = np.random.default_rng(seed)
    w1 = rng.normal(0.0, np.sqrt(2.0 / in_dim), size=(in_dim, hidden))
    w2 = rng.normal(0.0, np.sqrt(1.0 / hidden), size=(hidden, out))
    return _KINDS[kind](
        w1=w1, b1=np.zeros(hidden), w2=w2, b2=np.zeros(out), seed=seed
    )


def _forward(head: _TwoLayerHead, batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = as_float64(batch, "batch")
    if x.ndim != 2:
        raise DataError(f"batch must be 2-D, got shape {x.shape}")
    if x.shape[1] != head.in_dim:
        raise DataError(f"batch has {x.shape[1]} columns, head expects {head.in_dim}")
    hidden = np.maximum(x @ head.w1 + head.b1, 0.0)
    out = hidden @ head.w2 + head.b2
    return out, hidden


def forward_ce(head: CrossEntropyHead, batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Class logits for a batch; also returns the post-ReLU hidden
    activations needed by :func:`backward`."""
    if not isinstance(head, CrossEntropyHead):
        raise DataError(f"expected a 'ce' head, got {type(head).__name__}")
    return _forward(head, batch)


def forward_proj(head: ContrastiveHead, batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Projections for a batch (may be negative); also returns the
    post-ReLU hidden activations."""
    if not isinstance(head, ContrastiveHead):
        raise DataError(f"expected a 'contrastive' head, got {type(head).__name__}")
    return _forward(head, batch)


def backward(
    head: _TwoLayerHead,
    batch: np.ndarray,
    hidden: np.ndarray,
    grad_out: np.ndarray,
) -> dict[str, np.ndarray]:
    """Parameter gradients given the gradient of the loss with respect to
    the head outputs. ``hidden`` must be the post-ReLU activations from
    the matching forward pass."""
    x = as_float64(batch, "batch")
    g = as_float64(grad_out, "grad_out")
    grad_w2 = hidden.T @ g
    grad_b2 = g.sum(axis=0)
    grad_hidden = (g @ head.w2.T) * (hidden > 0.0)
    grad_w1 = x.T @ grad_hidden
    grad_b1 = grad_hidden.sum(axis=0)
    return {"w1": grad_w1, "b1": grad_b1, "w2": grad_w2, "b2": grad_b2}


def head_params(head: _TwoLayerHead) -> dict[str, np.ndarray]:
    return {"w1": head.w1, "b1": head.b1, "w2": head.w2, "b2": head.b2}


def set_head_params(head: _TwoLayerHead, params: dict[str, np.ndarray]) -> None:
    head.w1 = params["w1"]
    head.b1 = params["b1"]
    head.w2 = params["w2"]
    head.b2 = params["b2"]


def parameter_count(head: _TwoLayerHead) -> int:
    return sum(p.size for p in head_params(head).values())


def identity_projection_head(dim: int) -> ContrastiveHead:
    """A projection head that reproduces its input exactly.

    Stacks [I, -I] so positive and negative parts survive the ReLU
    separately and recombine in the linear layer: relu(x) - relu(-x) == x,
    bit for bit.
    """
    eye = np.eye(dim)
    return ContrastiveHead(
        w1=np.concatenate([eye, -eye], axis=1),
        b1=np.zeros(2 * dim),
        w2=np.concatenate([eye, -eye], axis=0),
        b2=np.zeros(dim),
    )


_PARAM_ORDER = ("w1", "b1", "w2", "b2")


def save_model(head: _TwoLayerHead, path) -> None:
    """JSON header line (kind, dims, fingerprint, seed) followed by the raw
    float32 little-endian parameter blob in declared order."""
    header = {
        "kind": head.kind,
        "in_dim": head.in_dim,
        "hidden": head.hidden,
        "out_dim": head.out_dim,
        "taxonomy_fingerprint": head.taxonomy_fingerprint,
        "seed": head.seed,
    }
    if head.kind == "ce":
        header["n_classes"] = head.out_dim
    params = head_params(head)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for name in _PARAM_ORDER:
            fh.write(np.ascontiguousarray(params[name], dtype="<f4").tobytes())


def load_model(path, expected_kind: str | None = None):
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise FormatError(f"{path}: missing model header line")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt model header: {exc}") from exc

    kind = header.get("kind")
    if kind not in _KINDS:
        raise FormatError(f"{path}: unknown head kind {kind!r}")
    if expected_kind is not None and kind != expected_kind:
        raise FormatError(f"{path}: model kind is {kind!r}, expected {expected_kind!r}")
    try:
        in_dim, hidden, out = int(header["in_dim"]), int(header["hidden"]), int(header["out_dim"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: incomplete model header") from exc

    shapes = {
        "w1": (in_dim, hidden),
        "b1": (hidden,),
        "w2": (hidden, out),
        "b2": (out,),
    }
    blob = raw[nl + 1:]
    expected_bytes = sum(int(np.prod(s)) for s in shapes.values()) * 4
    if len(blob) != expected_bytes:
        raise FormatError(
            f"{path}: parameter blob is {len(blob)} bytes, header declares {expected_bytes}"
        )
    params = {}
    offset = 0
    for name in _PARAM_ORDER:
        shape = shapes[name]
        n = int(np.prod(shape)) * 4
        params[name] = np.frombuffer(blob[offset:offset + n], dtype="<f4").reshape(shape).astype(
            np.float64
        )
        offset += n
    head = _KINDS[kind](
        **params,
        taxonomy_fingerprint=header.get("taxonomy_fingerprint"),
        seed=header.get("seed"),
    )
    return head
