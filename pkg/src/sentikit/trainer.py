"""Training loops for both heads: deterministic batching with caption
sampling, Adam, plateau LR scheduling, early stopping, and best-epoch
snapshotting.

Everything is driven by (seed, config, data): identical inputs produce
identical epoch logs and final parameters.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dataio import CaptionStore, EmbeddingDataset
from .errors import DataError, NumericError
from .heads import backward, forward_ce, forward_proj, head_params, init_head, set_head_params
from .losses import TrainBatch, contrastive_loss, cross_entropy_loss
from .numcore import l2_normalize_rows
from .taxonomy import Taxonomy, resolve_prompt_class

__all__ = [
    "TrainConfig",
    "AdamState",
    "adam_step",
    "PlateauScheduler",
    "EpochLog",
    "MiniBatch",
    "make_batches",
    "train",
    "write_epoch_logs",
]

CAPTION_TYPES = ("sc", "ic", "ssc")
DEFAULT_BATCH = {"ce": 32, "contrastive": 8}


@dataclass
class TrainConfig:
    head: str = "ce"  # "ce" | "contrastive"
    epochs: int = 15
    lr: float = 1e-3
    batch_size: int | None = None  # defaults: 32 for ce, 8 for contrastive
    caption_types: tuple[str, ...] = ("sc",)
    patience: int = 2
    lr_factor: float = 0.1
    seed: int = 0
    early_stop: bool = True
    temperature: float = 1.0
    hidden: int = 512
    improvement_rtol: float = 1e-4
    expand_captions: bool = False  # pair every candidate caption instead of sampling one

    def __post_init__(self):
        if self.head not in DEFAULT_BATCH:
            raise DataError(f"unknown head kind {self.head!r}")
        if self.epochs < 0:
            raise DataError("epochs must be nonnegative")
        # lr == 0 is tolerated as a degenerate no-op configuration.
        if self.lr < 0:
            raise DataError("lr must be nonnegative")
        if not (0 < self.lr_factor < 1):
            raise DataError("lr_factor must lie strictly between 0 and 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise DataError("batch_size must be at least 1")
        if self.patience < 1:
            raise DataError("patience must be at least 1")
        if self.seed < 0:
            raise DataError("seed must be nonnegative")
        bad = set(self.caption_types) - set(CAPTION_TYPES)
        if bad:
            raise DataError(f"unknown caption types: {sorted(bad)}")
        if not self.caption_types:
            raise DataError("at least one caption type required")

    @property
    def resolved_batch_size(self) -> int:
        return self.batch_size if self.batch_size is not None else DEFAULT_BATCH[self.head]


@dataclass(eq=False)
class AdamState:
    """First/second moment accumulators with the fixed hyperparameters
    beta1=0.9, beta2=0.999, eps=1e-8."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> dict[str, np.ndarray]:
    """One bias-corrected Adam update. Mutates ``params`` and ``state`` in
    place and returns ``params``."""
    if set(params) != set(grads):
        raise DataError("parameter/gradient name mismatch")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise DataError(f"gradient shape mismatch for {name!r}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params


@dataclass
class PlateauScheduler:
    """Multiply the learning rate by ``factor`` after ``patience``
    consecutive epochs without relative improvement in validation loss."""

    lr: float
    patience: int = 2
    factor: float = 0.1
    improvement_rtol: float = 1e-4
    best: float = math.inf
    since_improvement: int = 0
    reductions: int = 0

    def improved(self, val_loss: float) -> bool:
        if not math.isfinite(self.best):
            return True
        return val_loss < self.best - self.improvement_rtol * abs(self.best)

    def step(self, val_loss: float) -> float:
        if not math.isfinite(val_loss):
            raise NumericError("non-finite validation loss")
        if self.improved(val_loss):
            self.best = val_loss
            self.since_improvement = 0
        else:
            self.since_improvement += 1
            if self.since_improvement >= self.patience:
                self.lr *= self.factor
                self.reductions += 1
                self.since_improvement = 0
        return self.lr


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    wall_time: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "epoch": self.epoch,
                "train_loss": self.train_loss,
                "val_loss": self.val_loss,
                "lr": self.lr,
                "wall_time": self.wall_time,
            }
        )


def write_epoch_logs(logs: list[EpochLog], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for log in logs:
            fh.write(log.to_json())
            fh.write("\n")


@dataclass(eq=False)
class MiniBatch:
    images: np.ndarray                 # (n, in_dim), already unit-normalized
    texts: np.ndarray | None = None    # (n, text_dim) caption embeddings
    labels: np.ndarray | None = None   # (n,) fine-class indices
    indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __len__(self) -> int:
        return int(self.images.shape[0])


def _caption_candidates(
    rec, caption_types: tuple[str, ...], store: CaptionStore
) -> list[str]:
    """Caption strings of the enabled types that have embeddings, in the
    stable order sc, ic, ssc."""
    out: list[str] = []
    caps = rec.captions
    if caps is None:
        return out
    if "sc" in caption_types and caps.sc is not None and caps.sc in store:
        out.append(caps.sc)
    if "ic" in caption_types and caps.ic is not None and caps.ic in store:
        out.append(caps.ic)
    if "ssc" in caption_types:
        out.extend(s for s in caps.ssc if s in store)
    return out


def _pack_diverse(
    items: list[tuple[int, str, str]], batch_size: int, n_rows: int
) -> list[list[tuple[int, str]]]:
    """Greedy packing that avoids same-key duplicates inside a batch when
    possible, falling back to duplicates when it is not."""
    n_batches = max(1, math.ceil(n_rows / batch_size))
    batches: list[list[tuple[int, str]]] = [[] for _ in range(n_batches)]
    keys: list[set[str]] = [set() for _ in range(n_batches)]
    for idx, caption, key in items:
        placed = False
        for b in range(n_batches):
            if len(batches[b]) < batch_size and key not in keys[b]:
                batches[b].append((idx, caption))
                keys[b].add(key)
                placed = True
                break
        if not placed:
            for b in range(n_batches):
                if len(batches[b]) < batch_size:
                    batches[b].append((idx, caption))
                    keys[b].add(key)
                    break
    return [b for b in batches if b]


def make_batches(
    ds: EmbeddingDataset,
    store: CaptionStore | None,
    cfg: TrainConfig,
    epoch: int,
    labels: np.ndarray | None = None,
) -> list[MiniBatch]:
    """Deterministic batches for one epoch, shuffled from (seed, epoch).

    Classification: plain shuffled label batches. Contrastive: each image
    contributes one (image, caption) pair, the caption drawn uniformly
    from the enabled candidates (every synonym caption counts as its own
    candidate), and batches are packed greedily so one class appears at
    most once per batch whenever that is avoidable.
    """
    n = len(ds)
    if n == 0:
        return []
    rng = np.random.default_rng([cfg.seed, epoch])
    perm = rng.permutation(n)
    batch_size = cfg.resolved_batch_size
    images = ds.vectors

    if cfg.head == "ce":
        if labels is None:
            raise DataError("classification batches need label indices")
        out = []
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            out.append(MiniBatch(images=images[idx], labels=labels[idx], indices=idx))
        return out

    if store is None:
        raise DataError("contrastive batches need a caption store")
    items: list[tuple[int, str, str]] = []
    for i in perm:
        rec = ds.manifest[int(i)]
        cands = _caption_candidates(rec, cfg.caption_types, store)
        if not cands:
            raise DataError(
                f"image {rec.id!r} has no embedded caption of types {list(cfg.caption_types)}"
            )
        if cfg.expand_captions:
            chosen = cands
        else:
            chosen = [cands[int(rng.integers(len(cands)))]]
        for caption in chosen:
            key = rec.label if rec.label is not None else caption
            items.append((int(i), caption, key))

    packed = _pack_diverse(items, batch_size, len(items))
    out = []
    for group in packed:
        idx = np.array([i for i, _ in group], dtype=np.int64)
        texts = np.stack([store.get(c) for _, c in group])
        out.append(MiniBatch(images=images[idx], texts=texts, indices=idx))
    return out


def label_indices(ds: EmbeddingDataset, tax: Taxonomy) -> np.ndarray:
    """Fine-class index per row; labels may be synonyms of fine classes."""
    order = {c: i for i, c in enumerate(tax.fine_classes)}
    out = np.empty(len(ds), dtype=np.int64)
    for i, rec in enumerate(ds.manifest):
        if rec.label is None:
            raise DataError(f"image {rec.id!r} has no label")
        out[i] = order[resolve_prompt_class(tax, rec.label)]
    return out


def _snapshot(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: p.copy() for k, p in params.items()}


def _normalized(ds: EmbeddingDataset) -> EmbeddingDataset:
    return EmbeddingDataset(vectors=l2_normalize_rows(ds.vectors), manifest=ds.manifest)


def _epoch_losses(head, batches: list[MiniBatch], cfg: TrainConfig, update=None):
    """Run batches through the head; returns sample-weighted mean loss.
    When ``update`` is given it is called with (grads) after each batch."""
    total = 0.0
    count = 0
    for batch in batches:
        if cfg.head == "ce":
            out, hidden = forward_ce(head, batch.images)
            loss, grad_out = cross_entropy_loss(out, batch.labels)
        else:
            out, hidden = forward_proj(head, batch.images)
            loss, grad_out = contrastive_loss(
                TrainBatch(image_projections=out, text_embeddings=batch.texts),
                temperature=cfg.temperature,
            )
        if not math.isfinite(loss):
            raise NumericError(f"non-finite {cfg.head} loss")
        if update is not None:
            update(backward(head, batch.images, hidden, grad_out))
        total += loss * len(batch)
        count += len(batch)
    return total / max(count, 1)


def train(
    train_ds: EmbeddingDataset,
    val_ds: EmbeddingDataset,
    captions: CaptionStore | None,
    cfg: TrainConfig,
    tax: Taxonomy,
):
    """Train a head; returns (head at the best validation epoch, epoch logs).

    Early stopping (when enabled) fires once the validation loss has not
    improved for patience+1 consecutive epochs and the learning rate has
    already been reduced at least once.
    """
    if len(train_ds) == 0:
        raise DataError("training set is empty")
    if len(val_ds) == 0:
        raise DataError("validation set is empty (adjust the split fractions)")
    train_n = _normalized(train_ds)
    val_n = _normalized(val_ds)

    if cfg.head == "ce":
        y_train = label_indices(train_ds, tax)
        y_val = label_indices(val_ds, tax)
        head = init_head(
            "ce", in_dim=train_ds.dim, n_classes=len(tax.fine_classes),
            seed=cfg.seed, hidden=cfg.hidden,
        )
    else:
        y_train = None
        y_val = None
        if captions is None:
            raise DataError("contrastive training needs a caption store")
        head = init_head(
            "contrastive", in_dim=train_ds.dim, seed=cfg.seed,
            hidden=cfg.hidden, out_dim=captions.dim,
        )
    head.taxonomy_fingerprint = tax.fingerprint

    params = head_params(head)
    state = AdamState.init_like(params)
    scheduler = PlateauScheduler(
        lr=cfg.lr, patience=cfg.patience, factor=cfg.lr_factor,
        improvement_rtol=cfg.improvement_rtol,
    )
    # Validation pairing is fixed once (epoch key 0) so epochs compare like
    # with like; training epochs start at 1.
    val_batches = make_batches(val_n, captions, cfg, epoch=0, labels=y_val)

    best_params = _snapshot(params)
    best_val = math.inf
    no_improve = 0
    logs: list[EpochLog] = []

    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        lr = scheduler.lr
        batches = make_batches(train_n, captions, cfg, epoch=epoch, labels=y_train)
        train_loss = _epoch_losses(
            head, batches, cfg, update=lambda grads: adam_step(params, grads, state, lr)
        )
        val_loss = _epoch_losses(head, val_batches, cfg)
        logs.append(
            EpochLog(
                epoch=epoch,
                train_loss=train_loss,
                val_loss=val_loss,
                lr=lr,
                wall_time=time.perf_counter() - started,
            )
        )
        if not math.isfinite(best_val) or val_loss < best_val - cfg.improvement_rtol * abs(best_val):
            best_val = val_loss
            best_params = _snapshot(params)
            no_improve = 0
        else:
            no_improve += 1
        scheduler.step(val_loss)
        if cfg.early_stop and no_improve >= cfg.patience + 1 and scheduler.reductions >= 1:
            break

    set_head_params(head, best_params)
    return head, logs
