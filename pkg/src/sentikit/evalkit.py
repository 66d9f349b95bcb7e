"""Accuracy/recall/confusion reporting, analytic baselines, cross-dataset
grids, and the caption-type ablation harness.

Grid cells that cannot be computed (a classification head meeting a
taxonomy whose classes differ at the requested level) are first-class
``X`` records, not errors, so comparison grids always render completely.
Percentages are truncated, not rounded, to two decimals.
"""

from __future__ import annotations

import csv
import json
import math
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dataio import CaptionStore, EmbeddingDataset, PromptBank
from .errors import DataError
from .heads import ContrastiveHead, CrossEntropyHead
from .inference import (
    Prediction,
    classify_ce_batch,
    classify_contrastive_batch,
    classify_zeroshot_batch,
)
from .taxonomy import Taxonomy, resolve_prompt_class, rollup
from .trainer import TrainConfig, train

__all__ = [
    "ConfusionMatrix",
    "EvalReport",
    "evaluate",
    "baseline_accuracy",
    "as_percent",
    "ModelSpec",
    "EvalTarget",
    "CrossDatasetResult",
    "cross_dataset_run",
    "run_grid",
    "ablation_run",
    "aggregate_accuracies",
    "worker_cap",
]

ABLATION_SUBSETS = (
    ("sc",),
    ("ic",),
    ("sc", "ic"),
    ("sc", "ssc"),
    ("sc", "ic", "ssc"),
)


def worker_cap(default: int = 1) -> int:
    """Worker parallelism cap from the CLIPE_THREADS environment variable."""
    raw = os.environ.get("CLIPE_THREADS")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        return default


def as_percent(fraction: float) -> str:
    """Format a fraction as a percent with two decimals, truncating (1/6 ->
    '16.66')."""
    cents = math.floor(fraction * 10000.0 + 1e-9)
    return f"{cents / 100.0:.2f}"


@dataclass(eq=False)
class ConfusionMatrix:
    classes: tuple[str, ...]
    counts: np.ndarray  # (K, K) int64, rows = ground truth, cols = predicted

    def __post_init__(self):
        k = len(self.classes)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (k, k):
            raise DataError(f"confusion matrix shape {self.counts.shape} for {k} classes")
        if np.any(self.counts < 0):
            raise DataError("confusion matrix counts must be nonnegative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total if self.total else 0.0

    def per_class_recall(self) -> dict[str, float | None]:
        out: dict[str, float | None] = {}
        row_sums = self.counts.sum(axis=1)
        for i, cls in enumerate(self.classes):
            out[cls] = float(self.counts[i, i] / row_sums[i]) if row_sums[i] else None
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["truth\\predicted", *self.classes])
            for cls, row in zip(self.classes, self.counts):
                writer.writerow([cls, *[int(v) for v in row]])


@dataclass
class EvalReport:
    dataset: str
    model: str
    level: int
    accuracy: float
    per_class_recall: dict[str, float | None]
    confusion: ConfusionMatrix
    baselines: dict[str, float]
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "model": self.model,
            "level": self.level,
            "n_samples": self.n_samples,
            "accuracy": self.accuracy,
            "accuracy_percent": as_percent(self.accuracy),
            "per_class_recall": self.per_class_recall,
            "baselines": {k: v for k, v in self.baselines.items()},
            "baseline_percents": {k: as_percent(v) for k, v in self.baselines.items()},
            "classes": list(self.confusion.classes),
            "confusion": self.confusion.counts.tolist(),
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def _rolled(tax: Taxonomy, name: str, level: int) -> str:
    return rollup(tax, resolve_prompt_class(tax, name), level)


def evaluate(
    predictions,
    labels,
    tax: Taxonomy,
    level: int = 25,
    dataset: str = "",
    model: str = "",
) -> EvalReport:
    """Roll predictions and labels to ``level`` and report accuracy,
    per-class recall, and the confusion matrix at that level.

    ``predictions`` may be :class:`Prediction` objects or class-name
    strings.
    """
    if len(predictions) != len(labels):
        raise DataError(
            f"{len(predictions)} predictions for {len(labels)} labels"
        )
    if len(labels) == 0:
        raise DataError("cannot evaluate an empty sample")
    pred_names = [p.fine if isinstance(p, Prediction) else p for p in predictions]
    classes = tax.classes_at_level(level)
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for pred, label in zip(pred_names, labels):
        counts[index[_rolled(tax, label, level)], index[_rolled(tax, pred, level)]] += 1
    confusion = ConfusionMatrix(classes=classes, counts=counts)
    return EvalReport(
        dataset=dataset,
        model=model,
        level=level,
        accuracy=confusion.accuracy(),
        per_class_recall=confusion.per_class_recall(),
        confusion=confusion,
        baselines={
            "random": baseline_accuracy(labels, tax, level, "random"),
            "majority": baseline_accuracy(labels, tax, level, "majority"),
        },
        n_samples=len(labels),
    )


def baseline_accuracy(
    labels, tax: Taxonomy, level: int, kind: str, seed: int | None = None
) -> float:
    """Reference accuracies: ``majority`` is the modal class frequency at
    the level; ``random`` is the analytic 1/K expectation (reported
    exactly rather than simulated, so it is reproducible)."""
    if len(labels) == 0:
        raise DataError("baseline of an empty label sequence")
    if kind == "random":
        return 1.0 / len(tax.classes_at_level(level))
    if kind == "majority":
        rolled = [_rolled(tax, label, level) for label in labels]
        _, count = Counter(rolled).most_common(1)[0]
        return count / len(rolled)
    raise DataError(f"unknown baseline kind {kind!r} (expected 'random' or 'majority')")


@dataclass
class ModelSpec:
    """One row of a comparison grid: a trained head, or the zero-shot
    reference. Classification heads carry the taxonomy they were trained
    on; bank-based models carry their prompt bank."""

    name: str
    kind: str  # "ce" | "contrastive" | "zeroshot"
    head: CrossEntropyHead | ContrastiveHead | None = None
    taxonomy: Taxonomy | None = None
    bank: PromptBank | None = None

    def __post_init__(self):
        if self.kind not in ("ce", "contrastive", "zeroshot"):
            raise DataError(f"unknown model kind {self.kind!r}")
        if self.kind == "ce" and (self.head is None or self.taxonomy is None):
            raise DataError("a classification model needs a head and its taxonomy")
        if self.kind == "contrastive" and self.head is None:
            raise DataError("a contrastive model needs a head")


@dataclass
class EvalTarget:
    """One column of a comparison grid: a labeled dataset, its taxonomy,
    the bank to classify against, and the reporting level."""

    name: str
    dataset: EmbeddingDataset
    taxonomy: Taxonomy
    level: int
    bank: PromptBank | None = None


@dataclass
class CrossDatasetResult:
    model: str
    target: str
    level: int
    status: str  # "ok" | "X"
    report: EvalReport | None = None
    reason: str | None = None

    @property
    def cell(self) -> str:
        return as_percent(self.report.accuracy) if self.status == "ok" else "X"


def cross_dataset_run(spec: ModelSpec, target: EvalTarget) -> CrossDatasetResult:
    """Evaluate one model on one target, recording an ``X`` result when the
    combination is not computable.

    A classification head predicts in its own taxonomy and can only be
    scored when the class set at the requested level matches the target
    taxonomy's (e.g. binary valence usually matches; a foreign fine-grained
    level does not). Bank-based models accept any taxonomy.
    """
    labels = [rec.label for rec in target.dataset.manifest]
    if any(label is None for label in labels):
        raise DataError(f"target {target.name!r} has unlabeled rows")

    if spec.kind == "ce":
        model_tax = spec.taxonomy
        if model_tax.level_fingerprint(target.level) != target.taxonomy.level_fingerprint(
            target.level
        ):
            return CrossDatasetResult(
                model=spec.name,
                target=target.name,
                level=target.level,
                status="X",
                reason="taxonomy mismatch at this level",
            )
        preds = classify_ce_batch(spec.head, target.dataset.vectors, model_tax)
        pred_names = [rollup(model_tax, p.fine, target.level) for p in preds]
    else:
        if target.bank is None:
            raise DataError(f"target {target.name!r} has no prompt bank")
        if spec.kind == "contrastive":
            preds = classify_contrastive_batch(
                spec.head, target.dataset.vectors, target.bank, target.taxonomy
            )
        else:
            preds = classify_zeroshot_batch(
                target.dataset.vectors, target.bank, target.taxonomy
            )
        pred_names = [p.at_level(target.level) for p in preds]

    # Predictions are already at the target level; labels are rolled inside.
    rolled_labels = [_rolled(target.taxonomy, y, target.level) for y in labels]
    classes = target.taxonomy.classes_at_level(target.level)
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for pred, label in zip(pred_names, rolled_labels):
        counts[index[label], index[pred]] += 1
    confusion = ConfusionMatrix(classes=classes, counts=counts)
    report = EvalReport(
        dataset=target.name,
        model=spec.name,
        level=target.level,
        accuracy=confusion.accuracy(),
        per_class_recall=confusion.per_class_recall(),
        confusion=confusion,
        baselines={
            "random": baseline_accuracy(labels, target.taxonomy, target.level, "random"),
            "majority": baseline_accuracy(labels, target.taxonomy, target.level, "majority"),
        },
        n_samples=len(labels),
    )
    return CrossDatasetResult(
        model=spec.name, target=target.name, level=target.level, status="ok", report=report
    )


@dataclass
class GridReport:
    models: list[str]
    targets: list[str]
    results: dict[tuple[str, str], CrossDatasetResult] = field(default_factory=dict)

    def cell(self, model: str, target: str) -> str:
        res = self.results.get((model, target))
        return res.cell if res else ""

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model", *self.targets])
            for model in self.models:
                writer.writerow([model, *[self.cell(model, t) for t in self.targets]])

    def to_dict(self) -> dict:
        return {
            "models": self.models,
            "targets": self.targets,
            "cells": {
                f"{m}::{t}": self.cell(m, t) for m in self.models for t in self.targets
            },
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def run_grid(specs: list[ModelSpec], targets: list[EvalTarget]) -> GridReport:
    """Evaluate every model on every target; independent cells may run on
    parallel workers (capped by CLIPE_THREADS)."""
    grid = GridReport(models=[s.name for s in specs], targets=[t.name for t in targets])
    cells = [(spec, target) for spec in specs for target in targets]
    workers = min(worker_cap(), max(1, len(cells)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: cross_dataset_run(*c), cells))
    else:
        results = [cross_dataset_run(spec, target) for spec, target in cells]
    for res in results:
        grid.results[(res.model, res.target)] = res
    return grid


def ablation_run(
    train_ds: EmbeddingDataset,
    val_ds: EmbeddingDataset,
    captions: CaptionStore,
    cfg: TrainConfig,
    tax: Taxonomy,
    targets: list[EvalTarget],
    subsets: tuple[tuple[str, ...], ...] = ABLATION_SUBSETS,
) -> GridReport:
    """Train one projection head per caption-type subset with otherwise
    identical config and evaluate all of them on the given targets."""
    if not subsets or any(not s for s in subsets):
        raise DataError("each ablation subset must be nonempty")
    specs = []
    for subset in subsets:
        sub_cfg = replace(cfg, head="contrastive", caption_types=tuple(subset))
        head, _ = train(train_ds, val_ds, captions, sub_cfg, tax)
        specs.append(
            ModelSpec(
                name=f"contrastive[{','.join(subset)}]",
                kind="contrastive",
                head=head,
                taxonomy=tax,
            )
        )
    return run_grid(specs, targets)


def aggregate_accuracies(accuracies: list[float]) -> dict[str, float]:
    """Mean and standard deviation over repeated seeded runs."""
    if not accuracies:
        raise DataError("no accuracies to aggregate")
    arr = np.asarray(accuracies, dtype=np.float64)
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return {"mean": float(arr.mean()), "sd": sd, "runs": int(arr.size)}
