"""Classification over prompt banks (cosine-argmax) and class logits.

The prompt-bank paths work with any bank and any taxonomy, independent of
what a projection head was trained on. The classification head is tied to
its training taxonomy and refuses anything else; in grid evaluation that
refusal becomes an ``X`` cell rather than an error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dataio import PromptBank
from .errors import DataError, TaxonomyMismatch
from .heads import ContrastiveHead, CrossEntropyHead, forward_ce, forward_proj, identity_projection_head
from .numcore import as_float64, cosine_matrix, l2_normalize_rows, softmax
from .taxonomy import Taxonomy, rollup

__all__ = [
    "Prediction",
    "classify_contrastive",
    "classify_contrastive_batch",
    "classify_zeroshot",
    "classify_zeroshot_batch",
    "classify_ce",
    "classify_ce_batch",
    "predictions_to_jsonl",
]


@dataclass(frozen=True, eq=False)
class Prediction:
    """One classified image: the winning fine class, the index of the
    matched bank entry (or class index for the logit head), the full score
    distribution, and rollups at the 6- and 2-class levels."""

    fine: str
    m_hat: int
    scores: np.ndarray
    level6: str
    level2: str

    def at_level(self, level: int) -> str:
        if level == 25:
            return self.fine
        if level == 6:
            return self.level6
        if level == 2:
            return self.level2
        raise DataError(f"unknown taxonomy level {level!r}")


def _as_batch(images) -> np.ndarray:
    arr = as_float64(images, "images")
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DataError(f"expected a vector or matrix of images, got shape {arr.shape}")
    return arr


def _bank_predictions(
    projections: np.ndarray, bank: PromptBank, tax: Taxonomy
) -> list[Prediction]:
    if len(bank) == 0:
        raise DataError("prompt bank is empty")
    fines = bank.resolved_classes(tax)
    scores = cosine_matrix(projections, bank.matrix)
    out = []
    for row in scores:
        m_hat = int(np.argmax(row))  # ties break to the lowest index
        fine = fines[m_hat]
        out.append(
            Prediction(
                fine=fine,
                m_hat=m_hat,
                scores=row,
                level6=rollup(tax, fine, 6),
                level2=rollup(tax, fine, 2),
            )
        )
    return out


def classify_contrastive_batch(
    head: ContrastiveHead, images, bank: PromptBank, tax: Taxonomy
) -> list[Prediction]:
    """Project each image through the head, then cosine-argmax over the
    bank. Inputs are unit-normalized first, matching training."""
    batch = l2_normalize_rows(_as_batch(images))
    projections, _ = forward_proj(head, batch)
    return _bank_predictions(projections, bank, tax)


def classify_contrastive(
    head: ContrastiveHead, image, bank: PromptBank, tax: Taxonomy
) -> Prediction:
    return classify_contrastive_batch(head, image, bank, tax)[0]


def classify_zeroshot_batch(images, bank: PromptBank, tax: Taxonomy) -> list[Prediction]:
    """Cosine-argmax over the bank with the identity projection: exactly
    :func:`classify_contrastive_batch` with a head that reproduces its
    input."""
    dim = _as_batch(images).shape[1]
    return classify_contrastive_batch(identity_projection_head(dim), images, bank, tax)


def classify_zeroshot(image, bank: PromptBank, tax: Taxonomy) -> Prediction:
    return classify_zeroshot_batch(image, bank, tax)[0]


def classify_ce_batch(
    head: CrossEntropyHead, images, tax: Taxonomy
) -> list[Prediction]:
    """Softmax-argmax over the trained class logits. Requires the same
    taxonomy the head was trained on."""
    fine_classes = tax.fine_classes
    if head.n_classes != len(fine_classes):
        raise TaxonomyMismatch(
            f"head predicts {head.n_classes} classes, taxonomy has {len(fine_classes)}"
        )
    if head.taxonomy_fingerprint is not None and head.taxonomy_fingerprint != tax.fingerprint:
        raise TaxonomyMismatch(
            "model was trained on a different taxonomy "
            f"(fingerprint {head.taxonomy_fingerprint} != {tax.fingerprint})"
        )
    batch = l2_normalize_rows(_as_batch(images))
    logits, _ = forward_ce(head, batch)
    probs = softmax(logits, axis=1)
    out = []
    for row in probs:
        m_hat = int(np.argmax(row))
        fine = fine_classes[m_hat]
        out.append(
            Prediction(
                fine=fine,
                m_hat=m_hat,
                scores=row,
                level6=rollup(tax, fine, 6),
                level2=rollup(tax, fine, 2),
            )
        )
    return out


def classify_ce(head: CrossEntropyHead, image, tax: Taxonomy) -> Prediction:
    return classify_ce_batch(head, image, tax)[0]


def predictions_to_jsonl(predictions: list[Prediction], ids: list[str], path) -> None:
    if len(predictions) != len(ids):
        raise DataError("one id per prediction required")
    with open(path, "w", encoding="utf-8") as fh:
        for pid, pred in zip(ids, predictions):
            fh.write(
                json.dumps(
                    {
                        "id": pid,
                        "fine": pred.fine,
                        "level6": pred.level6,
                        "level2": pred.level2,
                        "m_hat": pred.m_hat,
                        "scores": [float(s) for s in pred.scores],
                    }
                )
            )
            fh.write("\n")
