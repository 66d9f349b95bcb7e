"""scikit-learn style estimators over frozen embedding features.

These wrap the trainer and inference machinery behind fit/predict so the
heads compose with the wider ecosystem (pipelines, cross-validation,
``get_params``/``set_params``). X is always an (n_samples, dim) embedding
matrix; y is an array of fine-class names (synonyms resolve through the
taxonomy).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, column_or_1d

from .dataio import CaptionSet, CaptionStore, EmbeddingDataset, ManifestRecord, PromptBank
from .errors import DataError
from .inference import classify_ce_batch, classify_contrastive_batch, classify_zeroshot_batch
from .numcore import cosine_matrix
from .taxonomy import Taxonomy, default_taxonomy, load_taxonomy, resolve_prompt_class
from .trainer import TrainConfig, train

__all__ = [
    "CrossEntropyProbe",
    "ContrastiveProbe",
    "ZeroShotPromptClassifier",
    "PromptSimilarityTransformer",
    "rollup_labels",
]


def _resolve_taxonomy(taxonomy) -> Taxonomy:
    if taxonomy is None:
        return default_taxonomy()
    if isinstance(taxonomy, Taxonomy):
        return taxonomy
    return load_taxonomy(taxonomy)


def _validate_embeddings(X) -> np.ndarray:
    return check_array(X, dtype=np.float64, ensure_2d=True)


def _holdout_split(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not (0.0 < fraction < 1.0):
        raise DataError("validation_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng([seed, 2**31])
    perm = rng.permutation(n)
    n_val = max(1, int(round(fraction * n)))
    if n_val >= n:
        raise DataError("not enough samples to carve out a validation split")
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def rollup_labels(tax: Taxonomy, labels, level: int) -> np.ndarray:
    """Vectorized rollup of fine-class names (or synonyms) to a level."""
    from .taxonomy import rollup

    return np.array(
        [rollup(tax, resolve_prompt_class(tax, y), level) for y in labels], dtype=object
    )


class CrossEntropyProbe(ClassifierMixin, BaseEstimator):
    """Two-layer classification head trained with cross entropy on frozen
    embeddings. Prediction space is the taxonomy's fine-class list."""

    def __init__(
        self,
        taxonomy=None,
        epochs: int = 15,
        lr: float = 1e-3,
        batch_size: int = 32,
        hidden: int = 512,
        patience: int = 2,
        lr_factor: float = 0.1,
        seed: int = 0,
        early_stop: bool = True,
        validation_fraction: float = 0.1,
    ):
        self.taxonomy = taxonomy
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.hidden = hidden
        self.patience = patience
        self.lr_factor = lr_factor
        self.seed = seed
        self.early_stop = early_stop
        self.validation_fraction = validation_fraction

    def fit(self, X, y):
        X = _validate_embeddings(X)
        y = column_or_1d(y)
        if X.shape[0] != len(y):
            raise DataError("X and y length mismatch")
        tax = _resolve_taxonomy(self.taxonomy)
        ds = EmbeddingDataset(
            vectors=X,
            manifest=[
                ManifestRecord(id=f"row-{i}", label=str(label)) for i, label in enumerate(y)
            ],
        )
        tr_idx, val_idx = _holdout_split(len(ds), self.validation_fraction, self.seed)
        cfg = TrainConfig(
            head="ce",
            epochs=self.epochs,
            lr=self.lr,
            batch_size=self.batch_size,
            hidden=self.hidden,
            patience=self.patience,
            lr_factor=self.lr_factor,
            seed=self.seed,
            early_stop=self.early_stop,
        )
        head, logs = train(ds.subset(tr_idx), ds.subset(val_idx), None, cfg, tax)
        self.tax_ = tax
        self.head_ = head
        self.epoch_logs_ = logs
        self.classes_ = np.array(tax.fine_classes, dtype=object)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "head_")
        X = _validate_embeddings(X)
        preds = classify_ce_batch(self.head_, X, self.tax_)
        return np.stack([p.scores for p in preds])

    def predict(self, X):
        check_is_fitted(self, "head_")
        X = _validate_embeddings(X)
        preds = classify_ce_batch(self.head_, X, self.tax_)
        return np.array([p.fine for p in preds], dtype=object)


class ContrastiveProbe(ClassifierMixin, BaseEstimator):
    """Projection head trained with the symmetric contrastive loss against
    a prompt bank; classifies by cosine-argmax over that bank (or any bank
    passed to :meth:`predict_with_bank`)."""

    def __init__(
        self,
        prompt_bank: PromptBank | None = None,
        taxonomy=None,
        epochs: int = 15,
        lr: float = 1e-3,
        batch_size: int = 8,
        hidden: int = 512,
        patience: int = 2,
        lr_factor: float = 0.1,
        seed: int = 0,
        early_stop: bool = True,
        caption_types: tuple[str, ...] = ("sc",),
        temperature: float = 1.0,
        validation_fraction: float = 0.1,
    ):
        self.prompt_bank = prompt_bank
        self.taxonomy = taxonomy
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.hidden = hidden
        self.patience = patience
        self.lr_factor = lr_factor
        self.seed = seed
        self.early_stop = early_stop
        self.caption_types = caption_types
        self.temperature = temperature
        self.validation_fraction = validation_fraction

    def _captions_for(self, tax: Taxonomy, label: str) -> CaptionSet:
        fine = resolve_prompt_class(tax, label)
        template = tax.prompt_template
        ssc = tuple(template.render(s) for s in tax.synonyms.get(fine, ()))
        return CaptionSet(sc=template.render(fine), ssc=ssc)

    def fit(self, X, y):
        if self.prompt_bank is None:
            raise DataError("ContrastiveProbe needs a prompt_bank to train against")
        X = _validate_embeddings(X)
        y = column_or_1d(y)
        if X.shape[0] != len(y):
            raise DataError("X and y length mismatch")
        tax = _resolve_taxonomy(self.taxonomy)
        ds = EmbeddingDataset(
            vectors=X,
            manifest=[
                ManifestRecord(
                    id=f"row-{i}",
                    label=str(label),
                    captions=self._captions_for(tax, str(label)),
                )
                for i, label in enumerate(y)
            ],
        )
        store = CaptionStore.from_bank(self.prompt_bank)
        tr_idx, val_idx = _holdout_split(len(ds), self.validation_fraction, self.seed)
        cfg = TrainConfig(
            head="contrastive",
            epochs=self.epochs,
            lr=self.lr,
            batch_size=self.batch_size,
            hidden=self.hidden,
            patience=self.patience,
            lr_factor=self.lr_factor,
            seed=self.seed,
            early_stop=self.early_stop,
            caption_types=tuple(self.caption_types),
            temperature=self.temperature,
        )
        head, logs = train(ds.subset(tr_idx), ds.subset(val_idx), store, cfg, tax)
        self.tax_ = tax
        self.head_ = head
        self.epoch_logs_ = logs
        self.classes_ = np.array(tax.fine_classes, dtype=object)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_with_bank(self, X, bank: PromptBank, tax: Taxonomy | None = None):
        check_is_fitted(self, "head_")
        X = _validate_embeddings(X)
        tax = tax or self.tax_
        preds = classify_contrastive_batch(self.head_, X, bank, tax)
        return np.array([p.fine for p in preds], dtype=object)

    def predict(self, X):
        return self.predict_with_bank(X, self.prompt_bank)

    def decision_function(self, X):
        """Cosine similarities of projected inputs against the bank rows."""
        check_is_fitted(self, "head_")
        X = _validate_embeddings(X)
        preds = classify_contrastive_batch(self.head_, X, self.prompt_bank, self.tax_)
        return np.stack([p.scores for p in preds])


class ZeroShotPromptClassifier(ClassifierMixin, BaseEstimator):
    """Cosine-argmax over a prompt bank with no trained head; ``fit`` only
    records the label space."""

    def __init__(self, prompt_bank: PromptBank | None = None, taxonomy=None):
        self.prompt_bank = prompt_bank
        self.taxonomy = taxonomy

    def fit(self, X=None, y=None):
        if self.prompt_bank is None:
            raise DataError("ZeroShotPromptClassifier needs a prompt_bank")
        tax = _resolve_taxonomy(self.taxonomy)
        self.tax_ = tax
        self.classes_ = np.array(tax.fine_classes, dtype=object)
        if X is not None:
            self.n_features_in_ = _validate_embeddings(X).shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "tax_")
        X = _validate_embeddings(X)
        preds = classify_zeroshot_batch(X, self.prompt_bank, self.tax_)
        return np.array([p.fine for p in preds], dtype=object)

    def decision_function(self, X):
        check_is_fitted(self, "tax_")
        X = _validate_embeddings(X)
        preds = classify_zeroshot_batch(X, self.prompt_bank, self.tax_)
        return np.stack([p.scores for p in preds])


class PromptSimilarityTransformer(TransformerMixin, BaseEstimator):
    """Transform embeddings into their cosine-similarity profile against a
    prompt bank; useful as a feature step in sklearn pipelines."""

    def __init__(self, prompt_bank: PromptBank | None = None):
        self.prompt_bank = prompt_bank

    def fit(self, X=None, y=None):
        if self.prompt_bank is None:
            raise DataError("PromptSimilarityTransformer needs a prompt_bank")
        self.bank_matrix_ = np.asarray(self.prompt_bank.matrix, dtype=np.float64)
        if X is not None:
            self.n_features_in_ = _validate_embeddings(X).shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "bank_matrix_")
        X = _validate_embeddings(X)
        return cosine_matrix(X, self.bank_matrix_)
