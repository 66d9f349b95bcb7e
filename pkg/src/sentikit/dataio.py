"""Embedding datasets on disk and the synthetic fixture generator.

File layout (all little-endian):

``<prefix>.cemb``
    bytes 0-3   magic ``CEMB``
    bytes 4-7   version u32 (currently 1)
    bytes 8-11  dim u32
    bytes 12-19 count u64
    then count * dim float32 values, row-major.

``<prefix>.jsonl``
    one manifest record per embedding row, same order:
    ``{"id": str, "label": str|null, "captions": {"sc": str, "ic": str,
    "ssc": [str]}|null}`` (caption keys present only when set).

Prompt bank JSON is an ordered array of ``{"prompt": str, "class": str}``
aligned row-for-row with a text embedding file.

Values are float32 on disk (matches common encoder output width, halves
file size) and float64 in memory, so write -> read -> write round trips
are byte-identical.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError
from .numcore import as_float64, l2_normalize
from .taxonomy import PromptTemplate, Taxonomy, resolve_prompt_class

__all__ = [
    "MAGIC",
    "VERSION",
    "CaptionSet",
    "ManifestRecord",
    "EmbeddingDataset",
    "PromptEntry",
    "PromptBank",
    "CaptionStore",
    "write_embeddings",
    "read_embeddings",
    "load_prompt_bank",
    "write_prompt_bank",
    "synth_dataset",
    "split_dataset",
]

MAGIC = b"CEMB"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")
MAX_SSC = 5


@dataclass(frozen=True)
class CaptionSet:
    """Caption strings attached to one image: a templated sentiment caption
    (sc), a natural-language image caption (ic), and up to five synonym
    captions (ssc)."""

    sc: str | None = None
    ic: str | None = None
    ssc: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.ssc) > MAX_SSC:
            raise DataError(f"at most {MAX_SSC} synonym captions allowed, got {len(self.ssc)}")

    def to_json_obj(self) -> dict:
        obj: dict = {}
        if self.sc is not None:
            obj["sc"] = self.sc
        if self.ic is not None:
            obj["ic"] = self.ic
        if self.ssc:
            obj["ssc"] = list(self.ssc)
        return obj

    @classmethod
    def from_json_obj(cls, obj: dict) -> "CaptionSet":
        return cls(
            sc=obj.get("sc"),
            ic=obj.get("ic"),
            ssc=tuple(obj.get("ssc", ())),
        )


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    label: str | None = None
    captions: CaptionSet | None = None

    def to_json_line(self) -> str:
        obj = {
            "id": self.id,
            "label": self.label,
            "captions": self.captions.to_json_obj() if self.captions else None,
        }
        return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_json_line(cls, line: str) -> "ManifestRecord":
        obj = json.loads(line)
        if "id" not in obj:
            raise FormatError("manifest record without an 'id' field")
        captions = obj.get("captions")
        return cls(
            id=obj["id"],
            label=obj.get("label"),
            captions=CaptionSet.from_json_obj(captions) if captions else None,
        )


@dataclass(eq=False)
class EmbeddingDataset:
    """A (count, dim) float64 embedding matrix plus per-row manifest."""

    vectors: np.ndarray
    manifest: list[ManifestRecord] = field(default_factory=list)

    def __post_init__(self):
        self.vectors = as_float64(self.vectors, "embedding vectors")
        if self.vectors.ndim != 2:
            raise DataError(f"embedding matrix must be 2-D, got shape {self.vectors.shape}")
        if self.vectors.shape[1] < 1:
            raise DataError("embedding dimension must be positive")
        if len(self.manifest) != self.vectors.shape[0]:
            raise DataError(
                f"manifest length {len(self.manifest)} != vector count {self.vectors.shape[0]}"
            )

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return int(self.vectors.shape[0])

    def labels(self) -> list[str | None]:
        return [rec.label for rec in self.manifest]

    def subset(self, indices) -> "EmbeddingDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return EmbeddingDataset(
            vectors=self.vectors[idx].copy(),
            manifest=[self.manifest[int(i)] for i in idx],
        )


def _paths(prefix) -> tuple[Path, Path]:
    prefix = Path(prefix)
    if prefix.suffix in (".cemb", ".jsonl"):
        prefix = prefix.with_suffix("")
    return prefix.with_suffix(".cemb"), prefix.with_suffix(".jsonl")


def write_embeddings(ds: EmbeddingDataset, prefix) -> None:
    """Write ``<prefix>.cemb`` and ``<prefix>.jsonl``."""
    cemb, jsonl = _paths(prefix)
    data = np.ascontiguousarray(ds.vectors, dtype="<f4")
    with open(cemb, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, ds.dim, len(ds)))
        fh.write(data.tobytes())
    with open(jsonl, "w", encoding="utf-8") as fh:
        for rec in ds.manifest:
            fh.write(rec.to_json_line())
            fh.write("\n")


def read_embeddings(prefix) -> EmbeddingDataset:
    """Read and validate a ``.cemb`` + ``.jsonl`` pair; float32 values are
    widened to float64."""
    cemb, jsonl = _paths(prefix)
    raw = Path(cemb).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{cemb}: file too short for a header")
    magic, version, dim, count = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise FormatError(f"{cemb}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{cemb}: unsupported version {version}")
    if dim < 1:
        raise FormatError(f"{cemb}: non-positive dimension {dim}")
    payload = raw[_HEADER.size:]
    expected = count * dim * 4
    if len(payload) != expected:
        raise FormatError(
            f"{cemb}: truncated payload ({len(payload)} bytes, header declares {expected})"
        )
    vectors = np.frombuffer(payload, dtype="<f4").reshape(count, dim).astype(np.float64)
    if vectors.size and not np.all(np.isfinite(vectors)):
        raise FormatError(f"{cemb}: non-finite embedding values")

    manifest: list[ManifestRecord] = []
    with open(jsonl, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                manifest.append(ManifestRecord.from_json_line(line))
            except json.JSONDecodeError as exc:
                raise FormatError(f"{jsonl}:{lineno}: invalid JSON: {exc}") from exc
    if len(manifest) != count:
        raise FormatError(
            f"{jsonl}: {len(manifest)} manifest records for {count} embedding rows"
        )
    return EmbeddingDataset(vectors=vectors, manifest=manifest)


@dataclass(frozen=True)
class PromptEntry:
    prompt: str
    cls: str

    def to_json_obj(self) -> dict:
        return {"prompt": self.prompt, "class": self.cls}


@dataclass(eq=False)
class PromptBank:
    """Ordered (prompt, class) pairs aligned row-for-row with a text
    embedding dataset. Classes may be fine classes or registered synonyms
    of the taxonomy the bank was loaded against."""

    entries: list[PromptEntry]
    embeddings: EmbeddingDataset

    def __post_init__(self):
        if len(self.entries) != len(self.embeddings):
            raise DataError(
                f"{len(self.entries)} prompt entries for {len(self.embeddings)} embedding rows"
            )

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def matrix(self) -> np.ndarray:
        return self.embeddings.vectors

    def resolved_classes(self, tax: Taxonomy) -> list[str]:
        return [resolve_prompt_class(tax, e.cls) for e in self.entries]


def write_prompt_bank(entries: list[PromptEntry], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([e.to_json_obj() for e in entries], fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def load_prompt_bank(prompts_path, embeddings_prefix, tax: Taxonomy) -> PromptBank:
    """Load a bank JSON plus its embedding file, validating alignment and
    that every class resolves in the taxonomy."""
    with open(prompts_path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, list):
        raise FormatError(f"{prompts_path}: prompt bank must be a JSON array")
    entries = []
    for i, obj in enumerate(doc):
        if not isinstance(obj, dict) or "prompt" not in obj or "class" not in obj:
            raise FormatError(f"{prompts_path}[{i}]: expected {{'prompt', 'class'}}")
        entries.append(PromptEntry(prompt=obj["prompt"], cls=obj["class"]))

    embeddings = read_embeddings(embeddings_prefix)
    if len(entries) != len(embeddings):
        raise DataError(
            f"prompt bank length {len(entries)} != embedding rows {len(embeddings)}"
        )
    for entry in entries:
        resolve_prompt_class(tax, entry.cls)

    # When manifest ids carry prompt strings, use them to detect misalignment.
    prompt_set = {e.prompt for e in entries}
    for i, (entry, rec) in enumerate(zip(entries, embeddings.manifest)):
        if rec.id != entry.prompt and rec.id in prompt_set:
            raise DataError(
                f"prompt bank row {i} is misaligned: embedding id {rec.id!r} "
                f"does not match prompt {entry.prompt!r}"
            )
    return PromptBank(entries=entries, embeddings=embeddings)


class CaptionStore:
    """Lookup from caption string to its precomputed embedding row."""

    def __init__(self, mapping: dict[str, np.ndarray]):
        if not mapping:
            raise DataError("caption store is empty")
        dims = {v.shape[-1] for v in mapping.values()}
        if len(dims) != 1:
            raise DataError(f"caption store mixes embedding dimensions: {sorted(dims)}")
        self._mapping = {k: as_float64(v, f"caption {k!r}") for k, v in mapping.items()}
        self.dim = dims.pop()

    @classmethod
    def from_dataset(cls, ds: EmbeddingDataset) -> "CaptionStore":
        """Index a text embedding dataset by manifest id (the caption
        string itself, by convention)."""
        return cls({rec.id: ds.vectors[i] for i, rec in enumerate(ds.manifest)})

    @classmethod
    def from_bank(cls, bank: PromptBank) -> "CaptionStore":
        return cls({e.prompt: bank.matrix[i] for i, e in enumerate(bank.entries)})

    def __contains__(self, text: str) -> bool:
        return text in self._mapping

    def __len__(self) -> int:
        return len(self._mapping)

    def get(self, text: str) -> np.ndarray:
        try:
            return self._mapping[text]
        except KeyError:
            raise DataError(f"no embedding for caption {text!r}") from None


def synth_dataset(
    n_per_class: int,
    classes: list[str],
    dim: int,
    separation: float,
    seed: int,
    noise: float = 0.25,
    template: PromptTemplate | None = None,
) -> tuple[EmbeddingDataset, EmbeddingDataset]:
    """Deterministic synthetic fixture: one unit prototype direction per
    class with pairwise angle controlled by ``separation``, images sampled
    as prototype + Gaussian noise re-normalized to unit norm.

    Returns (images, prompts); prompt embeddings are the prototypes, and
    the image manifests carry labels and templated sentiment captions so
    the output feeds both training paths directly.
    """
    if n_per_class < 1:
        raise DataError("n_per_class must be at least 1")
    if dim < 2:
        raise DataError("dim must be at least 2")
    if separation < 0:
        raise DataError("separation must be nonnegative")
    if not classes:
        raise DataError("at least one class required")
    if len(classes) > dim:
        raise DataError(
            f"cannot place {len(classes)} near-orthogonal prototypes in {dim} dimensions"
        )
    template = template or PromptTemplate("a photo that seems to express {}")

    rng = np.random.default_rng(seed)
    k = len(classes)
    basis, _ = np.linalg.qr(rng.standard_normal((dim, k)))
    directions = basis.T  # orthonormal rows, one per class
    center = l2_normalize(directions.sum(axis=0))
    prototypes = np.stack(
        [l2_normalize(center + separation * directions[i]) for i in range(k)]
    )

    rows = []
    manifest = []
    for ci, cls in enumerate(classes):
        for j in range(n_per_class):
            vec = prototypes[ci] + noise * rng.standard_normal(dim)
            rows.append(l2_normalize(vec))
            manifest.append(
                ManifestRecord(
                    id=f"{cls}-{j:04d}",
                    label=cls,
                    captions=CaptionSet(sc=template.render(cls)),
                )
            )
    images = EmbeddingDataset(vectors=np.stack(rows), manifest=manifest)
    prompts = EmbeddingDataset(
        vectors=prototypes,
        manifest=[
            ManifestRecord(id=template.render(cls), label=cls) for cls in classes
        ],
    )
    return images, prompts


def split_dataset(
    ds: EmbeddingDataset, fractions: list[float], seed: int
) -> list[EmbeddingDataset]:
    """Deterministic stratified split (by label) into len(fractions) parts.

    Fractions must sum to 1; rounding remainders go to the first part.
    """
    if not fractions or any(f < 0 for f in fractions):
        raise DataError("fractions must be nonnegative")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"fractions must sum to 1, got {sum(fractions)}")

    by_label: dict[str | None, list[int]] = {}
    for i, rec in enumerate(ds.manifest):
        by_label.setdefault(rec.label, []).append(i)

    rng = np.random.default_rng(seed)
    parts: list[list[int]] = [[] for _ in fractions]
    for label in sorted(by_label, key=lambda x: (x is None, x)):
        idx = np.array(by_label[label], dtype=np.int64)
        rng.shuffle(idx)
        counts = [int(math.floor(f * len(idx))) for f in fractions]
        counts[0] += len(idx) - sum(counts)
        pos = 0
        for p, c in enumerate(counts):
            parts[p].extend(idx[pos:pos + c].tolist())
            pos += c
    return [ds.subset(sorted(p)) for p in parts]
