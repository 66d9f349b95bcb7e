"""The on-disk interchange formats consumed by the training toolkit.

``<prefix>.cemb``: magic ``CEMB`` | u32 version=1 | u32 dim | u64 count
(little-endian, 20-byte header) followed by count*dim float32 row-major
values. ``<prefix>.jsonl``: one manifest object per row, same order, with
keys ``id``, ``label``, ``captions``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CEMB"
VERSION = 1
_HEADER = struct.Struct("<4sIIQ")


def _paths(prefix) -> tuple[Path, Path]:
    prefix = Path(prefix)
    if prefix.suffix in (".cemb", ".jsonl"):
        prefix = prefix.with_suffix("")
    return prefix.with_suffix(".cemb"), prefix.with_suffix(".jsonl")


def write_embeddings(prefix, vectors: np.ndarray, records: list[dict]) -> None:
    vectors = np.ascontiguousarray(vectors, dtype="<f4")
    if vectors.ndim != 2:
        raise ValueError(f"expected a 2-D embedding matrix, got shape {vectors.shape}")
    if len(records) != vectors.shape[0]:
        raise ValueError(
            f"{len(records)} manifest records for {vectors.shape[0]} embedding rows"
        )
    if vectors.size and not np.all(np.isfinite(vectors)):
        raise ValueError("non-finite embedding values")
    cemb, jsonl = _paths(prefix)
    with open(cemb, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, vectors.shape[1], vectors.shape[0]))
        fh.write(vectors.tobytes())
    with open(jsonl, "w", encoding="utf-8") as fh:
        for rec in records:
            obj = {
                "id": rec["id"],
                "label": rec.get("label"),
                "captions": rec.get("captions"),
            }
            fh.write(json.dumps(obj, ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")


def read_embeddings(prefix) -> tuple[np.ndarray, list[dict]]:
    """Self-check reader mirroring the consumer's validation."""
    cemb, jsonl = _paths(prefix)
    raw = Path(cemb).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{cemb}: too short for a header")
    magic, version, dim, count = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError(f"{cemb}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{cemb}: unsupported version {version}")
    payload = raw[_HEADER.size:]
    if len(payload) != count * dim * 4:
        raise ValueError(f"{cemb}: truncated payload")
    vectors = np.frombuffer(payload, dtype="<f4").reshape(count, dim)
    records = []
    with open(jsonl, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    if len(records) != count:
        raise ValueError(f"{jsonl}: manifest length {len(records)} != count {count}")
    return vectors, records
