"""Extraction jobs: raw images or prompt strings in, .cemb + manifest out.

Embedding rows are L2-normalized at extraction time so downstream
consumers can assume unit-norm inputs; the encoder's output dimension
flows into the file header.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .captioner import BasicCaptioner
from .formats import write_embeddings

log = logging.getLogger("embex")


@dataclass
class ImageItem:
    path: str
    id: str
    label: str | None = None


@dataclass
class ExtractionJob:
    items: list  # ImageItem list for images, str list for prompts
    encoder: object
    out_prefix: str
    batch_size: int = 32
    sc_template: str | None = None  # fills captions.sc from the label
    synonyms: dict[str, list[str]] = field(default_factory=dict)  # fills captions.ssc


def read_listing(path) -> list[ImageItem]:
    """CSV listing: path,id,label (header optional)."""
    items = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() == "path":
                continue
            if len(row) < 2:
                raise ValueError(f"{path}: listing rows need at least path,id")
            label = row[2].strip() if len(row) > 2 and row[2].strip() else None
            items.append(ImageItem(path=row[0].strip(), id=row[1].strip(), label=label))
    if not items:
        raise ValueError(f"{path}: empty listing")
    return items


def _captions_for(item: ImageItem, job: ExtractionJob) -> dict | None:
    if job.sc_template is None or item.label is None:
        return None
    caps: dict = {"sc": job.sc_template.replace("{}", item.label)}
    syns = job.synonyms.get(item.label, [])[:5]
    if syns:
        caps["ssc"] = [job.sc_template.replace("{}", s) for s in syns]
    return caps


def extract_image_embeddings(job: ExtractionJob) -> int:
    """Encode every readable image in the listing; unreadable files are
    skipped with a warning. Returns the number of rows written."""
    loaded: list[Image.Image] = []
    kept: list[ImageItem] = []
    for item in job.items:
        try:
            with Image.open(item.path) as img:
                loaded.append(img.convert("RGB"))
            kept.append(item)
        except (OSError, UnidentifiedImageError) as exc:
            log.warning("skipping unreadable image %s: %s", item.path, exc)
    if not kept:
        raise ValueError("no readable images in the listing")

    chunks = [
        job.encoder.encode_images(loaded[i:i + job.batch_size], batch_size=job.batch_size)
        for i in range(0, len(loaded), job.batch_size)
    ]
    vectors = np.concatenate(chunks, axis=0)
    records = [
        {"id": item.id, "label": item.label, "captions": _captions_for(item, job)}
        for item in kept
    ]
    write_embeddings(job.out_prefix, vectors, records)
    return len(kept)


def extract_text_embeddings(prompts: list, job: ExtractionJob) -> int:
    """Encode prompts in order; row i embeds prompt i. Prompts may be plain
    strings or {"prompt", "class"} objects (bank format)."""
    if not prompts:
        raise ValueError("no prompts to embed")
    texts = []
    records = []
    for p in prompts:
        if isinstance(p, str):
            text, label = p, None
        elif isinstance(p, dict) and "prompt" in p:
            text, label = p["prompt"], p.get("class")
        else:
            raise ValueError(f"bad prompt entry {p!r}")
        if not text.strip():
            raise ValueError("cannot embed an empty prompt string")
        texts.append(text)
        records.append({"id": text, "label": label, "captions": None})
    vectors = job.encoder.encode_texts(texts, batch_size=job.batch_size)
    write_embeddings(job.out_prefix, vectors, records)
    return len(texts)


def generate_captions(
    items: list[ImageItem], manifest_path, captioner: BasicCaptioner | None = None
) -> int:
    """Fill the ``ic`` caption of each listed image into an existing
    manifest (matched by id). Per-image captioner failures leave ``ic``
    empty and are logged."""
    captioner = captioner or BasicCaptioner()
    manifest_path = Path(manifest_path)
    records = []
    with open(manifest_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(json.loads(line))
    by_id = {rec["id"]: rec for rec in records}

    updated = 0
    for item in items:
        rec = by_id.get(item.id)
        if rec is None:
            log.warning("id %s not present in %s", item.id, manifest_path)
            continue
        try:
            with Image.open(item.path) as img:
                ic = captioner.caption(img)
        except (OSError, UnidentifiedImageError) as exc:
            log.warning("captioner failed for %s: %s", item.path, exc)
            ic = ""
        caps = rec.get("captions") or {}
        caps["ic"] = ic
        rec["captions"] = caps
        updated += 1

    with open(manifest_path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")))
            fh.write("\n")
    return updated
