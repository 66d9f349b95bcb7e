"""Batch embedding extraction into .cemb + JSONL manifests."""

from .captioner import BasicCaptioner, make_captioner
from .encoders import ClipEncoder, HashEncoder, make_encoder
from .formats import read_embeddings, write_embeddings
from .jobs import (
    ExtractionJob,
    ImageItem,
    extract_image_embeddings,
    extract_text_embeddings,
    generate_captions,
    read_listing,
)

__version__ = "0.1.0"
