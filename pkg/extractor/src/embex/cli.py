"""CLI entry points: ``extract images``, ``extract prompts``, ``caption``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .captioner import DEFAULT_PREFIX, BasicCaptioner
from .encoders import make_encoder
from .jobs import ExtractionJob, extract_image_embeddings, extract_text_embeddings, generate_captions, read_listing


def _extract_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extract", description="Embed images or prompt strings into .cemb files"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("images", help="embed a CSV listing (path,id,label) of images")
    p.add_argument("--list", required=True, dest="listing")
    p.add_argument("--out", required=True, help="output prefix (.cemb/.jsonl)")
    p.add_argument("--encoder", default="hash", help="'hash' or 'clip:<model-name>'")
    p.add_argument("--dim", type=int, default=512, help="dimension (hash encoder only)")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--device", default="cpu")
    p.add_argument(
        "--sc-template", default=None,
        help="fill captions.sc from the label, e.g. 'a photo that seems to express {}'",
    )
    p.add_argument("--synonyms", default=None, help="JSON map class -> synonym list for captions.ssc")

    p = sub.add_parser("prompts", help="embed a JSON array of prompts (strings or bank entries)")
    p.add_argument("--in", required=True, dest="infile")
    p.add_argument("--out", required=True)
    p.add_argument("--encoder", default="hash")
    p.add_argument("--dim", type=int, default=512)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--device", default="cpu")
    return parser


def extract_main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = _extract_parser().parse_args(argv)
    try:
        encoder = make_encoder(args.encoder, dim=args.dim, device=args.device)
        if args.command == "images":
            synonyms = {}
            if args.synonyms:
                with open(args.synonyms, "r", encoding="utf-8") as fh:
                    synonyms = json.load(fh)
            job = ExtractionJob(
                items=read_listing(args.listing),
                encoder=encoder,
                out_prefix=args.out,
                batch_size=args.batch_size,
                sc_template=args.sc_template,
                synonyms=synonyms,
            )
            n = extract_image_embeddings(job)
        else:
            with open(args.infile, "r", encoding="utf-8") as fh:
                prompts = json.load(fh)
            job = ExtractionJob(
                items=[], encoder=encoder, out_prefix=args.out, batch_size=args.batch_size
            )
            n = extract_text_embeddings(prompts, job)
        print(f"wrote {n} rows ({encoder.name}, dim {encoder.dim}) to {args.out}.cemb")
        return 0
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"extract: error: {exc}", file=sys.stderr)
        return 2


def caption_main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = argparse.ArgumentParser(
        prog="caption", description="Fill manifest ic captions for listed images"
    )
    parser.add_argument("--list", required=True, dest="listing")
    parser.add_argument("--manifest", required=True)
    parser.add_argument("--prefix", default=DEFAULT_PREFIX)
    args = parser.parse_args(argv)
    try:
        n = generate_captions(
            read_listing(args.listing), args.manifest, BasicCaptioner(prefix=args.prefix)
        )
        print(f"captioned {n} manifest records in {args.manifest}")
        return 0
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"caption: error: {exc}", file=sys.stderr)
        return 2


def extract_entry() -> None:
    raise SystemExit(extract_main())


def caption_entry() -> None:
    raise SystemExit(caption_main())
