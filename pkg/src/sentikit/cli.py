"""Command-line entry point.

Subcommands: synth, train, eval (single or grid), zeroshot, baseline,
ablate. Every command with a --seed flag is bit-reproducible given
identical inputs, and every run directory gets a manifest (resolved
config, input hashes, seed, version, timestamps) sufficient to re-execute
it. Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .dataio import (
    CaptionStore,
    load_prompt_bank,
    read_embeddings,
    split_dataset,
    synth_dataset,
    write_embeddings,
    write_prompt_bank,
    PromptEntry,
)
from .errors import DataError, NumericError
from .evalkit import (
    EvalTarget,
    ModelSpec,
    ablation_run,
    aggregate_accuracies,
    as_percent,
    baseline_accuracy,
    evaluate,
    run_grid,
    ABLATION_SUBSETS,
)
from .heads import load_model, save_model
from .inference import classify_ce_batch, classify_contrastive_batch, classify_zeroshot_batch, predictions_to_jsonl
from .taxonomy import default_taxonomy, expand_prompts, load_taxonomy
from .trainer import TrainConfig, train, write_epoch_logs

USAGE_EXIT = 1
DATA_EXIT = 2
NUMERIC_EXIT = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(USAGE_EXIT)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _hash_inputs(paths) -> dict[str, str]:
    hashes = {}
    for p in paths:
        if p is None:
            continue
        p = Path(p)
        candidates = [p] if p.exists() else [p.with_suffix(".cemb"), p.with_suffix(".jsonl")]
        for c in candidates:
            if c.exists() and c.is_file():
                hashes[str(c)] = _sha256(c)
    return hashes


def _write_manifest(out_dir: Path, command: str, args_ns, inputs, started: str) -> None:
    manifest = {
        "tool": "sentikit",
        "version": __version__,
        "command": command,
        "config": {k: v for k, v in sorted(vars(args_ns).items()) if k != "func"},
        "inputs": _hash_inputs(inputs),
        "seed": getattr(args_ns, "seed", None),
        "started_at": started,
        "finished_at": _now(),
    }
    with open(out_dir / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _load_tax(path):
    return load_taxonomy(path) if path else default_taxonomy()


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_levels(raw: str) -> list[int]:
    try:
        levels = [int(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise DataError(f"bad level list {raw!r}")
    for level in levels:
        if level not in (2, 6, 25):
            raise DataError(f"unsupported level {level}")
    return levels


def cmd_synth(args) -> int:
    started = _now()
    tax = _load_tax(args.taxonomy)
    try:
        k = int(args.classes)
        classes = list(tax.fine_classes[:k])
        if len(classes) < k:
            raise DataError(f"taxonomy has only {len(tax.fine_classes)} fine classes")
    except ValueError:
        classes = [c.strip() for c in args.classes.split(",") if c.strip()]
    images, prompts = synth_dataset(
        n_per_class=args.per_class,
        classes=classes,
        dim=args.dim,
        separation=args.separation,
        seed=args.seed,
        noise=args.noise,
        template=tax.prompt_template,
    )
    out = _out_dir(args.out)
    if args.split:
        fractions = [float(x) for x in args.split.split(",") if x.strip()]
        names = ["train", "val", "test"][: len(fractions)]
        for name, part in zip(names, split_dataset(images, fractions, args.seed)):
            write_embeddings(part, out / f"images_{name}")
    write_embeddings(images, out / "images")
    write_embeddings(prompts, out / "prompts")
    write_prompt_bank(
        [PromptEntry(prompt=rec.id, cls=rec.label) for rec in prompts.manifest],
        out / "bank.json",
    )
    _write_manifest(out, "synth", args, [args.taxonomy], started)
    print(f"wrote {len(images)} images / {len(prompts)} prompts to {out}")
    return 0


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        head=args.head,
        epochs=args.epochs,
        lr=args.lr,
        batch_size=args.batch_size,
        caption_types=tuple(args.caption_types.split(",")),
        patience=args.patience,
        lr_factor=args.lr_factor,
        seed=args.seed,
        early_stop=not args.no_early_stop,
        temperature=args.temperature,
        hidden=args.hidden,
        expand_captions=args.expand_captions,
    )


def cmd_train(args) -> int:
    started = _now()
    tax = load_taxonomy(args.taxonomy)
    train_ds = read_embeddings(args.train)
    if args.val:
        val_ds = read_embeddings(args.val)
    else:
        train_ds, val_ds = split_dataset(
            train_ds, [1.0 - args.val_fraction, args.val_fraction], args.seed
        )
    store = None
    if args.head == "contrastive":
        if not args.captions_emb:
            raise DataError("contrastive training needs --captions-emb")
        store = CaptionStore.from_dataset(read_embeddings(args.captions_emb))
    cfg = _train_config(args)

    out = _out_dir(args.out)
    snapshot_dir = None
    if args.save_epoch_snapshots:
        snapshot_dir = out / "snapshots"
        snapshot_dir.mkdir(exist_ok=True)

    head, logs = train(train_ds, val_ds, store, cfg, tax)
    save_model(head, out / "model.head")
    write_epoch_logs(logs, out / "epochs.jsonl")
    if snapshot_dir is not None:
        # Re-run deterministically epoch by epoch to export snapshots.
        for upto in range(1, len(logs) + 1):
            cfg_i = TrainConfig(**{**cfg.__dict__, "epochs": upto, "early_stop": False})
            head_i, _ = train(train_ds, val_ds, store, cfg_i, tax)
            save_model(head_i, snapshot_dir / f"model_epoch_{upto:03d}.head")
    _write_manifest(
        out, "train", args, [args.train, args.val, args.taxonomy, args.captions_emb], started
    )
    final = logs[-1] if logs else None
    if final:
        print(
            f"trained {args.head} head: {len(logs)} epochs, "
            f"best val loss {min(l.val_loss for l in logs):.6f}, model at {out / 'model.head'}"
        )
    else:
        print(f"trained {args.head} head: 0 epochs (initialization only)")
    return 0


def _write_report(report, out: Path, predictions=None, ids=None) -> None:
    report.write_json(out / "report.json")
    report.confusion.write_csv(out / "confusion.csv")
    if predictions is not None:
        predictions_to_jsonl(predictions, ids, out / "predictions.jsonl")


def cmd_eval(args) -> int:
    started = _now()
    if args.grid:
        return _eval_grid(args, started)
    for required in ("model", "images", "taxonomy"):
        if getattr(args, required) is None:
            raise DataError(f"--{required} is required in single-eval mode")
    tax = load_taxonomy(args.taxonomy)
    ds = read_embeddings(args.images)
    labels = [rec.label for rec in ds.manifest]
    if any(label is None for label in labels):
        raise DataError("evaluation dataset has unlabeled rows")
    head = load_model(args.model)
    if head.kind == "ce":
        preds = classify_ce_batch(head, ds.vectors, tax)
    else:
        if not (args.bank and args.bank_emb):
            raise DataError("a contrastive model needs --bank and --bank-emb")
        bank = load_prompt_bank(args.bank, args.bank_emb, tax)
        preds = classify_contrastive_batch(head, ds.vectors, bank, tax)
    report = evaluate(
        preds, labels, tax, level=args.level,
        dataset=str(args.images), model=str(args.model),
    )
    out = _out_dir(args.out)
    _write_report(report, out, preds, [rec.id for rec in ds.manifest])
    _write_manifest(
        out, "eval", args, [args.model, args.images, args.taxonomy, args.bank, args.bank_emb],
        started,
    )
    print(f"accuracy@{args.level}: {as_percent(report.accuracy)} ({report.n_samples} samples)")
    return 0


def _eval_grid(args, started: str) -> int:
    with open(args.grid, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    taxonomies: dict[str, object] = {}

    def tax_for(path):
        if path not in taxonomies:
            taxonomies[path] = load_taxonomy(path) if path else default_taxonomy()
        return taxonomies[path]

    models = []
    for m in spec.get("models", []):
        kind = m.get("kind")
        if kind == "zeroshot":
            models.append(ModelSpec(name=m["name"], kind="zeroshot"))
            continue
        head = load_model(m["model"])
        models.append(
            ModelSpec(
                name=m["name"], kind=kind, head=head, taxonomy=tax_for(m.get("taxonomy")),
            )
        )
    targets = []
    for t in spec.get("targets", []):
        tax = tax_for(t.get("taxonomy"))
        bank = None
        if t.get("bank"):
            bank = load_prompt_bank(t["bank"], t["bank_emb"], tax)
        targets.append(
            EvalTarget(
                name=t["name"],
                dataset=read_embeddings(t["images"]),
                taxonomy=tax,
                level=int(t.get("level", 25)),
                bank=bank,
            )
        )
    grid = run_grid(models, targets)
    out = _out_dir(args.out)
    grid.write_csv(out / "grid.csv")
    grid.write_json(out / "grid.json")
    _write_manifest(out, "eval-grid", args, [args.grid], started)
    for model in grid.models:
        cells = ", ".join(f"{t}={grid.cell(model, t)}" for t in grid.targets)
        print(f"{model}: {cells}")
    return 0


def cmd_zeroshot(args) -> int:
    started = _now()
    tax = _load_tax(args.taxonomy)
    ds = read_embeddings(args.images)
    labels = [rec.label for rec in ds.manifest]
    bank = load_prompt_bank(args.bank, args.bank_emb, tax)
    preds = classify_zeroshot_batch(ds.vectors, bank, tax)
    out = _out_dir(args.out)
    if all(label is not None for label in labels):
        report = evaluate(
            preds, labels, tax, level=args.level,
            dataset=str(args.images), model="zeroshot",
        )
        _write_report(report, out, preds, [rec.id for rec in ds.manifest])
        print(f"zeroshot accuracy@{args.level}: {as_percent(report.accuracy)}")
    else:
        predictions_to_jsonl(preds, [rec.id for rec in ds.manifest], out / "predictions.jsonl")
        print(f"wrote predictions for {len(preds)} unlabeled images")
    _write_manifest(
        out, "zeroshot", args, [args.images, args.bank, args.bank_emb, args.taxonomy], started
    )
    return 0


def cmd_prompts(args) -> int:
    tax = _load_tax(args.taxonomy)
    pairs = expand_prompts(tax, include_synonyms=args.include_synonyms)
    write_prompt_bank([PromptEntry(prompt=p, cls=c) for p, c in pairs], args.out)
    print(f"wrote {len(pairs)} prompts to {args.out}")
    return 0


def cmd_baseline(args) -> int:
    tax = _load_tax(args.taxonomy)
    ds = read_embeddings(args.images)
    labels = [rec.label for rec in ds.manifest]
    if any(label is None for label in labels):
        raise DataError("baseline needs labeled rows")
    acc = baseline_accuracy(labels, tax, args.level, args.kind, seed=args.seed)
    print(
        json.dumps(
            {
                "kind": args.kind,
                "level": args.level,
                "n_samples": len(labels),
                "accuracy": acc,
                "percent": as_percent(acc),
            }
        )
    )
    return 0


def cmd_ablate(args) -> int:
    started = _now()
    tax = load_taxonomy(args.taxonomy)
    train_ds = read_embeddings(args.train)
    val_ds = read_embeddings(args.val)
    test_ds = read_embeddings(args.test)
    store = CaptionStore.from_dataset(read_embeddings(args.captions_emb))
    bank = load_prompt_bank(args.bank, args.bank_emb, tax)
    subsets = tuple(
        tuple(part.split(",")) for part in args.subsets.split("|") if part
    ) if args.subsets else ABLATION_SUBSETS
    levels = _parse_levels(args.levels)
    targets = [
        EvalTarget(name=f"test@{level}", dataset=test_ds, taxonomy=tax, level=level, bank=bank)
        for level in levels
    ]
    cfg = _train_config(args)
    out = _out_dir(args.out)

    grids = []
    for offset in range(max(1, args.repeat)):
        cfg_i = TrainConfig(**{**cfg.__dict__, "seed": cfg.seed + offset})
        grids.append(ablation_run(train_ds, val_ds, store, cfg_i, tax, targets, subsets=subsets))
    grid = grids[0]
    grid.write_csv(out / "ablation.csv")
    grid.write_json(out / "ablation.json")
    if len(grids) > 1:
        # Mean +/- sd per cell across seeded repeats.
        aggregate = {}
        for model in grid.models:
            for target in grid.targets:
                accs = [
                    g.results[(model, target)].report.accuracy
                    for g in grids
                    if g.results[(model, target)].status == "ok"
                ]
                key = f"{model}::{target}"
                aggregate[key] = aggregate_accuracies(accs) if accs else {"status": "X"}
        with open(out / "ablation_aggregate.json", "w", encoding="utf-8") as fh:
            json.dump(aggregate, fh, indent=2)
            fh.write("\n")
    _write_manifest(
        out, "ablate", args,
        [args.train, args.val, args.test, args.captions_emb, args.bank, args.bank_emb,
         args.taxonomy],
        started,
    )
    for model in grid.models:
        cells = ", ".join(f"{t}={grid.cell(model, t)}" for t in grid.targets)
        print(f"{model}: {cells}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="sentikit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"sentikit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a deterministic synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", default="3", help="class count or comma-separated fine-class names")
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--dim", type=int, default=512)
    p.add_argument("--separation", type=float, default=4.0)
    p.add_argument("--noise", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--taxonomy", default=None)
    p.add_argument("--split", default=None, help="fractions like 0.7,0.15,0.15")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a head on embedding files")
    p.add_argument("--head", choices=("ce", "contrastive"), required=True)
    p.add_argument("--train", required=True, help="embedding prefix (.cemb/.jsonl)")
    p.add_argument("--val", default=None)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--captions-emb", default=None, help="caption embeddings keyed by id")
    p.add_argument("--caption-types", default="sc")
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--patience", type=int, default=2)
    p.add_argument("--lr-factor", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--hidden", type=int, default=512)
    p.add_argument("--no-early-stop", action="store_true")
    p.add_argument("--expand-captions", action="store_true")
    p.add_argument("--save-epoch-snapshots", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model (single or grid)")
    p.add_argument("--model", default=None)
    p.add_argument("--images", default=None)
    p.add_argument("--taxonomy", default=None)
    p.add_argument("--level", type=int, choices=(2, 6, 25), default=25)
    p.add_argument("--bank", default=None)
    p.add_argument("--bank-emb", default=None)
    p.add_argument("--grid", default=None, help="grid spec JSON (models x targets)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("zeroshot", help="prompt-bank classification without a head")
    p.add_argument("--images", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--bank-emb", required=True)
    p.add_argument("--taxonomy", default=None)
    p.add_argument("--level", type=int, choices=(2, 6, 25), default=25)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_zeroshot)

    p = sub.add_parser("prompts", help="write a prompt-bank JSON from a taxonomy")
    p.add_argument("--taxonomy", default=None)
    p.add_argument("--include-synonyms", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prompts)

    p = sub.add_parser("baseline", help="analytic random / majority baselines")
    p.add_argument("--images", required=True)
    p.add_argument("--taxonomy", default=None)
    p.add_argument("--level", type=int, choices=(2, 6, 25), default=25)
    p.add_argument("--kind", choices=("random", "majority"), required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("ablate", help="caption-type ablation grid")
    p.add_argument("--head", default="contrastive", choices=("contrastive",))
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--captions-emb", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--bank-emb", required=True)
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--subsets", default=None, help="e.g. 'sc|ic|sc,ic|sc,ssc|sc,ic,ssc'")
    p.add_argument("--levels", default="2,6,25")
    p.add_argument("--caption-types", default="sc")
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--patience", type=int, default=2)
    p.add_argument("--lr-factor", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--hidden", type=int, default=512)
    p.add_argument("--no-early-stop", action="store_true")
    p.add_argument("--expand-captions", action="store_true")
    p.add_argument("--repeat", type=int, default=1,
                   help="train each subset with this many consecutive seeds and aggregate mean/sd")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"sentikit: numeric failure: {exc}", file=sys.stderr)
        return NUMERIC_EXIT
    except (DataError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"sentikit: error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except ValueError as exc:
        print(f"sentikit: error: {exc}", file=sys.stderr)
        return DATA_EXIT


def entrypoint() -> None:
    raise SystemExit(main())
