"""Command-line entry point.

Subcommands: audit, train, eval, predict, overlay, report.  Exit codes are
stable and scriptable: 0 success, 2 usage (bad flags/arguments), 3 data
problems (datasets, config files, spec files, reports), 4 checkpoint/
architecture compatibility failures.

Config files are flat ``key=value`` text (``#`` comments allowed); any
value may be overridden by the matching command-line flag, and the fully
resolved configuration is written next to the outputs of every training
run so results stay attributable.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import engine
from .data import (
    DEFAULT_THRESHOLD,
    DataError,
    DatasetManifest,
    load_drishti,
    load_rimone,
    load_split,
    save_labelmap,
    split,
)
from .engine import CompatibilityError, TrainConfig
from .metrics import compute_cdr
from .netspec import SpecError, TensorShape, default_network_spec, infer_shapes, load_spec
from .netspec import audit_against_tables
from .overlay import save_panel, three_panel

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_COMPAT = 4

CONFIG_DEFAULTS = {
    "epochs": 100,
    "batch_size": 2,
    "learning_rate": 1e-3,
    "lr_decay": 0.95,
    "seed": 0,
    "skip_mode": "concat",
    "augmentation": False,
    "early_stop_patience": 10,
    "side": 640,
    "threshold": DEFAULT_THRESHOLD,
    "iterations": 200,
    "val_fraction": 0.1,
}

_BOOL_KEYS = {"augmentation"}
_INT_KEYS = {"epochs", "batch_size", "seed", "early_stop_patience", "side", "iterations"}
_FLOAT_KEYS = {"learning_rate", "lr_decay", "threshold", "val_fraction"}


@dataclass(frozen=True)
class CliConfig:
    """Validated per-invocation settings assembled from flags + config file."""

    subcommand: str
    dataset_root: str | None = None
    manifest_path: str | None = None
    config_path: str | None = None
    checkpoint_path: str | None = None
    out_dir: str | None = None
    seed: int | None = None
    skip_mode: str | None = None


def parse_config_file(path) -> dict:
    """Flat key=value config; unknown keys and bad values are data errors."""
    values = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as err:
        raise DataError(f"cannot read config {path}: {err}") from err
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_DEFAULTS:
            raise DataError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            if key in _BOOL_KEYS:
                if value.lower() not in ("true", "false", "1", "0"):
                    raise ValueError(value)
                values[key] = value.lower() in ("true", "1")
            elif key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_KEYS:
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError as err:
            raise DataError(f"{path}:{lineno}: bad value for {key}: {value!r}") from err
    return values


def resolve_config(args) -> dict:
    cfg = dict(CONFIG_DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(parse_config_file(args.config))
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "skip_mode", None):
        cfg["skip_mode"] = args.skip_mode
    return cfg


def write_resolved_config(cfg: dict, out_dir: str) -> None:
    path = os.path.join(out_dir, "resolved.cfg")
    with open(path, "w") as fh:
        for key in sorted(cfg):
            fh.write(f"{key}={cfg[key]}\n")


def _load_dataset(root: str) -> DatasetManifest:
    """Pick the loader from the directory layout."""
    if not os.path.isdir(root):
        raise DataError(f"dataset root {root!r} is not a directory")
    if os.path.isdir(os.path.join(root, "images")) and os.path.isdir(os.path.join(root, "gt")):
        return load_drishti(root)
    if os.path.isdir(os.path.join(root, "healthy")) or os.path.isdir(os.path.join(root, "glaucoma")):
        return load_rimone(root)
    raise DataError(f"dataset root {root!r} matches no supported layout")


def _prepare_manifest(args, cfg: dict) -> DatasetManifest:
    """Load (or build) a split manifest for train/eval/overlay."""
    if getattr(args, "manifest", None):
        return DatasetManifest.load(args.manifest, root=args.dataset_root)
    manifest = _load_dataset(args.dataset_root)
    if manifest.source == "drishti":
        ratios = (0.5, 0.0, 0.5)  # the dataset's conventional 50/51 split
    else:
        ratios = (0.7, 0.0, 0.3)
    return split(manifest, ratios, seed=cfg["seed"])


def _carve_validation(manifest: DatasetManifest, fraction: float, seed: int) -> DatasetManifest:
    """Move a deterministic slice of train records to val when val is empty."""
    if manifest.subset("val") or fraction <= 0:
        return manifest
    train_ids = sorted(r.id for r in manifest.subset("train"))
    n_val = int(len(train_ids) * fraction)
    if n_val == 0:
        return manifest
    rng = np.random.default_rng(seed)
    chosen = set(rng.permutation(train_ids)[:n_val].tolist())
    records = [
        r if r.id not in chosen else type(r)(
            r.id, r.image_path, r.disc_path, r.cup_path, r.diagnosis, "val"
        )
        for r in manifest.records
    ]
    return DatasetManifest(
        manifest.source, manifest.root, records, manifest.seed, manifest.ratios,
        list(manifest.skipped),
    )


# --------------------------------------------------------------------------
# subcommands

def cmd_audit(args) -> int:
    if args.spec:
        try:
            spec = load_spec(args.spec)
        except OSError as err:
            raise DataError(f"cannot read spec {args.spec}: {err}") from err
    else:
        spec = default_network_spec(skip_mode=args.skip_mode)
    audit = audit_against_tables(spec)
    print(audit.format())
    print("shape trace:")
    print(infer_shapes(spec).format())
    return EXIT_OK if not audit.mismatches else 1


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    manifest = _prepare_manifest(args, cfg)
    manifest = _carve_validation(manifest, cfg["val_fraction"], cfg["seed"])
    side, threshold = cfg["side"], cfg["threshold"]
    spec = default_network_spec(TensorShape(side, side, 3), skip_mode=cfg["skip_mode"])

    os.makedirs(args.out, exist_ok=True)
    cache_dir = os.path.join(args.out, "cache")

    if args.overfit_one:
        sample = None
        for record in manifest.records:
            if record.id == args.overfit_one:
                from .data import load_sample

                sample = load_sample(manifest, record, side, threshold, cache_dir)
                break
        if sample is None:
            raise DataError(f"id {args.overfit_one!r} not in dataset")
        trace = engine.overfit_single(
            spec, sample, cfg["iterations"], cfg["learning_rate"], cfg["seed"], log=print
        )
        write_resolved_config(cfg, args.out)
        with open(os.path.join(args.out, f"overfit_{sample.id}.txt"), "w") as fh:
            fh.write("# iteration loss dice_od dice_oc\n")
            for i, (lo, od, oc) in enumerate(zip(trace.losses, trace.dice_od, trace.dice_oc), 1):
                fh.write(f"{i} {lo!r} {od!r} {oc!r}\n")
        print(f"final dice od {trace.dice_od[-1]:.4f} oc {trace.dice_oc[-1]:.4f}")
        return EXIT_OK

    train_conf = TrainConfig(
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        learning_rate=cfg["learning_rate"],
        lr_decay=cfg["lr_decay"],
        seed=cfg["seed"],
        skip_mode=cfg["skip_mode"],
        augmentation=cfg["augmentation"],
        early_stop_patience=cfg["early_stop_patience"],
    )
    train_samples = load_split(manifest, "train", side, threshold, cache_dir)
    val_samples = load_split(manifest, "val", side, threshold, cache_dir)
    if not train_samples:
        raise DataError("train split is empty")

    ckpt, history = engine.train(spec, train_samples, val_samples, train_conf, log=print)
    engine.save_checkpoint(ckpt, os.path.join(args.out, "checkpoint.pt"))
    with open(os.path.join(args.out, "history.txt"), "w") as fh:
        fh.write(engine.history_to_text(history))
    manifest.save(os.path.join(args.out, "manifest.txt"))
    write_resolved_config(cfg, args.out)
    print(f"checkpoint at epoch {ckpt['epoch']}: {ckpt['metrics']}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    net, meta = engine.load_checkpoint(args.checkpoint)
    side = net.spec.input_shape.height
    manifest = _prepare_manifest(args, cfg)
    records = manifest.subset(args.split)
    if not records:
        raise DataError(f"split {args.split!r} is empty")
    samples = load_split(manifest, args.split, side, cfg["threshold"])
    report = engine.evaluate(net, samples)
    report.verify()

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "report.csv"), "w") as fh:
        fh.write(report.to_csv_text())
    table = report.to_table_text()
    with open(os.path.join(args.out, "report_table.txt"), "w") as fh:
        fh.write(table)
    print(table, end="")
    return EXIT_OK


def cmd_predict(args) -> int:
    net, _ = engine.load_checkpoint(args.checkpoint)
    try:
        from PIL import Image

        with Image.open(args.image) as im:
            image = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except OSError as err:
        raise DataError(f"cannot read image {args.image}: {err}") from err

    pred = engine.predict(net, image)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.image))[0]
    mask_path = os.path.join(out_dir, f"{stem}_mask.png")
    labels = pred.source_labels if pred.source_labels is not None else pred.labels
    save_labelmap(labels, mask_path)
    print(f"mask written to {mask_path}")
    if pred.cdr.cdr is None:
        print("no disc detected")
    else:
        print(f"cdr {pred.cdr.cdr:.4f} screen_positive {pred.cdr.screen_positive}")
    return EXIT_OK


def cmd_overlay(args) -> int:
    cfg = resolve_config(args)
    net, _ = engine.load_checkpoint(args.checkpoint)
    manifest = _prepare_manifest(args, cfg)
    ids = [s for s in args.ids.split(",") if s]
    known = set(manifest.ids())
    unknown = [s for s in ids if s not in known]
    if unknown:
        raise DataError(f"unknown id(s): {', '.join(unknown)}")

    from .data import load_sample

    os.makedirs(args.out, exist_ok=True)
    for sid in ids:
        sample = load_sample(manifest, sid, side=None, threshold=cfg["threshold"])
        pred = engine.predict(net, sample.image)
        pred_labels = pred.source_labels if pred.source_labels is not None else pred.labels
        panel = three_panel(sample.image, sample.labels, pred_labels)
        save_panel(panel, os.path.join(args.out, f"overlay_{sid}.png"))
        print(f"overlay_{sid}.png")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        with open(args.report) as fh:
            report = engine.EvalReport.from_csv_text(fh.read())
    except OSError as err:
        raise DataError(f"cannot read report {args.report}: {err}") from err
    except ValueError as err:
        raise DataError(f"malformed report {args.report}: {err}") from err
    try:
        report.verify()
    except ValueError as err:
        raise DataError(f"inconsistent report: {err}") from err
    print(report.to_table_text(), end="")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument wiring

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cupdisc",
        description="Joint optic cup / disc segmentation: train, evaluate, audit.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("audit", help="check layer parameter counts against the reference table")
    p.add_argument("--spec", help="architecture spec file (default: built-in architecture)")
    p.add_argument("--skip-mode", choices=("concat", "add"), default="add")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("train", help="train on a dataset tree")
    p.add_argument("--dataset-root", required=True)
    p.add_argument("--manifest", help="existing split manifest to reuse")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--skip-mode", choices=("concat", "add"))
    p.add_argument("--overfit-one", metavar="ID", help="run the single-sample sanity probe")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset-root", required=True)
    p.add_argument("--manifest")
    p.add_argument("--config")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="segment one image and report its cup-to-disc ratio")
    p.add_argument("image", help="path to a fundus image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", help="output directory (default: current)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("overlay", help="write original|truth|prediction panels")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset-root", required=True)
    p.add_argument("--manifest")
    p.add_argument("--config")
    p.add_argument("--ids", required=True, help="comma-separated sample ids")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_overlay)

    p = sub.add_parser("report", help="re-render and consistency-check an evaluation report")
    p.add_argument("report", help="per-image report.csv from eval")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    except SpecError as err:
        print(f"error: invalid spec: {err}", file=sys.stderr)
        return EXIT_DATA
    except CompatibilityError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_COMPAT
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
