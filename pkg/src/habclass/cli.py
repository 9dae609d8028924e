"""Command-line entry points for the habitat classification pipeline.

Subcommands cover the full workflow: ingest a labelled image directory into a
manifest, split it into stratified folds, train with cross-validation,
evaluate a saved checkpoint, and serve the inference API. Options may come
from a JSON config file (--config); explicit flags override config values,
which override built-in defaults. The effective configuration is echoed
before each run so logs record what actually happened.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import os
import sys
from pathlib import Path

from .balancing import BalanceConfig
from .errors import HabclassError
from .manifest import ingest_directory, load_manifest, save_manifest, write_skip_report
from .model import ClassifierConfig, load_checkpoint
from .preprocessing import AugmentConfig, PreprocessConfig, preprocess_eval
from .splitting import load_fold_assignment, save_fold_assignment, stratified_kfold_split
from .taxonomy import load_taxonomy
from .training import TrainingConfig, run_cross_validation

_CONFIG_KEYS = {
    "ingest": ["root", "manifest", "taxonomy", "metadata", "skip_report"],
    "split": ["manifest", "output", "folds", "seed"],
    "train": [
        "manifest", "splits", "taxonomy", "output", "folds", "seed", "backbone",
        "pretrained", "learning_rate", "weight_decay", "batch_size", "max_epochs",
        "patience", "balance_target", "device", "input_size", "dropout",
    ],
    "eval": ["predictions", "checkpoint", "images", "taxonomy", "output", "batch_size"],
    "serve": [
        "checkpoint", "taxonomy", "data_dir", "host", "port", "token",
        "max_upload_mb", "session_ttl",
    ],
}

# serve options may also come from the environment; precedence is
# flag > config file > environment > built-in default
_SERVE_ENV = {
    "checkpoint": "HABCLASS_CHECKPOINT",
    "taxonomy": "HABCLASS_TAXONOMY",
    "data_dir": "HABCLASS_DATA_DIR",
    "host": "HABCLASS_HOST",
    "port": "HABCLASS_PORT",
    "token": "HABCLASS_TOKEN",
    "max_upload_mb": "HABCLASS_MAX_UPLOAD_MB",
    "session_ttl": "HABCLASS_SESSION_TTL",
}
_SERVE_ENV_CAST = {"port": int, "max_upload_mb": float, "session_ttl": float}


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SystemExit(f"error: cannot read config {path!r}: {exc}")
    if not isinstance(payload, dict):
        raise SystemExit(f"error: config {path!r} must hold a JSON object")
    return payload


def _merge(args: argparse.Namespace, command: str) -> dict:
    """Resolve option values: explicit flag > config file > parser default."""
    config = _load_config_file(getattr(args, "config", None))
    unknown = set(config) - set(_CONFIG_KEYS[command])
    if unknown:
        raise SystemExit(
            f"error: config keys not recognised for {command!r}: "
            + ", ".join(sorted(unknown))
        )
    merged = {}
    for key in _CONFIG_KEYS[command]:
        if not hasattr(args, key):
            continue
        flag_value = getattr(args, key)
        default = _PARSER_DEFAULTS[command].get(key)
        if flag_value != default:
            merged[key] = flag_value
        elif key in config:
            merged[key] = config[key]
        elif command == "serve" and os.environ.get(_SERVE_ENV.get(key, "")):
            raw = os.environ[_SERVE_ENV[key]]
            try:
                merged[key] = _SERVE_ENV_CAST.get(key, str)(raw)
            except ValueError:
                raise SystemExit(
                    f"error: environment variable {_SERVE_ENV[key]}={raw!r} "
                    f"is not a valid value for {key}"
                )
        else:
            merged[key] = default
    return merged


def _echo(command: str, options: dict) -> None:
    print(f"habclass {command}")
    for key in sorted(options):
        print(f"  {key} = {options[key]!r}")


def _cmd_ingest(options: dict) -> int:
    taxonomy = load_taxonomy(options["taxonomy"])
    result = ingest_directory(options["root"], taxonomy, metadata=options["metadata"])
    save_manifest(result.manifest, options["manifest"])
    print(
        f"ingested {len(result.manifest.records)} images "
        f"across {len(result.manifest.per_class_counts)} classes"
    )
    if result.skipped:
        report_path = options["skip_report"] or (
            str(Path(options["manifest"]).with_suffix(".skipped.csv"))
        )
        write_skip_report(result.skipped, report_path)
        print(f"skipped {len(result.skipped)} unreadable files; see {report_path}")
    return 0


def _cmd_split(options: dict) -> int:
    manifest = load_manifest(options["manifest"])
    folds = stratified_kfold_split(manifest, options["folds"], options["seed"])
    save_fold_assignment(folds, options["output"])
    for i in range(folds.n_folds):
        print(f"fold {i}: {len(folds.validation_ids(i))} validation images")
    return 0


def _cmd_train(options: dict) -> int:
    manifest = load_manifest(options["manifest"])
    taxonomy = load_taxonomy(options["taxonomy"])
    folds = None
    if options["splits"]:
        folds = load_fold_assignment(options["splits"])
    stamp = dt.datetime.now(dt.timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    out_dir = Path(options["output"]) / f"run-{stamp}-seed{options['seed']}"
    out_dir.mkdir(parents=True, exist_ok=True)
    print(f"run directory: {out_dir}")

    result = run_cross_validation(
        manifest,
        taxonomy,
        folds=folds,
        n_folds=options["folds"],
        pre_config=PreprocessConfig(target_size=options["input_size"]),
        aug_config=AugmentConfig(seed=options["seed"]),
        balance_config=BalanceConfig(
            target_per_class=options["balance_target"], seed=options["seed"]
        ),
        model_config=ClassifierConfig(
            n_classes=len(taxonomy),
            dropout_rate=options["dropout"],
            backbone=options["backbone"],
            pretrained=options["pretrained"],
            input_size=options["input_size"],
        ),
        train_config=TrainingConfig(
            learning_rate=options["learning_rate"],
            weight_decay=options["weight_decay"],
            batch_size=options["batch_size"],
            max_epochs=options["max_epochs"],
            early_stop_patience=options["patience"],
            seed=options["seed"],
            device=options["device"],
        ),
        out_dir=out_dir,
    )
    report_path = out_dir / "cross_validation.json"
    report_path.write_text(
        json.dumps(
            {
                "folds": [r.to_dict() for r in result.reports],
                "mean": result.aggregate.mean.to_dict(),
                "std": result.aggregate.std.to_dict(),
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    for fold_result in result.fold_results:
        print(
            f"fold {fold_result.fold}: best epoch {fold_result.best_epoch}, "
            f"val accuracy {fold_result.best_val_accuracy:.4f}"
        )
    mean = result.aggregate.mean
    print(
        f"mean over {result.aggregate.n_folds} folds: "
        f"top1 {mean.top1_accuracy:.4f}, top3 {mean.top3_accuracy:.4f}, "
        f"f1 {mean.mean_f1:.4f}"
    )
    print(f"wrote {report_path}")
    return 0


def _eval_records_from_images(options: dict, taxonomy_arg) -> tuple[list, object]:
    """Run a checkpoint over a class-per-subdirectory image tree."""
    import torch
    from PIL import Image

    from .evaluation import make_prediction_record
    from .manifest import IMAGE_EXTENSIONS
    from .model import predict_logits

    checkpoint = load_checkpoint(options["checkpoint"], taxonomy=taxonomy_arg)
    taxonomy = taxonomy_arg
    if taxonomy is None:
        from .service import _taxonomy_from_checkpoint

        taxonomy = _taxonomy_from_checkpoint(checkpoint)
    pre_config = PreprocessConfig(target_size=checkpoint.config.input_size)

    root = Path(options["images"])
    pairs: list[tuple[str, str, Path]] = []
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        if class_dir.name not in taxonomy:
            raise SystemExit(
                f"error: directory {class_dir.name!r} is not a known class abbreviation"
            )
        for path in sorted(class_dir.iterdir()):
            if path.suffix.lower() in IMAGE_EXTENSIONS:
                pairs.append((f"{class_dir.name}/{path.name}", class_dir.name, path))
    if not pairs:
        raise SystemExit(f"error: no images found under {root}")

    records = []
    batch_size = options["batch_size"]
    for start in range(0, len(pairs), batch_size):
        chunk = pairs[start : start + batch_size]
        tensors = []
        for _, _, path in chunk:
            with Image.open(path) as im:
                tensors.append(preprocess_eval(im.convert("RGB"), pre_config))
        logits = predict_logits(checkpoint.classifier, torch.stack(tensors))
        probs = torch.softmax(logits, dim=1)
        for (image_id, label, _), row in zip(chunk, probs):
            records.append(
                make_prediction_record(image_id, label, row.tolist(), taxonomy)
            )
    return records, taxonomy


def _cmd_eval(options: dict) -> int:
    from .evaluation import (
        compute_metrics_report,
        confusion_matrix,
        export_prediction_log,
        import_prediction_log,
        plot_confusion_matrix,
        render_metrics_table,
    )

    taxonomy = load_taxonomy(options["taxonomy"]) if options["taxonomy"] else None
    wrote_predictions = False
    if options["predictions"]:
        records = import_prediction_log(options["predictions"])
        if taxonomy is None:
            taxonomy = load_taxonomy(None)
    elif options["checkpoint"] and options["images"]:
        records, taxonomy = _eval_records_from_images(options, taxonomy)
        wrote_predictions = True
    else:
        raise SystemExit(
            "error: eval needs either --predictions, or --checkpoint with --images"
        )

    report = compute_metrics_report(records, taxonomy)
    out_dir = Path(options["output"])
    out_dir.mkdir(parents=True, exist_ok=True)
    if wrote_predictions:
        export_prediction_log(records, out_dir / "predictions.jsonl")
    (out_dir / "metrics.json").write_text(
        json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    cm = confusion_matrix(records, taxonomy)
    plot_confusion_matrix(cm, out_dir / "confusion_matrix.png")
    print(render_metrics_table(report))
    print(f"wrote metrics and confusion matrix to {out_dir}")
    return 0


def _cmd_serve(options: dict) -> int:
    from .service import ServiceConfig, run_service

    config = ServiceConfig(
        checkpoint_path=options["checkpoint"],
        taxonomy_path=options["taxonomy"],
        data_dir=options["data_dir"],
        max_upload_bytes=int(options["max_upload_mb"] * 1024 * 1024),
        session_ttl_seconds=options["session_ttl"],
        auth_token=options["token"],
    )
    run_service(config, host=options["host"], port=options["port"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="habclass", description="habitat image classification pipeline"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a manifest from a labelled directory")
    p.add_argument("--config", help="JSON file with option defaults")
    p.add_argument("--root", help="directory of class-named subdirectories")
    p.add_argument("--manifest", default="manifest.jsonl", help="output manifest path")
    p.add_argument("--taxonomy", default=None, help="taxonomy JSON (default: built-in)")
    p.add_argument("--metadata", default=None, help="CSV of per-image capture metadata")
    p.add_argument("--skip-report", dest="skip_report", default=None)

    p = sub.add_parser("split", help="assign manifest images to stratified folds")
    p.add_argument("--config", help="JSON file with option defaults")
    p.add_argument("--manifest", default="manifest.jsonl")
    p.add_argument("--output", default="folds.json")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train classifiers with cross-validation")
    p.add_argument("--config", help="JSON file with option defaults")
    p.add_argument("--manifest", default="manifest.jsonl")
    p.add_argument("--splits", default=None, help="fold assignment JSON (default: derive)")
    p.add_argument("--taxonomy", default=None)
    p.add_argument("--output", default="runs")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backbone", default="deeplabv3_resnet101")
    p.add_argument("--no-pretrained", dest="pretrained", action="store_false")
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=1e-4)
    p.add_argument("--weight-decay", dest="weight_decay", type=float, default=1e-4)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=16)
    p.add_argument("--max-epochs", dest="max_epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=7)
    p.add_argument("--balance-target", dest="balance_target", type=int, default=1000)
    p.add_argument("--device", default=None)
    p.add_argument("--input-size", dest="input_size", type=int, default=224)
    p.add_argument("--dropout", type=float, default=0.5)

    p = sub.add_parser(
        "eval", help="report metrics from a prediction log or a checkpoint + images"
    )
    p.add_argument("--config", help="JSON file with option defaults")
    p.add_argument("--predictions", default=None, help="existing prediction log (JSONL)")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--images", default=None, help="directory of class-named subdirectories")
    p.add_argument("--taxonomy", default=None)
    p.add_argument("--output", default="eval_out")
    p.add_argument("--batch-size", dest="batch_size", type=int, default=16)

    p = sub.add_parser("serve", help="run the inference HTTP service")
    p.add_argument("--config", help="JSON file with option defaults")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--taxonomy", default=None)
    p.add_argument("--data-dir", dest="data_dir", default="service_data")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--token", default=None, help="require this bearer token")
    p.add_argument("--max-upload-mb", dest="max_upload_mb", type=float, default=20.0)
    p.add_argument("--session-ttl", dest="session_ttl", type=float, default=3600.0)
    return parser


def _parser_defaults() -> dict[str, dict]:
    parser = build_parser()
    defaults: dict[str, dict] = {}
    # argparse keeps subparser actions inside the _SubParsersAction
    sub_action = next(
        a for a in parser._actions if isinstance(a, argparse._SubParsersAction)
    )
    for name, sub in sub_action.choices.items():
        defaults[name] = {
            a.dest: a.default for a in sub._actions if a.dest != "help"
        }
    return defaults


_PARSER_DEFAULTS = _parser_defaults()

_HANDLERS = {
    "ingest": _cmd_ingest,
    "split": _cmd_split,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    options = _merge(args, args.command)
    if args.command == "ingest" and not options.get("root"):
        parser.error("ingest requires --root (flag or config)")
    _echo(args.command, options)
    try:
        return _HANDLERS[args.command](options)
    except HabclassError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
