"""Command-line entry point.

Subcommands: ingest, fit-schema, train, evaluate, ablate, importance,
predict, synth.  Training flags mirror the TrainConfig field names exactly.
Values resolve as: command-line flag, then config-file entry, then the
built-in default; the only environment variable consulted is
``GLARISK_VERBOSE``.

Config files use INI sections per module::

    [paths]
    records = data/records.txt
    text_embeddings = data/text.glaemb
    image_embeddings = data/image.glaemb
    schema = out/schema.json
    model = out/model.json
    bounds = catalogs/bounds.tsv

    [train]
    learning_rate = 0.05
    n_estimators = 100

    [split]
    val_fraction = 0.2
    seed = 42
    stratify = true

    [mask]
    mask = all

Exit codes: 0 success; 2 usage; 3 record/table parse errors; 4 schema or
encoding errors; 5 embedding-file errors; 6 training errors; 7 model-file
errors; 8 evaluation input errors; 9 ablation grid completed with at least
one failed row.  Diagnostics go to stderr; data goes to stdout.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from dataclasses import fields as dataclass_fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import synth as synth_mod
from .boosting import (
    TrainConfig,
    load_model,
    predict_contributions,
    predict_proba,
    save_model,
    train,
)
from .embeddings import read_embedding_table
from .errors import GlaRiskError
from .evaluation import (
    compute_metrics,
    format_ablation_table,
    format_importance_table,
    importance_report,
    run_ablation,
    split_train_val,
)
from .features import (
    ModalityMask,
    build_matrix,
    fit_schema,
    load_schema,
    save_schema,
)
from .records import (
    LabelPolicy,
    Status,
    default_bounds,
    derive_label,
    load_bounds,
    parse_biomarker_file,
    parse_clinical_file,
)

logger = logging.getLogger("glarisk")

ABLATION_FAILURE_EXIT = 9

_HELP_WIDTH = 96


def _formatter(prog):
    # Fixed width keeps --help output identical across terminals.
    return argparse.HelpFormatter(prog, width=_HELP_WIDTH)


# ---------------------------------------------------------------------------
# Config-file handling
# ---------------------------------------------------------------------------

def _read_config(path: Optional[str]) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    if path:
        if not Path(path).exists():
            raise GlaRiskError(f"config file {path} does not exist")
        parser.read(path, encoding="utf-8")
    return parser


def _effective(args, cfg: configparser.ConfigParser, section: str, key: str,
               default, cast):
    """Flag value, else config entry, else default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    if cfg.has_option(section, key):
        raw = cfg.get(section, key)
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    return default


_INT_TRAIN_FIELDS = ("max_depth", "n_estimators", "n_bins", "seed",
                     "n_classes", "n_threads")


def _train_config(args, cfg) -> TrainConfig:
    values = {}
    for f in dataclass_fields(TrainConfig):
        cast = int if f.name in _INT_TRAIN_FIELDS else float
        values[f.name] = _effective(args, cfg, "train", f.name, f.default, cast)
    return TrainConfig(**values)


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("training (TrainConfig)")
    kinds = {
        "learning_rate": (float, "shrinkage per boosting round"),
        "max_depth": (int, "maximum tree depth"),
        "n_estimators": (int, "boosting rounds"),
        "subsample": (float, "row subsample ratio per round"),
        "colsample": (float, "column subsample ratio per tree"),
        "n_bins": (int, "histogram bins per feature"),
        "lambda_l2": (float, "L2 penalty on leaf weights"),
        "gamma_split": (float, "minimum gain retained per split"),
        "min_child_weight": (float, "minimum hessian sum per child"),
        "seed": (int, "random seed driving all sampling"),
        "n_classes": (int, "number of label classes"),
        "base_score": (float, "fixed margin offset; omit for train-set log-odds"),
        "n_threads": (int, "histogram build threads (results stay bit-identical)"),
    }
    for f in dataclass_fields(TrainConfig):
        cast, help_text = kinds[f.name]
        group.add_argument(f"--{f.name}", type=cast, default=None,
                           help=f"{help_text} (default: {f.default})")


def _add_data_flags(parser: argparse.ArgumentParser, *,
                    with_n_classes: bool = True) -> None:
    group = parser.add_argument_group("data")
    group.add_argument("records", nargs="?", default=None,
                       help="records file (or [paths] records in --config)")
    group.add_argument("--format", choices=("clinical", "oct"), default=None,
                       help="records format (default: clinical)")
    group.add_argument("--bounds", default=None,
                       help="normative-bounds catalog (default: packaged catalog)")
    if with_n_classes:
        # train/ablate get this flag from the TrainConfig group instead
        group.add_argument("--n_classes", type=int, default=None,
                           help="number of label classes (default: 2)")
    group.add_argument("--schema", default=None,
                       help="feature schema path; loaded when the file exists, "
                            "else fitted from the records and saved there "
                            "(default: fit in memory)")
    group.add_argument("--text-embeddings", dest="text_embeddings", default=None,
                       help="GLAEMB table keyed by record id (default: none)")
    group.add_argument("--image-embeddings", dest="image_embeddings", default=None,
                       help="GLAEMB table keyed by image_ref (default: none)")
    group.add_argument("--stand-in-text", dest="stand_in_text", type=int, default=None,
                       help="encode record narratives with the stand-in text encoder "
                            "at this dimension instead of a table (default: off)")
    group.add_argument("--mask", default=None,
                       help="modality mask, e.g. 'all' or 'factor+risk+sure' "
                            "(default: all)")
    group.add_argument("--derive-labels", action="store_true", default=None,
                       help="derive missing labels from risk assessments "
                            "(default: off)")
    group.add_argument("--label-policy", dest="label_policy", default=None,
                       help="JSON file mapping risk categories to classes "
                            "(default: built-in policy)")


def _add_split_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("split")
    group.add_argument("--val-fraction", dest="val_fraction", type=float, default=None,
                       help="validation fraction; 0 trains on everything "
                            "(default: 0.2)")
    group.add_argument("--split-seed", dest="split_seed", type=int, default=None,
                       help="seed for the train/val split (default: 42)")
    group.add_argument("--no-stratify", dest="no_stratify", action="store_true",
                       default=None, help="disable stratified splitting (default: off)")


# ---------------------------------------------------------------------------
# Shared data loading
# ---------------------------------------------------------------------------

def _load_records(args, cfg):
    path = args.records or (cfg.get("paths", "records", fallback=None))
    if not path:
        raise GlaRiskError("no records file given (argument or [paths] records)")
    fmt = _effective(args, cfg, "paths", "format", "clinical", str)
    n_classes = _effective(args, cfg, "train", "n_classes", 2, int)
    if fmt == "oct":
        bounds_path = _effective(args, cfg, "paths", "bounds", None, str)
        bounds = load_bounds(bounds_path) if bounds_path else default_bounds()
        return parse_biomarker_file(path, bounds, n_classes=n_classes), fmt
    return parse_clinical_file(path, n_classes=n_classes), fmt


def _apply_label_policy(records, args, cfg):
    derive = _effective(args, cfg, "paths", "derive_labels", False, bool)
    if not derive:
        return records
    policy_path = _effective(args, cfg, "paths", "label_policy", None, str)
    if policy_path:
        policy = LabelPolicy.from_mapping(
            json.loads(Path(policy_path).read_text(encoding="utf-8")))
    else:
        policy = LabelPolicy.default()
    out = []
    for r in records:
        if r.label is None and r.judgment is not None:
            r = replace(r, label=derive_label(r.judgment, policy))
        out.append(r)
    return out


def _schema_for(args, cfg, records):
    path = _effective(args, cfg, "paths", "schema", None, str)
    mode = _effective(args, cfg, "paths", "mode", "binary", str)
    if path and Path(path).exists():
        return load_schema(path), path
    schema = fit_schema(records, mode)
    if path:
        save_schema(schema, path)
        logger.info("schema fitted inline and written to %s", path)
    return schema, path


def _matrix_builder(args, cfg, records, schema):
    text_path = _effective(args, cfg, "paths", "text_embeddings", None, str)
    image_path = _effective(args, cfg, "paths", "image_embeddings", None, str)
    stand_in = _effective(args, cfg, "paths", "stand_in_text", None, int)
    text_table = read_embedding_table(text_path) if text_path else None
    image_table = read_embedding_table(image_path) if image_path else None

    def build(mask: ModalityMask):
        return build_matrix(records, schema, mask,
                            text_table=text_table, image_table=image_table,
                            stand_in_text_dim=stand_in)
    return build


def _mask_from(args, cfg) -> ModalityMask:
    text = _effective(args, cfg, "mask", "mask", "all", str)
    return ModalityMask.parse(text)


def _split_params(args, cfg):
    val_fraction = _effective(args, cfg, "split", "val_fraction", 0.2, float)
    if getattr(args, "split_seed", None) is not None:
        seed = args.split_seed
    else:
        seed = int(cfg.get("split", "seed", fallback="42"))
    if getattr(args, "no_stratify", None):
        stratify = False
    else:
        stratify = cfg.get("split", "stratify", fallback="true").strip().lower() \
            in ("1", "true", "yes", "on")
    return val_fraction, seed, stratify


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    cfg = _read_config(args.config)
    records, fmt = _load_records(args, cfg)
    records = _apply_label_policy(records, args, cfg)
    print(f"records\t{len(records)}")
    labels = [r.label.class_index for r in records if r.label is not None]
    print(f"labeled\t{len(labels)}")
    for c in sorted(set(labels)):
        print(f"class_{c}\t{labels.count(c)}")
    if fmt == "clinical":
        from .records import CLINICAL_FIELD_ORDER
        counts = {k: 0 for k in CLINICAL_FIELD_ORDER if k not in ("image_ref", "label")}
        for r in records:
            for key in counts:
                if key == "glaucoma_risk_assessment":
                    value = r.judgment.risk_assessment if r.judgment else None
                elif key == "confidence_level":
                    value = r.judgment.confidence_level if r.judgment else None
                else:
                    value = getattr(r.fundus, key)
                if value is None:
                    counts[key] += 1
        for key, n_missing in counts.items():
            print(f"missing\t{key}\t{n_missing}\t{100 * n_missing / len(records):.1f}%")
    else:
        tally = {s: 0 for s in Status}
        for r in records:
            for m in r.measurements:
                tally[m.status_od] += 1
                tally[m.status_os] += 1
        for status, n in tally.items():
            print(f"status\t{status.value}\t{n}")
    return 0


def cmd_fit_schema(args) -> int:
    cfg = _read_config(args.config)
    records, _ = _load_records(args, cfg)
    schema = fit_schema(records, args.mode,
                        normalize=not args.no_normalize,
                        cd_ratio_threshold=None if args.no_cd_threshold else 0.6)
    save_schema(schema, args.out)
    print(f"schema\t{args.out}")
    print(f"fingerprint\t{schema.fingerprint}")
    print(f"struct_dim\t{schema.struct_dim}")
    print(f"human_dim\t{schema.human_dim}")
    return 0


def _train_once(args, cfg):
    """Shared ingest -> encode -> split -> train path for train/evaluate."""
    records, _ = _load_records(args, cfg)
    records = _apply_label_policy(records, args, cfg)
    schema, _ = _schema_for(args, cfg, records)
    mask = _mask_from(args, cfg)
    build = _matrix_builder(args, cfg, records, schema)
    matrix = build(mask)
    config = _train_config(args, cfg)
    val_fraction, split_seed, stratify = _split_params(args, cfg)

    if val_fraction > 0:
        train_ids, val_ids = split_train_val(records, val_fraction, split_seed, stratify)
        index = {rid: i for i, rid in enumerate(matrix.ids)}
        tr = np.array([index[i] for i in train_ids])
        va = np.array([index[i] for i in val_ids])
    else:
        tr = np.arange(len(matrix.ids))
        va = np.array([], dtype=np.int64)
    y = matrix.y
    model = train(matrix.X[tr], y[tr], config,
                  feature_names=matrix.names,
                  schema_fingerprint=matrix.schema_fingerprint)
    return records, schema, matrix, model, tr, va


def cmd_train(args) -> int:
    cfg = _read_config(args.config)
    records, schema, matrix, model, tr, va = _train_once(args, cfg)
    out = args.out or cfg.get("paths", "model", fallback="model.json")
    save_model(model, out)

    if args.log:
        with open(args.log, "w", encoding="utf-8") as fh:
            for i, loss in enumerate(model.train_loss):
                fh.write(f"{i}\t{loss!r}\n")
    elif model.train_loss:
        logger.info("final training loss %.6f (round 0: %.6f)",
                    model.train_loss[-1], model.train_loss[0])

    y = matrix.y
    proba_tr = predict_proba(model, matrix.X[tr])
    m_tr = compute_metrics(proba_tr, y[tr])
    print(f"model\t{out}")
    print(f"dim\t{matrix.dim}")
    print(f"train_acc\t{m_tr.acc:.4f}")
    if len(va):
        m_va = compute_metrics(predict_proba(model, matrix.X[va]), y[va])
        print(f"val_acc\t{m_va.acc:.4f}")
        print(f"val_pre\t{m_va.pre:.4f}")
        print(f"val_f1\t{m_va.f1:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _read_config(args.config)
    records, _ = _load_records(args, cfg)
    records = _apply_label_policy(records, args, cfg)
    schema, _ = _schema_for(args, cfg, records)
    model = load_model(args.model, expected_fingerprint=schema.fingerprint,
                       strict_fingerprint=not args.allow_fingerprint_mismatch)
    mask = _mask_from(args, cfg)
    matrix = _matrix_builder(args, cfg, records, schema)(mask)
    metrics = compute_metrics(predict_proba(model, matrix.X), matrix.y,
                              threshold=args.threshold)
    print(f"n\t{metrics.n}")
    print(f"acc\t{metrics.acc:.4f}")
    print(f"pre\t{metrics.pre:.4f}")
    print(f"f1\t{metrics.f1:.4f}")
    print(f"recall\t{metrics.recall:.4f}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _read_config(args.config)
    records, _ = _load_records(args, cfg)
    records = _apply_label_policy(records, args, cfg)
    schema, _ = _schema_for(args, cfg, records)
    masks = [ModalityMask.parse(m.strip()) for m in args.masks.split(",") if m.strip()]
    if not masks:
        raise GlaRiskError("no masks given")
    build = _matrix_builder(args, cfg, records, schema)
    config = _train_config(args, cfg)
    val_fraction, split_seed, stratify = _split_params(args, cfg)
    split = split_train_val(records, val_fraction, split_seed, stratify)
    grid = run_ablation(build, masks, config, split)
    table = format_ablation_table(grid)
    print(table)
    if args.out:
        Path(args.out).write_text(table + "\n", encoding="utf-8")
    return ABLATION_FAILURE_EXIT if grid.any_failed else 0


def cmd_importance(args) -> int:
    cfg = _read_config(args.config)
    schema = None
    schema_path = _effective(args, cfg, "paths", "schema", None, str)
    if schema_path and Path(schema_path).exists():
        schema = load_schema(schema_path)
    model = load_model(args.model)
    rows = importance_report(model, schema, top_k=args.top, kind=args.kind)
    print(format_importance_table(rows))
    if args.out:
        lines = [f"{r.feature}\t{r.importance!r}\t{r.value}" for r in rows]
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def cmd_predict(args) -> int:
    cfg = _read_config(args.config)
    records, _ = _load_records(args, cfg)
    schema, _ = _schema_for(args, cfg, records)
    model = load_model(args.model, expected_fingerprint=schema.fingerprint,
                       strict_fingerprint=not args.allow_fingerprint_mismatch)
    mask = _mask_from(args, cfg)
    matrix = _matrix_builder(args, cfg, records, schema)(mask)
    proba = predict_proba(model, matrix.X)
    for i, rid in enumerate(matrix.ids):
        record = records[i]
        if (getattr(record, "fundus", None) is not None
                and all(v is None for v in vars(record.fundus).values())
                and record.judgment is None):
            logger.warning("record %s has every field missing; "
                           "prediction is base-rate dominated", rid)
        contrib = predict_contributions(model, matrix.X[i])
        top = sorted(contrib.items(), key=lambda kv: (-abs(kv[1]), kv[0]))[:args.top]
        top_text = ", ".join(f"{name}={value:+.4f}" for name, value in top)
        if model.n_classes == 2:
            print(f"{rid}\t{proba[i]:.6f}\t{top_text}")
        else:
            dist = " ".join(f"{p:.6f}" for p in proba[i])
            print(f"{rid}\t{dist}\t{top_text}")
    return 0


def cmd_synth(args) -> int:
    dataset = synth_mod.generate(rows=args.rows, seed=args.seed,
                                 d_text=args.d_text, d_img=args.d_img)
    paths = synth_mod.write(dataset, args.out)
    for key, path in paths.items():
        print(f"{key}\t{path}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glarisk",
        formatter_class=_formatter,
        description="Multimodal glaucoma-risk pipeline: parse records, fuse "
                    "modalities, train and inspect a boosted-tree classifier.")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="increase diagnostic verbosity (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, formatter_class=_formatter, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", default=None,
                       help="INI config file; flags override its values "
                            "(default: none)")
        return p

    p = add("ingest", cmd_ingest, "parse and validate records, print a summary")
    _add_data_flags(p)

    p = add("fit-schema", cmd_fit_schema, "fit the feature schema and write it")
    _add_data_flags(p)
    p.add_argument("--mode", choices=("binary", "tristate"), default="binary",
                   help="status-code mapping for OCT panels (default: binary)")
    p.add_argument("--no-normalize", action="store_true",
                   help="store raw continuous values instead of z-scores "
                        "(default: off)")
    p.add_argument("--no-cd-threshold", action="store_true",
                   help="drop the derived high-ratio boolean slot (default: off)")
    p.add_argument("--out", required=True, help="output schema path")

    p = add("train", cmd_train, "train a model and report train/val metrics")
    _add_data_flags(p, with_n_classes=False)
    _add_split_flags(p)
    _add_train_flags(p)
    p.add_argument("--out", default=None, help="model output path (default: model.json)")
    p.add_argument("--log", default=None,
                   help="write per-round training loss to this file (default: off)")

    p = add("evaluate", cmd_evaluate, "score an existing model on a dataset")
    _add_data_flags(p)
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--threshold", type=float, default=0.5,
                   help="positive-class decision threshold (default: 0.5)")
    p.add_argument("--allow-fingerprint-mismatch", action="store_true",
                   help="warn instead of failing on schema fingerprint mismatch "
                        "(default: off)")

    p = add("ablate", cmd_ablate, "train one model per modality mask")
    _add_data_flags(p, with_n_classes=False)
    _add_split_flags(p)
    _add_train_flags(p)
    p.add_argument("--masks", required=True,
                   help="comma-separated masks, e.g. "
                        "'factor,factor+risk,factor+sure,factor+risk+sure'")
    p.add_argument("--out", default=None, help="write the grid as TSV here too")

    p = add("importance", cmd_importance, "rank features of a trained model")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--schema", default=None,
                   help="schema file for value ranges (default: none)")
    p.add_argument("--top", type=int, default=5, help="rows to report (default: 5)")
    p.add_argument("--kind", choices=("gain", "weight", "cover"), default="gain",
                   help="importance flavor (default: gain)")
    p.add_argument("--out", default=None, help="write rows as TSV here too")

    p = add("predict", cmd_predict, "probabilities plus top contributing features")
    _add_data_flags(p)
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--top", type=int, default=3,
                   help="contributing features to list per record (default: 3)")
    p.add_argument("--allow-fingerprint-mismatch", action="store_true",
                   help="warn instead of failing on schema fingerprint mismatch "
                        "(default: off)")

    p = add("synth", cmd_synth, "generate the bundled synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--rows", type=int, default=2000, help="instances (default: 2000)")
    p.add_argument("--seed", type=int, default=42, help="generator seed (default: 42)")
    p.add_argument("--d-text", dest="d_text", type=int, default=64,
                   help="text embedding dimension (default: 64)")
    p.add_argument("--d-img", dest="d_img", type=int, default=128,
                   help="image embedding dimension (default: 128)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    verbosity = args.verbose or int(os.environ.get("GLARISK_VERBOSE", "0") or 0)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if verbosity > 1 else
        (logging.INFO if verbosity else logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except GlaRiskError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except BrokenPipeError:
        # stdout consumer (head, less) closed early; not an error
        try:
            sys.stdout.close()
        except OSError:
            pass
        return 0


if __name__ == "__main__":
    sys.exit(main())
