"""Splits, classification metrics, the modality-ablation harness, and
importance reporting.

Metrics are positive-class ACC/PRE/F1 in binary mode and macro averages in
multiclass mode.  Ablation reuses one split across all masks so rows stay
comparable; each row trains a fresh model under its mask, and a failed row
is marked rather than aborting the grid.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .boosting import BoostedModel, TrainConfig, feature_importance, predict_proba, train
from .errors import (
    EmptyFusion,
    EmptyInput,
    GlaRiskError,
    LengthMismatch,
    TooFewRecords,
)
from .features import EncodedMatrix, FeatureSchema, ModalityMask

logger = logging.getLogger("glarisk.evaluation")


@dataclass(frozen=True)
class ConfusionCounts:
    """Binary confusion counts; per-class instances are built in multiclass."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsReport:
    acc: float
    pre: float
    f1: float
    recall: float
    threshold: float
    n: int
    class_mode: str  # "binary" | "macro"

    def row(self) -> tuple[float, float, float]:
        return (self.acc, self.pre, self.f1)


@dataclass(frozen=True)
class AblationRow:
    mask: ModalityMask
    metrics: Optional[MetricsReport]
    cause_flag: bool
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class AblationGrid:
    rows: tuple[AblationRow, ...]
    train_ids: tuple[str, ...]
    val_ids: tuple[str, ...]

    @property
    def any_failed(self) -> bool:
        return any(r.failed for r in self.rows)


def split_train_val(records: Sequence, val_fraction: float, seed: int,
                    stratify: bool = True) -> tuple[list[str], list[str]]:
    """Deterministic (train ids, val ids) partition of a record list.

    Stratified splitting samples each class separately, keeping class ratios
    within one instance of the requested fraction.  Records must expose
    ``.id`` and, when stratifying, ``.label``.
    """
    if not 0 < val_fraction < 1:
        raise TooFewRecords(f"val_fraction must be in (0, 1), got {val_fraction}")
    n = len(records)
    if n < 2:
        raise TooFewRecords(f"need at least 2 records to split, got {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    ids = [r.id for r in records]

    if not stratify:
        order = rng.permutation(n)
        k = int(round(val_fraction * n))
        if k == 0 or k == n:
            raise TooFewRecords(f"val_fraction {val_fraction} empties one side for n={n}")
        val = sorted(order[:k].tolist())
        train = sorted(order[k:].tolist())
        return [ids[i] for i in train], [ids[i] for i in val]

    by_class: dict[int, list[int]] = {}
    for i, r in enumerate(records):
        if r.label is None:
            raise TooFewRecords(f"record {r.id} unlabeled; stratified split needs labels")
        by_class.setdefault(r.label.class_index, []).append(i)
    train_idx: list[int] = []
    val_idx: list[int] = []
    for c in sorted(by_class):
        members = np.asarray(by_class[c])
        if len(members) < 1:
            raise TooFewRecords(f"class {c} has no records")
        order = rng.permutation(len(members))
        k = int(round(val_fraction * len(members)))
        val_idx.extend(members[order[:k]].tolist())
        train_idx.extend(members[order[k:]].tolist())
    if not val_idx or not train_idx:
        raise TooFewRecords("stratified split left one side empty; "
                            "adjust val_fraction or add records")
    return [ids[i] for i in sorted(train_idx)], [ids[i] for i in sorted(val_idx)]


def confusion_counts(predictions: np.ndarray, labels: np.ndarray,
                     positive: int = 1) -> ConfusionCounts:
    pred_pos = predictions == positive
    true_pos = labels == positive
    return ConfusionCounts(
        tp=int(np.sum(pred_pos & true_pos)),
        fp=int(np.sum(pred_pos & ~true_pos)),
        fn=int(np.sum(~pred_pos & true_pos)),
        tn=int(np.sum(~pred_pos & ~true_pos)),
    )


def _prf(counts: ConfusionCounts) -> tuple[float, float, float]:
    if counts.tp + counts.fp == 0:
        logger.warning("no predicted positives; precision reported as 0")
        pre = 0.0
    else:
        pre = counts.tp / (counts.tp + counts.fp)
    rec = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = 2 * pre * rec / (pre + rec) if pre + rec > 0 else 0.0
    return pre, rec, f1


def compute_metrics(probabilities: np.ndarray, labels: Sequence[int],
                    threshold: float = 0.5) -> MetricsReport:
    """ACC / PRE / F1 from probabilities and true labels.

    Binary input is a 1-D positive-class probability array thresholded at
    ``threshold`` (predict positive when p >= threshold); 2-D input is
    treated as multiclass with argmax predictions and macro averaging.
    """
    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probabilities.shape[0] != labels.shape[0]:
        raise LengthMismatch(
            f"{probabilities.shape[0]} predictions vs {labels.shape[0]} labels")
    if labels.size == 0:
        raise EmptyInput("no predictions to score")

    if probabilities.ndim == 1:
        predictions = (probabilities >= threshold).astype(np.int64)
        counts = confusion_counts(predictions, labels)
        acc = (counts.tp + counts.tn) / counts.total
        pre, rec, f1 = _prf(counts)
        return MetricsReport(acc=acc, pre=pre, f1=f1, recall=rec,
                             threshold=threshold, n=int(labels.size),
                             class_mode="binary")

    predictions = np.argmax(probabilities, axis=1)
    n_classes = probabilities.shape[1]
    acc = float(np.mean(predictions == labels))
    pres, recs, f1s = [], [], []
    for c in range(n_classes):
        pre, rec, f1 = _prf(confusion_counts(predictions, labels, positive=c))
        pres.append(pre)
        recs.append(rec)
        f1s.append(f1)
    return MetricsReport(acc=acc, pre=float(np.mean(pres)), f1=float(np.mean(f1s)),
                         recall=float(np.mean(recs)), threshold=threshold,
                         n=int(labels.size), class_mode="macro")


def cause_flag(mask: ModalityMask) -> bool:
    """Heuristic "does this configuration expose interpretable factors".

    True when the structured factor block or the risk judgment is present;
    image-only and words-only configurations are opaque.
    """
    return mask.factor or mask.risk


MatrixBuilder = Callable[[ModalityMask], EncodedMatrix]


def run_ablation(build: MatrixBuilder, masks: Sequence[ModalityMask],
                 config: TrainConfig,
                 split: tuple[Sequence[str], Sequence[str]],
                 threshold: float = 0.5) -> AblationGrid:
    """Train and evaluate one model per mask over a shared train/val split.

    ``build`` maps a mask to the encoded matrix of the full dataset; the id
    lists in ``split`` select its rows.  A failing row records its error and
    the grid carries on.
    """
    seen = set()
    for mask in masks:
        if not mask.any:
            raise EmptyFusion("empty mask in ablation grid")
        key = mask.label()
        if key in seen:
            raise EmptyFusion(f"duplicate mask {key} in ablation grid")
        seen.add(key)
    train_ids, val_ids = (tuple(split[0]), tuple(split[1]))
    rows: list[AblationRow] = []
    for mask in masks:
        try:
            matrix = build(mask)
            index = {rid: i for i, rid in enumerate(matrix.ids)}
            tr = np.array([index[i] for i in train_ids])
            va = np.array([index[i] for i in val_ids])
            y = matrix.y
            model = train(matrix.X[tr], y[tr], config,
                          feature_names=matrix.names,
                          schema_fingerprint=matrix.schema_fingerprint)
            proba = predict_proba(model, matrix.X[va])
            metrics = compute_metrics(proba, y[va], threshold)
            rows.append(AblationRow(mask=mask, metrics=metrics,
                                    cause_flag=cause_flag(mask)))
        except GlaRiskError as exc:
            logger.warning("ablation row %s failed: %s", mask.label(), exc)
            rows.append(AblationRow(mask=mask, metrics=None,
                                    cause_flag=cause_flag(mask), error=str(exc)))
    return AblationGrid(rows=tuple(rows), train_ids=train_ids, val_ids=val_ids)


# ---------------------------------------------------------------------------
# Importance reporting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ImportanceRow:
    feature: str
    importance: float
    value: str  # representative value / range


def _field_of(slot: str) -> str:
    """Collapse a slot name to its source field (one-hot/indicator aware)."""
    if slot.endswith("__missing"):
        return slot[: -len("__missing")]
    return slot.split("=", 1)[0]


def _representative(field_name: str, slots: dict[str, float],
                    schema: Optional[FeatureSchema]) -> str:
    """Value column for one report row.

    Categorical/boolean fields show the dominant slot's category; continuous
    fields show the observed training range.
    """
    onehot = {s: v for s, v in slots.items() if "=" in s}
    if onehot:
        best = max(sorted(onehot), key=lambda s: onehot[s])
        value = best.split("=", 1)[1]
        return value.capitalize() if value in ("true", "false") else value
    if schema is not None and field_name in schema.continuous_stats:
        stats = schema.continuous_stats[field_name]
        if stats.count:
            return f"{stats.vmin:g} - {stats.vmax:g}"
    return ""


def importance_report(model: BoostedModel, schema: Optional[FeatureSchema] = None,
                      top_k: int = 5, kind: str = "gain") -> list[ImportanceRow]:
    """Ranked (feature, importance, representative value) rows.

    Embedding dimensions are grouped into one row per modality block
    ("text (embedding)" / "image (embedding)") whose value column shows the
    grouped dimensions and the block's offset in the fused vector;
    structured and judgment slots aggregate to their source fields.
    """
    raw = feature_importance(model, kind)
    if not raw:
        return []
    grouped: dict[str, dict[str, float]] = {}
    for slot, value in raw.items():
        if slot.startswith("text["):
            grouped.setdefault("text (embedding)", {})[slot] = value
        elif slot.startswith("img["):
            grouped.setdefault("image (embedding)", {})[slot] = value
        else:
            grouped.setdefault(_field_of(slot), {})[slot] = value

    block_offsets = {}
    for prefix, label in (("text[", "text (embedding)"), ("img[", "image (embedding)")):
        cols = [i for i, n in enumerate(model.feature_names) if n.startswith(prefix)]
        if cols:
            block_offsets[label] = min(cols)

    rows = []
    for field_name, slots in grouped.items():
        total = sum(slots.values())
        if field_name.endswith("(embedding)"):
            dims = sorted(int(s.split("[")[1].rstrip("]")) for s in slots)
            value = f"dims {dims[0]}-{dims[-1]}"
            if field_name in block_offsets:
                value += f" @ offset {block_offsets[field_name]}"
        else:
            value = _representative(field_name, slots, schema)
        rows.append(ImportanceRow(feature=field_name, importance=total, value=value))
    rows.sort(key=lambda r: (-r.importance, r.feature))
    return rows[:top_k]


def format_importance_table(rows: Sequence[ImportanceRow]) -> str:
    """Human-readable aligned table, deterministic for fixed inputs."""
    header = ("Feature", "Importance", "Value")
    cells = [(r.feature, f"{r.importance:.4f}", r.value) for r in rows]
    widths = [max(len(header[i]), *(len(c[i]) for c in cells)) if cells else len(header[i])
              for i in range(3)]
    lines = [" | ".join(h.ljust(widths[i]) for i, h in enumerate(header)),
             "-+-".join("-" * w for w in widths)]
    for c in cells:
        lines.append(" | ".join(c[i].ljust(widths[i]) for i in range(3)))
    return "\n".join(lines)


def format_ablation_table(grid: AblationGrid) -> str:
    """Grid rows as an aligned table (mask flags, ACC, PRE, F1, Cause)."""
    header = ("Image", "Words", "Factor", "Risk", "Sure", "ACC", "PRE", "F1", "Cause")
    lines = ["\t".join(header)]
    for row in grid.rows:
        flags = ["x" if getattr(row.mask, f) else "-" for f in ModalityMask.FLAGS]
        if row.failed:
            cells = flags + ["FAILED", "-", "-", "-"]
        else:
            m = row.metrics
            cells = flags + [f"{100 * m.acc:.2f}", f"{100 * m.pre:.2f}",
                             f"{100 * m.f1:.2f}", "Yes" if row.cause_flag else "No"]
        lines.append("\t".join(cells))
    return "\n".join(lines)
