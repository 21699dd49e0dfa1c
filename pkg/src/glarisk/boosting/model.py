"""Boosted-model training, prediction, attribution, and persistence.

Training is bit-deterministic for a fixed (matrix, config): row subsampling
(per round) and column subsampling (per tree) are drawn from one seeded
generator in that documented order, histograms reduce in fixed feature
order, and model files serialize floats as hex so save -> load -> predict is
bit-identical.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..errors import (
    CorruptModel,
    DimensionMismatch,
    EmptyDataset,
    FingerprintMismatch,
    LabelOutOfRange,
    VersionMismatch,
)
from .binning import bin_matrix
from .config import TrainConfig
from .grow import grow_tree
from .tree import LEAF, Tree

logger = logging.getLogger("glarisk.boosting")

MODEL_MAGIC = "GLAMODEL"
MODEL_VERSION = 1

# Hessian floor; keeps leaf weights finite deep into sigmoid saturation.
H_EPS = 1e-16
# Prevalence clamp for the automatic log-odds base score.
P_EPS = 1e-6


def sigmoid(margin: np.ndarray) -> np.ndarray:
    m = np.asarray(margin, dtype=np.float64)
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    em = np.exp(m[~pos])
    out[~pos] = em / (1.0 + em)
    return out


def softmax(margins: np.ndarray) -> np.ndarray:
    shifted = margins - margins.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def logistic_grad_hess(margin: float, y: int) -> tuple[float, float]:
    """First/second derivatives of the logistic loss at one margin.

    g = sigmoid(margin) - y, h = sigmoid(margin) * (1 - sigmoid(margin)),
    with h floored at 1e-16 against saturation.
    """
    p = float(sigmoid(np.array([margin]))[0])
    return p - y, max(p * (1.0 - p), H_EPS)


@dataclass
class BoostedModel:
    """Ordered trees plus everything needed to reproduce predictions."""

    config: TrainConfig
    n_features: int
    base_score: np.ndarray  # (1,) binary margin offset, (C,) multiclass
    trees: list[Tree]  # round-major; in multiclass, class-minor within a round
    feature_names: tuple[str, ...] = ()
    schema_fingerprint: str = ""
    train_loss: Optional[list[float]] = field(default=None, repr=False)  # not persisted

    @property
    def n_classes(self) -> int:
        return self.config.n_classes

    def feature_name(self, index: int) -> str:
        if self.feature_names:
            return self.feature_names[index]
        return f"f{index}"


def _resolve_base(y: np.ndarray, config: TrainConfig) -> np.ndarray:
    if config.n_classes == 2:
        if config.base_score is not None:
            return np.array([float(config.base_score)])
        p = float(np.clip(np.mean(y == 1), P_EPS, 1.0 - P_EPS))
        return np.array([math.log(p / (1.0 - p))])
    if config.base_score is not None:
        return np.full(config.n_classes, float(config.base_score))
    priors = np.array([np.mean(y == c) for c in range(config.n_classes)])
    return np.log(np.clip(priors, P_EPS, None))


def _binary_grad_hess(margins: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = sigmoid(margins)
    return p - y, np.maximum(p * (1.0 - p), H_EPS)


def _log_loss(margins: np.ndarray, y: np.ndarray, n_classes: int) -> float:
    if n_classes == 2:
        p = np.clip(sigmoid(margins), 1e-15, 1 - 1e-15)
        return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))
    p = np.clip(softmax(margins), 1e-15, None)
    return float(-np.mean(np.log(p[np.arange(len(y)), y])))


def train(X: np.ndarray, y: np.ndarray, config: TrainConfig = TrainConfig(), *,
          feature_names: tuple[str, ...] = (),
          schema_fingerprint: str = "") -> BoostedModel:
    """Train ``n_estimators`` boosting rounds (x n_classes trees past binary).

    Row subsampling happens once per round and column subsampling once per
    tree, both from a single generator seeded with ``config.seed`` (rows
    drawn first).  Leaf weights are the Newton step -lr*G/(H+lambda).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyDataset("training matrix is empty")
    if y.shape != (X.shape[0],):
        raise LabelOutOfRange(f"labels shape {y.shape} != ({X.shape[0]},)")
    if y.min() < 0 or y.max() >= config.n_classes:
        raise LabelOutOfRange(
            f"labels span [{y.min()}, {y.max()}] outside 0..{config.n_classes - 1}")
    if feature_names and len(feature_names) != X.shape[1]:
        raise DimensionMismatch(f"{len(feature_names)} names for {X.shape[1]} columns")
    if len(np.unique(y)) < 2:
        logger.warning("training labels contain a single class; "
                       "the model will predict the base rate")

    n, d = X.shape
    n_classes = config.n_classes
    binary = n_classes == 2
    binned = bin_matrix(X, config.n_bins, config.seed)
    base = _resolve_base(y, config)
    margins = np.full(n, base[0]) if binary else np.tile(base, (n, 1))

    rng = np.random.Generator(np.random.PCG64(config.seed))
    all_rows = np.arange(n)
    all_features = np.arange(d)
    pool = ThreadPoolExecutor(max_workers=config.n_threads) if config.n_threads > 1 else None

    trees: list[Tree] = []
    losses: list[float] = []
    try:
        for _ in range(config.n_estimators):
            if config.subsample < 1.0:
                k = max(1, int(round(config.subsample * n)))
                rows = np.sort(rng.choice(n, size=k, replace=False))
            else:
                rows = all_rows
            for c in range(1 if binary else n_classes):
                if config.colsample < 1.0:
                    kf = max(1, int(round(config.colsample * d)))
                    feats = np.sort(rng.choice(d, size=kf, replace=False))
                else:
                    feats = all_features
                if binary:
                    g, h = _binary_grad_hess(margins, y)
                else:
                    p = softmax(margins)
                    g = p[:, c] - (y == c)
                    h = np.maximum(p[:, c] * (1.0 - p[:, c]), H_EPS)
                tree = grow_tree(binned, g, h, rows, feats, config, pool=pool)
                trees.append(tree)
                delta = tree.predict(X)
                if binary:
                    margins += delta
                else:
                    margins[:, c] += delta
            losses.append(_log_loss(margins, y, n_classes))
    finally:
        if pool is not None:
            pool.shutdown()

    return BoostedModel(config=config, n_features=d, base_score=base, trees=trees,
                        feature_names=tuple(feature_names),
                        schema_fingerprint=schema_fingerprint, train_loss=losses)


def predict_margin(model: BoostedModel, X: np.ndarray) -> np.ndarray:
    """Additive scores before the link function; (n,) binary, (n, C) beyond."""
    X = np.asarray(X, dtype=np.float64)
    squeeze = X.ndim == 1
    if squeeze:
        X = X[None, :]
    if X.shape[1] != model.n_features:
        raise DimensionMismatch(
            f"vector has {X.shape[1]} features, model expects {model.n_features}")
    binary = model.n_classes == 2
    if binary:
        margins = np.full(X.shape[0], model.base_score[0])
        for tree in model.trees:
            margins += tree.predict(X)
    else:
        margins = np.tile(model.base_score, (X.shape[0], 1))
        for i, tree in enumerate(model.trees):
            margins[:, i % model.n_classes] += tree.predict(X)
    return margins[0] if squeeze else margins


def predict_proba(model: BoostedModel, X: np.ndarray) -> np.ndarray:
    """Positive-class probability (binary) or class distribution (multiclass).

    Accepts a single vector or a matrix; NaN feature values follow each
    split's learned default direction.
    """
    margins = predict_margin(model, X)
    if model.n_classes == 2:
        return sigmoid(margins)
    if margins.ndim == 1:
        return softmax(margins[None, :])[0]
    return softmax(margins)


def predict_contributions(model: BoostedModel, x: np.ndarray) -> dict[str, float]:
    """Per-feature additive attribution for one row (path-delta method).

    Each node holds the Newton value its subtree would predict; the change
    in that value along a split edge is credited to the split feature.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.n_features,):
        raise DimensionMismatch(f"expected one row of {model.n_features} features")
    lam = model.config.lambda_l2
    lr = model.config.learning_rate
    contrib: dict[str, float] = {}
    for tree in model.trees:
        values = -lr * tree.sum_g / (tree.sum_h + lam)
        node = 0
        while tree.feature[node] != LEAF:
            feat = int(tree.feature[node])
            val = x[feat]
            if np.isnan(val):
                child = tree.left[node] if tree.default_left[node] else tree.right[node]
            else:
                child = tree.left[node] if val <= tree.threshold[node] else tree.right[node]
            name = model.feature_name(feat)
            contrib[name] = contrib.get(name, 0.0) + float(values[child] - values[node])
            node = int(child)
    return contrib


def feature_importance(model: BoostedModel, kind: str = "gain") -> dict[str, float]:
    """Importance per feature name, normalized to sum 1 (empty if no splits).

    ``gain`` sums split gains, ``weight`` counts splits, ``cover`` sums the
    hessian mass of the split nodes.
    """
    if kind not in ("gain", "weight", "cover"):
        raise ValueError(f"unknown importance kind {kind!r}")
    raw: dict[int, float] = {}
    for tree in model.trees:
        for node in range(tree.n_nodes):
            feat = int(tree.feature[node])
            if feat == LEAF:
                continue
            if kind == "gain":
                amount = float(tree.gain[node])
            elif kind == "weight":
                amount = 1.0
            else:
                amount = float(tree.sum_h[node])
            raw[feat] = raw.get(feat, 0.0) + amount
    total = sum(raw.values())
    if not raw or total <= 0:
        return {}
    return {model.feature_name(f): v / total
            for f, v in sorted(raw.items())}


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _hex_list(arr: np.ndarray) -> list[str]:
    return [float(v).hex() for v in arr]


def _from_hex(values: list[str]) -> np.ndarray:
    return np.array([float.fromhex(v) for v in values], dtype=np.float64)


def _tree_payload(tree: Tree) -> dict:
    return {
        "feature": tree.feature.tolist(),
        "threshold": _hex_list(tree.threshold),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "default_left": [int(b) for b in tree.default_left],
        "value": _hex_list(tree.value),
        "gain": _hex_list(tree.gain),
        "sum_g": _hex_list(tree.sum_g),
        "sum_h": _hex_list(tree.sum_h),
        "count": tree.count.tolist(),
    }


def _tree_from_payload(payload: dict) -> Tree:
    return Tree(
        feature=np.asarray(payload["feature"], dtype=np.int32),
        threshold=_from_hex(payload["threshold"]),
        left=np.asarray(payload["left"], dtype=np.int32),
        right=np.asarray(payload["right"], dtype=np.int32),
        default_left=np.asarray(payload["default_left"], dtype=bool),
        value=_from_hex(payload["value"]),
        gain=_from_hex(payload["gain"]),
        sum_g=_from_hex(payload["sum_g"]),
        sum_h=_from_hex(payload["sum_h"]),
        count=np.asarray(payload["count"], dtype=np.int64),
    )


def save_model(model: BoostedModel, path: Union[str, Path]) -> None:
    """Versioned text document; floats as hex for bit-exact round-trips."""
    payload = {
        "format": MODEL_MAGIC,
        "version": MODEL_VERSION,
        "config": model.config.echo(),
        "n_features": model.n_features,
        "base_score": _hex_list(model.base_score),
        "schema_fingerprint": model.schema_fingerprint,
        "feature_names": list(model.feature_names),
        "trees": [_tree_payload(t) for t in model.trees],
    }
    Path(path).write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")


def load_model(path: Union[str, Path], *,
               expected_fingerprint: Optional[str] = None,
               strict_fingerprint: bool = True) -> BoostedModel:
    """Load a model file; predictions match the saved model bit for bit.

    A fingerprint mismatch raises when ``strict_fingerprint`` else warns.
    """
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptModel(f"{path}: not a parseable model file ({exc})") from exc
    if not isinstance(payload, dict) or payload.get("format") != MODEL_MAGIC:
        raise CorruptModel(f"{path}: missing {MODEL_MAGIC} marker")
    if payload.get("version") != MODEL_VERSION:
        raise VersionMismatch(f"{path}: model version {payload.get('version')}, "
                              f"expected {MODEL_VERSION}")
    try:
        config = TrainConfig.from_echo(payload["config"])
        model = BoostedModel(
            config=config,
            n_features=int(payload["n_features"]),
            base_score=_from_hex(payload["base_score"]),
            trees=[_tree_from_payload(t) for t in payload["trees"]],
            feature_names=tuple(payload["feature_names"]),
            schema_fingerprint=payload["schema_fingerprint"],
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise CorruptModel(f"{path}: malformed model payload ({exc})") from exc
    if expected_fingerprint is not None and model.schema_fingerprint != expected_fingerprint:
        message = (f"{path}: model built against schema {model.schema_fingerprint}, "
                   f"caller expects {expected_fingerprint}")
        if strict_fingerprint:
            raise FingerprintMismatch(message)
        logger.warning("%s", message)
    return model
