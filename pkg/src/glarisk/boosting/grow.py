"""Histogram construction, split search, and depth-wise tree growth.

The split score is the standard second-order gain

    0.5 * (GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda)) - gamma

maximized over (feature, bin boundary, missing direction).  Ties break
toward the lowest feature index, then the lowest bin, then routing missing
values left.  A split is accepted only when its gain clears GAIN_EPS, a tiny
positive floor that keeps float noise from turning an exactly-zero gain into
a split; the exact-greedy reference oracle shares the same floor.

Histograms live in padded (feature, bin) arrays with one extra column for
the per-feature missing bucket, built with a single bincount pass per node.
With ``n_threads > 1`` the feature set is chunked across a thread pool and
the chunks are stacked in fixed feature order, so results stay bit-identical
to the single-threaded pass.
"""

from __future__ import annotations

from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .binning import BinnedMatrix
from .config import TrainConfig
from .tree import Tree, TreeBuilder

# Minimum accepted split gain; guards against splitting on pure float noise.
GAIN_EPS = 1e-12
# Gains this close count as tied: two candidates that induce the same row
# partition through different features are mathematically equal but sum in
# different orders, so strict comparison would pick a winner by float noise.
# The earliest candidate within this window of the maximum wins.
SPLIT_TIE_EPS = 1e-9


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    bin_idx: int
    threshold: float
    missing_left: bool
    gain: float
    g_left: float
    h_left: float
    count_left: int
    g_right: float
    h_right: float
    count_right: int


@dataclass(frozen=True)
class NodeHistograms:
    """Per-feature binned (sum_g, sum_h, count) plus a missing bucket.

    Arrays are padded to ``max_bins`` columns; feature k uses the first
    ``nbins[k]`` columns and ``miss_*[k]`` for its NaN rows.  The parent
    histogram of a split equals the sum of its children's, which the tests
    exercise directly.
    """

    features: np.ndarray  # sorted candidate feature ids, (F,)
    nbins: np.ndarray  # (F,)
    edges: tuple  # per-candidate-feature upper-edge arrays
    sum_g: np.ndarray  # (F, max_bins)
    sum_h: np.ndarray  # (F, max_bins)
    count: np.ndarray  # (F, max_bins) int64
    miss_g: np.ndarray  # (F,)
    miss_h: np.ndarray
    miss_count: np.ndarray
    total_g: float  # node totals (identical across features)
    total_h: float
    total_count: int


def _histogram_chunk(binned: BinnedMatrix, g: np.ndarray, h: np.ndarray,
                     rows: np.ndarray, feats: np.ndarray, width: int):
    """Padded histogram block for a chunk of features over the node rows."""
    codes = binned.codes[np.ix_(rows, feats)].astype(np.int64)
    miss = binned.missing[np.ix_(rows, feats)]
    nbins = np.array([binned.n_bins_of(f) for f in feats], dtype=np.int64)
    # Missing rows land in the per-feature overflow column (index width).
    flat = np.where(miss, width, codes)
    flat += np.arange(len(feats), dtype=np.int64)[None, :] * (width + 1)
    flat = flat.ravel()
    total = len(feats) * (width + 1)
    # Row-major ravel of (rows, feats): each row's gradient repeats per feature.
    gr = np.repeat(g[rows], len(feats))
    hr = np.repeat(h[rows], len(feats))
    sum_g = np.bincount(flat, weights=gr, minlength=total).reshape(len(feats), width + 1)
    sum_h = np.bincount(flat, weights=hr, minlength=total).reshape(len(feats), width + 1)
    count = np.bincount(flat, minlength=total).reshape(len(feats), width + 1)
    return nbins, sum_g, sum_h, count


def build_node_histograms(binned: BinnedMatrix, g: np.ndarray, h: np.ndarray,
                          rows: np.ndarray, features: np.ndarray,
                          n_threads: int = 1,
                          pool: Optional[ThreadPoolExecutor] = None) -> NodeHistograms:
    features = np.asarray(features, dtype=np.int64)
    width = max(binned.n_bins_of(f) for f in features)
    if pool is not None and n_threads > 1 and len(features) >= 2 * n_threads:
        chunks = np.array_split(features, n_threads)
        results = list(pool.map(
            lambda feats: _histogram_chunk(binned, g, h, rows, feats, width), chunks))
    else:
        results = [_histogram_chunk(binned, g, h, rows, features, width)]

    nbins = np.concatenate([r[0] for r in results])
    sum_g = np.vstack([r[1] for r in results])
    sum_h = np.vstack([r[2] for r in results])
    count = np.vstack([r[3] for r in results])
    return NodeHistograms(
        features=features,
        nbins=nbins,
        edges=tuple(binned.edges[f] for f in features),
        sum_g=sum_g[:, :width],
        sum_h=sum_h[:, :width],
        count=count[:, :width].astype(np.int64),
        miss_g=sum_g[:, width],
        miss_h=sum_h[:, width],
        miss_count=count[:, width].astype(np.int64),
        total_g=float(np.sum(g[rows])),
        total_h=float(np.sum(h[rows])),
        total_count=len(rows),
    )


def find_best_split(hists: NodeHistograms, lambda_l2: float, gamma_split: float,
                    min_child_weight: float) -> Optional[SplitCandidate]:
    """Best (feature, bin boundary, missing direction) by second-order gain.

    Returns ``None`` when no candidate clears the gain floor.  The winner is
    the earliest candidate (feature-major, bin-minor, missing-left preferred)
    whose gain sits within SPLIT_TIE_EPS of the maximum, which realizes the
    documented tie rules robustly under float summation noise.
    """
    F, B = hists.sum_g.shape
    if B < 2:
        return None
    G, H, C = hists.total_g, hists.total_h, hists.total_count
    parent_score = (G * G) / (H + lambda_l2)

    cg = np.cumsum(hists.sum_g, axis=1)[:, :-1]
    ch = np.cumsum(hists.sum_h, axis=1)[:, :-1]
    cc = np.cumsum(hists.count, axis=1)[:, :-1]
    # Candidate b splits after bin b; only b <= nbins-2 separates anything.
    in_range = np.arange(B - 1)[None, :] < (hists.nbins - 1)[:, None]

    def side_gain(gl, hl, cl):
        gr, hr, cr = G - gl, H - hl, C - cl
        valid = in_range & (cl >= 1) & (cr >= 1) \
            & (hl >= min_child_weight) & (hr >= min_child_weight)
        with np.errstate(divide="ignore", invalid="ignore"):
            raw = 0.5 * (np.square(gl) / (hl + lambda_l2)
                         + np.square(gr) / (hr + lambda_l2)
                         - parent_score) - gamma_split
        return np.where(valid, raw, -np.inf), gr, hr, cr

    gain_l, grl, hrl, crl = side_gain(cg + hists.miss_g[:, None],
                                      ch + hists.miss_h[:, None],
                                      cc + hists.miss_count[:, None])
    gain_r, grr, hrr, crr = side_gain(cg, ch, cc)
    # Left direction wins exact ties; with no missing rows in a feature the
    # two sides coincide bitwise, so "left" is also the no-missing default.
    use_left = gain_l >= gain_r
    gain = np.where(use_left, gain_l, gain_r)

    top = float(gain.max())
    if not top > GAIN_EPS:
        return None
    # argmax of the boolean mask = first candidate inside the tie window
    # (still above the floor, so accepted gains always clear GAIN_EPS)
    flat_best = int(np.argmax(gain > max(top - SPLIT_TIE_EPS, GAIN_EPS)))
    k, b = divmod(flat_best, B - 1)
    best_gain = float(gain[k, b])
    left = bool(use_left[k, b])
    if left:
        gl = float(cg[k, b] + hists.miss_g[k])
        hl = float(ch[k, b] + hists.miss_h[k])
        cl = int(cc[k, b] + hists.miss_count[k])
        gr, hr, cr = float(grl[k, b]), float(hrl[k, b]), int(crl[k, b])
    else:
        gl, hl, cl = float(cg[k, b]), float(ch[k, b]), int(cc[k, b])
        gr, hr, cr = float(grr[k, b]), float(hrr[k, b]), int(crr[k, b])
    return SplitCandidate(
        feature=int(hists.features[k]), bin_idx=int(b),
        threshold=float(hists.edges[k][b]), missing_left=left, gain=best_gain,
        g_left=gl, h_left=hl, count_left=cl, g_right=gr, h_right=hr, count_right=cr,
    )


def grow_tree(binned: BinnedMatrix, g: np.ndarray, h: np.ndarray,
              rows: np.ndarray, features: np.ndarray, config: TrainConfig,
              pool: Optional[ThreadPoolExecutor] = None) -> Tree:
    """Grow one depth-wise tree; leaf weight = -lr * G / (H + lambda)."""
    builder = TreeBuilder()
    lam, lr = config.lambda_l2, config.learning_rate

    def leaf_weight(sum_g: float, sum_h: float) -> float:
        return -lr * sum_g / (sum_h + lam)

    root_g = float(np.sum(g[rows]))
    root_h = float(np.sum(h[rows]))
    root = builder.add_node(root_g, root_h, len(rows))
    frontier = deque([(root, rows, 0)])
    while frontier:
        node, node_rows, depth = frontier.popleft()
        sum_g = builder.sum_g[node]
        sum_h = builder.sum_h[node]
        if depth >= config.max_depth or len(node_rows) < 2 or sum_h < config.min_child_weight:
            builder.set_leaf(node, leaf_weight(sum_g, sum_h))
            continue
        hists = build_node_histograms(binned, g, h, node_rows, features,
                                      n_threads=config.n_threads, pool=pool)
        split = find_best_split(hists, lam, config.gamma_split, config.min_child_weight)
        if split is None:
            builder.set_leaf(node, leaf_weight(sum_g, sum_h))
            continue
        codes = binned.codes[node_rows, split.feature]
        miss = binned.missing[node_rows, split.feature]
        go_left = np.where(miss, split.missing_left, codes <= split.bin_idx)
        left_rows = node_rows[go_left]
        right_rows = node_rows[~go_left]
        left = builder.add_node(split.g_left, split.h_left, len(left_rows))
        right = builder.add_node(split.g_right, split.h_right, len(right_rows))
        builder.set_split(node, split.feature, split.threshold,
                          split.missing_left, split.gain, left, right)
        frontier.append((left, left_rows, depth + 1))
        frontier.append((right, right_rows, depth + 1))
    return builder.freeze()
