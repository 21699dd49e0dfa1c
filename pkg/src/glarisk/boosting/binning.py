"""Quantile binning of feature columns for histogram split finding.

Each feature gets at most ``n_bins`` strictly increasing upper edges; a
finite value belongs to the first bin whose edge is >= the value.  When a
column has no more distinct values than bins, every distinct value becomes
its own edge, which makes histogram splits exactly equal to exact-greedy
splits.  NaN never enters a bin; it is tracked in a separate mask and
handled by the split finder's missing bucket.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Columns longer than this are subsampled (seeded) before the quantile
# sketch; below it the quantiles are exact.
SKETCH_CAP = 1 << 17


def build_bins(values: np.ndarray, n_bins: int, seed: int = 0) -> np.ndarray:
    """Upper bin edges for one column.

    Returns <= ``n_bins`` strictly increasing edges whose last entry is the
    column maximum, so every finite training value maps to exactly one bin.
    A constant column yields a single bin; an all-NaN column yields a single
    dummy edge (all its rows live in the missing bucket).
    """
    arr = np.asarray(values, dtype=np.float64)
    finite = arr[np.isfinite(arr)]
    if finite.size == 0:
        return np.array([0.0])
    distinct = np.unique(finite)
    if distinct.size <= n_bins:
        return distinct
    if finite.size > SKETCH_CAP:
        rng = np.random.Generator(np.random.PCG64(seed))
        finite = finite[rng.choice(finite.size, size=SKETCH_CAP, replace=False)]
    probs = np.arange(1, n_bins + 1) / n_bins
    edges = np.unique(np.quantile(finite, probs))
    edges[-1] = distinct[-1]  # true max, not the sketch max
    return np.unique(edges)


def bin_column(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Bin indices for finite values (index of first edge >= value)."""
    codes = np.searchsorted(edges, values, side="left")
    return np.minimum(codes, len(edges) - 1)


@dataclass(frozen=True)
class BinnedMatrix:
    """Column-binned view of a training matrix."""

    codes: np.ndarray  # (n, d) integer bin indices; arbitrary where missing
    missing: np.ndarray  # (n, d) bool
    edges: tuple[np.ndarray, ...]  # per-feature upper edges

    @property
    def n_rows(self) -> int:
        return self.codes.shape[0]

    @property
    def n_features(self) -> int:
        return self.codes.shape[1]

    def n_bins_of(self, feature: int) -> int:
        return len(self.edges[feature])


def bin_matrix(X: np.ndarray, n_bins: int, seed: int = 0) -> BinnedMatrix:
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if n_bins <= 256:
        dtype = np.uint8
    elif n_bins <= 65536:
        dtype = np.uint16
    else:
        dtype = np.int32
    codes = np.zeros((n, d), dtype=dtype)
    missing = ~np.isfinite(X)
    edges = []
    for j in range(d):
        col_edges = build_bins(X[:, j], n_bins, seed)
        edges.append(col_edges)
        finite_rows = ~missing[:, j]
        codes[finite_rows, j] = bin_column(X[finite_rows, j], col_edges).astype(dtype)
    return BinnedMatrix(codes=codes, missing=missing, edges=tuple(edges))
