"""Regression-tree structure shared by training, prediction, and model files.

Nodes are stored as parallel arrays (struct-of-arrays) in breadth-first
order: node 0 is the root, children are appended as they are created.
Internal nodes carry (feature, threshold, default direction, split gain);
leaves carry the Newton-step weight.  Every node records its gradient sums
and row count so leaf-weight and coverage invariants stay checkable after
training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LEAF = -1


@dataclass
class Tree:
    feature: np.ndarray  # int32; LEAF for leaves
    threshold: np.ndarray  # float64; route left when value <= threshold
    left: np.ndarray  # int32 child indices
    right: np.ndarray
    default_left: np.ndarray  # bool; NaN routing
    value: np.ndarray  # float64 leaf weight (0.0 on internal nodes)
    gain: np.ndarray  # float64 split gain (0.0 on leaves)
    sum_g: np.ndarray  # float64 per-node gradient sum
    sum_h: np.ndarray  # float64 per-node hessian sum
    count: np.ndarray  # int64 rows reaching the node during training

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] == LEAF

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.feature[node] != LEAF:
                depths[self.left[node]] = depths[node] + 1
                depths[self.right[node]] = depths[node] + 1
        return int(depths.max()) if self.n_nodes else 0

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Leaf weights for every row; NaN features follow the default side."""
        n = X.shape[0]
        node = np.zeros(n, dtype=np.int64)
        active = self.feature[node] != LEAF
        while np.any(active):
            idx = np.nonzero(active)[0]
            at = node[idx]
            feat = self.feature[at]
            vals = X[idx, feat]
            miss = np.isnan(vals)
            go_left = np.where(miss, self.default_left[at], vals <= self.threshold[at])
            node[idx] = np.where(go_left, self.left[at], self.right[at])
            active[idx] = self.feature[node[idx]] != LEAF
        return self.value[node]

    def leaf_ids(self) -> np.ndarray:
        return np.nonzero(self.feature == LEAF)[0]


@dataclass
class TreeBuilder:
    """Append-only construction buffer frozen into a :class:`Tree`."""

    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    default_left: list = field(default_factory=list)
    value: list = field(default_factory=list)
    gain: list = field(default_factory=list)
    sum_g: list = field(default_factory=list)
    sum_h: list = field(default_factory=list)
    count: list = field(default_factory=list)

    def add_node(self, g: float, h: float, n: int) -> int:
        """Placeholder node; becomes a leaf or a split later."""
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.default_left.append(True)
        self.value.append(0.0)
        self.gain.append(0.0)
        self.sum_g.append(g)
        self.sum_h.append(h)
        self.count.append(n)
        return len(self.feature) - 1

    def set_leaf(self, node: int, weight: float) -> None:
        self.value[node] = weight

    def set_split(self, node: int, feature: int, threshold: float,
                  default_left: bool, gain: float, left: int, right: int) -> None:
        self.feature[node] = feature
        self.threshold[node] = threshold
        self.default_left[node] = default_left
        self.gain[node] = gain
        self.left[node] = left
        self.right[node] = right

    def freeze(self) -> Tree:
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            default_left=np.asarray(self.default_left, dtype=bool),
            value=np.asarray(self.value, dtype=np.float64),
            gain=np.asarray(self.gain, dtype=np.float64),
            sum_g=np.asarray(self.sum_g, dtype=np.float64),
            sum_h=np.asarray(self.sum_h, dtype=np.float64),
            count=np.asarray(self.count, dtype=np.int64),
        )
