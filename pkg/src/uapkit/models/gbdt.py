"""Gradient-boosted decision trees on logistic loss, grown leaf-wise.

Each boosting round fits one regression tree to the current gradients
(second-order leaf values and split gains).  Trees grow leaf-wise: the open
leaf with the best split gain is split next, until max_leaves is reached or
no split has positive gain.  Split search is exact over sorted feature
values (no histograms).  Ties break toward the lowest feature index and
lowest threshold.  Training is deterministic; the model family exposes no
input gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..data import LabeledDataset
from .common import sigmoid

MIN_CHILD_HESSIAN = 1e-3  # keeps leaf values finite once scores saturate
MIN_GAIN = 1e-12


@dataclass
class Tree:
    """Array-encoded binary tree; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            internal = self.feature[node] >= 0
            if not internal.any():
                break
            rows = np.nonzero(internal)[0]
            nd = node[rows]
            go_left = X[rows, self.feature[nd]] <= self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
        return self.value[node]


@dataclass
class TreeEnsembleModel:
    trees: list
    base_score: float
    shrinkage: float
    n_features: int
    max_leaves: int
    kind: str = "gbdt"
    loss_trace: tuple = field(default=(), compare=False, repr=False)

    def raw_matrix(self, X: np.ndarray) -> np.ndarray:
        raw = np.full(X.shape[0], self.base_score, dtype=np.float64)
        for t in self.trees:
            raw += self.shrinkage * t.predict(X)
        return raw

    def score_matrix(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(self.raw_matrix(X))


def _best_split(Xcols, rows, g, h):
    """Exact best split for one node; returns (gain, feature, threshold) or None.

    Xcols is the full column-major matrix; rows selects the node's examples.
    """
    gn, hn = g[rows], h[rows]
    G, H = gn.sum(), hn.sum()
    parent = G * G / max(H, MIN_CHILD_HESSIAN)
    best = None
    for f in range(Xcols.shape[1]):
        x = Xcols[rows, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        if xs[0] == xs[-1]:
            continue
        gl = np.cumsum(gn[order])[:-1]
        hl = np.cumsum(hn[order])[:-1]
        valid = xs[:-1] < xs[1:]
        hr = H - hl
        valid &= (hl >= MIN_CHILD_HESSIAN) & (hr >= MIN_CHILD_HESSIAN)
        if not valid.any():
            continue
        gr = G - gl
        gain = np.where(valid, gl * gl / np.maximum(hl, MIN_CHILD_HESSIAN)
                        + gr * gr / np.maximum(hr, MIN_CHILD_HESSIAN) - parent, -np.inf)
        i = int(np.argmax(gain))  # lowest position wins ties
        if gain[i] > (best[0] if best else MIN_GAIN):
            best = (float(gain[i]), f, float((xs[i] + xs[i + 1]) / 2.0))
    return best


def _leaf_value(g, h, rows) -> float:
    G, H = g[rows].sum(), h[rows].sum()
    return float(-G / max(H, MIN_CHILD_HESSIAN))


def _grow_tree(X, g, h, max_leaves) -> Tree:
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    root_rows = np.arange(X.shape[0])
    root = new_node()
    value[root] = _leaf_value(g, h, root_rows)
    # open leaves: (node_id, rows, cached best split); split best-gain leaf first
    open_leaves = [(root, root_rows, _best_split(X, root_rows, g, h))]
    n_leaves = 1
    while n_leaves < max_leaves:
        best_i = -1
        for i, (_, _, split) in enumerate(open_leaves):
            if split is None:
                continue
            if best_i < 0 or split[0] > open_leaves[best_i][2][0]:
                best_i = i  # strict > keeps the earliest-created leaf on ties
        if best_i < 0:
            break
        node, rows, (gain, f, thr) = open_leaves.pop(best_i)
        go_left = X[rows, f] <= thr
        lrows, rrows = rows[go_left], rows[~go_left]
        lnode, rnode = new_node(), new_node()
        feature[node], threshold[node] = f, thr
        left[node], right[node] = lnode, rnode
        value[lnode] = _leaf_value(g, h, lrows)
        value[rnode] = _leaf_value(g, h, rrows)
        open_leaves.append((lnode, lrows, _best_split(X, lrows, g, h)))
        open_leaves.append((rnode, rrows, _best_split(X, rrows, g, h)))
        n_leaves += 1
    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=np.float64),
    )


def train_gbdt(train: LabeledDataset, n_trees: int = 100, max_leaves: int = 31,
               shrinkage: float = 0.1) -> TreeEnsembleModel:
    """Boost n_trees leaf-wise trees on logistic loss; base score is the class-prior log-odds."""
    if len(train) == 0:
        raise ValueError("training set is empty")
    if n_trees < 0:
        raise ValueError("n_trees must be non-negative")
    if max_leaves < 2:
        raise ValueError("max_leaves must be at least 2")
    if shrinkage <= 0:
        raise ValueError("shrinkage must be positive")
    y = train.labels.astype(np.float64)
    prior = float(np.mean(y))
    if prior in (0.0, 1.0):
        raise ValueError("training set must contain both classes")
    X = train.dense_matrix()
    base = float(np.log(prior / (1.0 - prior)))
    raw = np.full(len(y), base, dtype=np.float64)
    trees = []
    trace = []
    for _ in range(n_trees):
        p = sigmoid(raw)
        g = p - y
        h = p * (1.0 - p)
        tree = _grow_tree(X, g, h, max_leaves)
        trees.append(tree)
        raw += shrinkage * tree.predict(X)
        pc = np.clip(sigmoid(raw), 1e-12, 1.0 - 1e-12)
        trace.append(float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))))
    return TreeEnsembleModel(trees, base, shrinkage, train.spec.n_features, max_leaves,
                             loss_trace=tuple(trace))
