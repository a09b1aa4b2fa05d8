"""Extremely randomized trees, built from scratch.

Every tree is trained on the full dataset (no bootstrap).  At each node K
candidate features are drawn without replacement, one uniform threshold is
drawn per candidate between the node-local min and max, and the split with
the best impurity reduction wins (Gini for classification, variance for
regression); ties go to the first-drawn candidate.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_TREES = 100
FORMAT_NAME = "pilesort-forest"
FORMAT_VERSION = 1


@dataclass
class ForestParams:
    n_trees: int = DEFAULT_TREES
    k_features: int | None = None  # None: ceil(sqrt(d)) classifier, d regressor
    n_min: int | None = None       # None: 5 classifier, 2 regressor

    def resolved(self, kind: str, n_features: int) -> tuple[int, int]:
        k = self.k_features
        if k is None:
            k = int(math.ceil(math.sqrt(n_features))) if kind == "classifier" else n_features
        k = min(max(1, k), n_features)
        n_min = self.n_min
        if n_min is None:
            n_min = 5 if kind == "classifier" else 2
        return k, max(1, n_min)


@dataclass
class Tree:
    """Flat array representation; leaves have feature == -1."""

    feature: np.ndarray    # (nodes,) int
    threshold: np.ndarray  # (nodes,) float
    left: np.ndarray       # (nodes,) int
    right: np.ndarray      # (nodes,) int
    value: np.ndarray      # (nodes, output_dim) leaf payloads (zeros inside)

    def predict(self, X: np.ndarray) -> np.ndarray:
        pos = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[pos] >= 0
        while active.any():
            idx = np.nonzero(active)[0]
            nodes = pos[idx]
            go_left = X[idx, self.feature[nodes]] < self.threshold[nodes]
            pos[idx] = np.where(go_left, self.left[nodes], self.right[nodes])
            active = self.feature[pos] >= 0
        return self.value[pos]


@dataclass
class Forest:
    trees: list[Tree]
    kind: str  # "classifier" | "regressor"
    output_dim: int
    params: ForestParams
    classes: np.ndarray | None = None  # classifier only

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("X must be 2D")
        acc = np.zeros((X.shape[0], self.output_dim))
        for t in self.trees:
            acc += t.predict(X)
        return acc / len(self.trees)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return self.predict_many(x[None, :])[0]


def _gini_scores(cols, thr, y_onehot, valid):
    """Gini impurity reduction for each candidate split, -inf where invalid."""
    n = cols.shape[0]
    left = cols < thr[None, :]
    n_left = left.sum(axis=0)
    counts_left = left.T.astype(np.float64) @ y_onehot  # (K, C)
    totals = y_onehot.sum(axis=0)
    counts_right = totals[None, :] - counts_left
    n_right = n - n_left
    ok = valid & (n_left > 0) & (n_right > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        gini_l = 1.0 - (counts_left ** 2).sum(axis=1) / np.maximum(n_left, 1) ** 2
        gini_r = 1.0 - (counts_right ** 2).sum(axis=1) / np.maximum(n_right, 1) ** 2
    parent = 1.0 - ((totals / n) ** 2).sum()
    score = parent - (n_left * gini_l + n_right * gini_r) / n
    return np.where(ok, score, -np.inf), left


def _variance_scores(cols, thr, Y, valid):
    """Total variance reduction (summed over output dims), -inf where invalid."""
    n = cols.shape[0]
    left = cols < thr[None, :]
    n_left = left.sum(axis=0)
    n_right = n - n_left
    s1 = Y.sum(axis=0)
    s2 = (Y * Y).sum(axis=0)
    s1_l = left.T.astype(np.float64) @ Y
    s2_l = left.T.astype(np.float64) @ (Y * Y)
    s1_r = s1[None, :] - s1_l
    s2_r = s2[None, :] - s2_l
    ok = valid & (n_left > 0) & (n_right > 0)
    nl = np.maximum(n_left, 1)[:, None]
    nr = np.maximum(n_right, 1)[:, None]
    ss_parent = (s2 - s1 ** 2 / n).sum()
    ss_l = (s2_l - s1_l ** 2 / nl).sum(axis=1)
    ss_r = (s2_r - s1_r ** 2 / nr).sum(axis=1)
    score = ss_parent - ss_l - ss_r
    return np.where(ok, score, -np.inf), left


def _build_tree(X, Y, kind, k, n_min, rng):
    d = X.shape[1]
    feature, threshold, left_child, right_child, values = [], [], [], [], []
    out_dim = Y.shape[1]

    def leaf_value(idx):
        return Y[idx].mean(axis=0)

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left_child.append(-1)
        right_child.append(-1)
        values.append(np.zeros(out_dim))
        return len(feature) - 1

    stack = [(np.arange(X.shape[0]), new_node())]
    while stack:
        idx, node = stack.pop()
        y_node = Y[idx]
        if len(idx) < n_min or np.all(y_node == y_node[0]):
            values[node] = leaf_value(idx)
            continue
        cand = rng.choice(d, size=min(k, d), replace=False)
        cols = X[idx[:, None], cand[None, :]]
        mins = cols.min(axis=0)
        maxs = cols.max(axis=0)
        valid = maxs > mins
        if not valid.any():
            values[node] = leaf_value(idx)
            continue
        thr = rng.uniform(mins, maxs)
        if kind == "classifier":
            scores, left_masks = _gini_scores(cols, thr, y_node, valid)
        else:
            scores, left_masks = _variance_scores(cols, thr, y_node, valid)
        best = int(np.argmax(scores))
        if not np.isfinite(scores[best]):
            values[node] = leaf_value(idx)
            continue
        mask = left_masks[:, best]
        feature[node] = int(cand[best])
        threshold[node] = float(thr[best])
        l = new_node()
        r = new_node()
        left_child[node] = l
        right_child[node] = r
        stack.append((idx[mask], l))
        stack.append((idx[~mask], r))
    return Tree(np.array(feature, dtype=np.int64),
                np.array(threshold, dtype=np.float64),
                np.array(left_child, dtype=np.int64),
                np.array(right_child, dtype=np.int64),
                np.vstack(values))


def fit(X, Y, kind: str, params: ForestParams | None = None,
        rng: np.random.Generator | None = None) -> Forest:
    """Train a forest of extremely randomized trees on the full dataset.

    Classification expects integer labels in Y (shape (n,)); leaves store
    class frequency vectors over the observed classes.  Regression expects
    target vectors (n, D); leaves store mean targets."""
    if kind not in ("classifier", "regressor"):
        raise ValueError(f"unknown kind {kind!r}")
    params = params or ForestParams()
    rng = rng or np.random.default_rng()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("X must be a nonempty 2D array")
    if not np.isfinite(X).all():
        raise ValueError("features must be finite")
    classes = None
    if kind == "classifier":
        y = np.asarray(Y).ravel()
        if y.shape[0] != X.shape[0]:
            raise ValueError("X/Y length mismatch")
        classes, y_idx = np.unique(y, return_inverse=True)
        Yv = np.eye(len(classes))[y_idx]
    else:
        Yv = np.asarray(Y, dtype=np.float64)
        if Yv.ndim == 1:
            Yv = Yv[:, None]
        if Yv.shape[0] != X.shape[0]:
            raise ValueError("X/Y length mismatch")
    k, n_min = params.resolved(kind, X.shape[1])
    trees = [_build_tree(X, Yv, kind, k, n_min, child)
             for child in rng.spawn(params.n_trees)]
    return Forest(trees, kind, Yv.shape[1], params, classes)


def save(forest: Forest, path) -> None:
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "kind": forest.kind,
        "output_dim": forest.output_dim,
        "params": {"n_trees": forest.params.n_trees,
                   "k_features": forest.params.k_features,
                   "n_min": forest.params.n_min},
        "classes": None if forest.classes is None else forest.classes.tolist(),
        "trees": [{
            "feature": t.feature.tolist(),
            "threshold": t.threshold.tolist(),
            "left": t.left.tolist(),
            "right": t.right.tolist(),
            "value": t.value.tolist(),
        } for t in forest.trees],
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load(path) -> Forest:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != FORMAT_NAME or doc.get("version") != FORMAT_VERSION:
        raise ValueError("unrecognized forest file")
    trees = [Tree(np.array(t["feature"], dtype=np.int64),
                  np.array(t["threshold"], dtype=np.float64),
                  np.array(t["left"], dtype=np.int64),
                  np.array(t["right"], dtype=np.int64),
                  np.array(t["value"], dtype=np.float64))
             for t in doc["trees"]]
    params = ForestParams(**doc["params"])
    classes = None if doc["classes"] is None else np.array(doc["classes"])
    return Forest(trees, doc["kind"], doc["output_dim"], params, classes)
