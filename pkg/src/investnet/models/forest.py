"""Gini random forest with permutation and impurity feature importance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..persist import dump_model, load_model


def gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.dot(p, p))


@dataclass
class Tree:
    """Array-encoded binary tree; leaves have ``feature == -1``.

    ``value[k]`` holds the (negative, positive) class counts reaching node k.
    """

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[tuple[float, float]] = field(default_factory=list)
    impurity_decrease: dict[int, float] = field(default_factory=dict)

    def structure(self):
        return list(zip(self.feature, self.threshold, self.left, self.right))

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        feat = np.array(self.feature)
        thr = np.array(self.threshold)
        left = np.array(self.left)
        right = np.array(self.right)
        val = np.array(self.value, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            inner = feat[node] >= 0
            if not inner.any():
                break
            nd = node[inner]
            go_left = X[inner, feat[nd]] <= thr[nd]
            node[inner] = np.where(go_left, left[nd], right[nd])
        v = val[node]
        return v[:, 1] / v.sum(axis=1)


def _best_split(x: np.ndarray, t: np.ndarray):
    """Lowest weighted Gini split of one feature; returns (impurity, threshold) or None."""
    order = np.argsort(x, kind="stable")
    xs, ts = x[order], t[order]
    n = len(xs)
    distinct = xs[1:] != xs[:-1]
    if not distinct.any():
        return None
    pos_left = np.cumsum(ts)[:-1]
    n_left = np.arange(1, n)
    n_right = n - n_left
    pos_right = ts.sum() - pos_left
    g_left = 1.0 - (pos_left / n_left) ** 2 - (1 - pos_left / n_left) ** 2
    g_right = 1.0 - (pos_right / n_right) ** 2 - (1 - pos_right / n_right) ** 2
    w = (n_left * g_left + n_right * g_right) / n
    w = np.where(distinct, w, np.inf)
    k = int(np.argmin(w))
    return float(w[k]), float(0.5 * (xs[k] + xs[k + 1]))


def build_tree(X: np.ndarray, t: np.ndarray, max_depth: int, max_features: int,
               rng: np.random.Generator, min_samples_split: int = 2) -> Tree:
    """Grow a depth-capped CART tree on targets ``t`` in {0, 1}."""
    tree = Tree()
    n_total = len(X)
    d = X.shape[1]

    def grow(idx, depth):
        node = len(tree.feature)
        tt = t[idx]
        pos = float(tt.sum())
        counts = np.array([len(idx) - pos, pos])
        tree.feature.append(-1)
        tree.threshold.append(0.0)
        tree.left.append(-1)
        tree.right.append(-1)
        tree.value.append((counts[0], counts[1]))
        parent = gini(counts)
        if depth >= max_depth or len(idx) < min_samples_split or parent == 0.0:
            return node
        best = None
        for f in rng.choice(d, size=max_features, replace=False):
            res = _best_split(X[idx, f], tt)
            if res is not None and (best is None or res[0] < best[0]):
                best = (res[0], res[1], int(f))
        if best is None or parent - best[0] <= 1e-12:
            return node
        imp, thr, f = best
        mask = X[idx, f] <= thr
        tree.feature[node] = f
        tree.threshold[node] = thr
        tree.impurity_decrease[f] = tree.impurity_decrease.get(f, 0.0) + len(idx) / n_total * (parent - imp)
        tree.left[node] = grow(idx[mask], depth + 1)
        tree.right[node] = grow(idx[~mask], depth + 1)
        return node

    grow(np.arange(n_total), 0)
    return tree


@dataclass
class ForestModel:
    trees: list[Tree]
    seeds: list[int]
    max_features: int
    n_features: int
    oob_accuracy: float | None = None

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return np.mean([tr.predict_proba(X) for tr in self.trees], axis=0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.where(self.predict_proba(X) > 0.5, 1, -1)

    def save(self, path) -> None:
        dump_model("forest", {
            "seeds": self.seeds, "max_features": self.max_features, "n_features": self.n_features,
            "oob_accuracy": self.oob_accuracy,
            "trees": [{"feature": t.feature, "threshold": t.threshold, "left": t.left, "right": t.right,
                       "value": [list(v) for v in t.value],
                       "impurity_decrease": {str(k): v for k, v in t.impurity_decrease.items()}}
                      for t in self.trees],
        }, path)

    @classmethod
    def load(cls, path) -> "ForestModel":
        doc = load_model("forest", path)
        trees = [Tree(t["feature"], t["threshold"], t["left"], t["right"], [tuple(v) for v in t["value"]],
                      {int(k): v for k, v in t["impurity_decrease"].items()}) for t in doc["trees"]]
        return cls(trees, doc["seeds"], doc["max_features"], doc["n_features"], doc["oob_accuracy"])

    def impurity_importance(self) -> np.ndarray:
        out = np.zeros(self.n_features)
        for tr in self.trees:
            total = sum(tr.impurity_decrease.values())
            if total > 0:
                for f, v in tr.impurity_decrease.items():
                    out[f] += v / total
        return out / len(self.trees)


def _canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.lexsort(np.column_stack([X, y]).T[::-1])


def train_forest(X: np.ndarray, y: np.ndarray, n_trees: int = 100, max_depth: int = 8,
                 max_features: int | None = None, seed: int = 0) -> ForestModel:
    """Bagged Gini trees; labels in {+1, -1}. Rows are put in a canonical order
    first so the fitted forest does not depend on input order."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(X) < 2 or len(np.unique(y)) < 2:
        raise ValueError("forest needs at least 2 samples covering both classes")
    order = _canonical_order(X, y)
    X, y = X[order], y[order]
    n, d = X.shape
    mtry = min(d, max_features or math.ceil(math.sqrt(d)))
    t = (y > 0).astype(float)
    seeds = np.random.SeedSequence(seed).generate_state(n_trees).tolist()
    trees = []
    votes = np.zeros((n, 2))
    for s in seeds:
        rng = np.random.default_rng(s)
        boot = rng.integers(0, n, size=n)
        tree = build_tree(X[boot], t[boot], max_depth, mtry, rng)
        trees.append(tree)
        oob = np.setdiff1d(np.arange(n), boot)
        if len(oob):
            p = tree.predict_proba(X[oob])
            votes[oob, 1] += p
            votes[oob, 0] += 1 - p
    seen = votes.sum(axis=1) > 0
    oob_acc = None
    if seen.any():
        pred = np.where(votes[seen, 1] > votes[seen, 0], 1.0, 0.0)
        oob_acc = float(np.mean(pred == t[seen]))
    return ForestModel(trees, seeds, mtry, d, oob_acc)


@dataclass(frozen=True)
class Importance:
    feature: str
    permutation_mean: float
    permutation_std: float
    impurity: float


def feature_importance(model: ForestModel, X: np.ndarray, y: np.ndarray, names: Sequence[str],
                       n_repeats: int = 10, seed: int = 0) -> list[Importance]:
    """Mean accuracy drop when each column is permuted, ranked highest first (ties by name)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    order = _canonical_order(X, y)
    X, y = X[order], y[order]
    base = np.mean(model.predict(X) == y)
    rng = np.random.default_rng(seed)
    mdi = model.impurity_importance()
    rows = []
    for c, name in enumerate(names):
        drops = []
        for _ in range(n_repeats):
            Xp = X.copy()
            Xp[:, c] = X[rng.permutation(len(X)), c]
            drops.append(base - np.mean(model.predict(Xp) == y))
        rows.append(Importance(name, float(np.mean(drops)), float(np.std(drops)), float(mdi[c])))
    rows.sort(key=lambda r: (-r.permutation_mean, r.feature))
    return rows
