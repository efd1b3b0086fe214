"""Depth-bounded CART regression trees with exact split scans.

Splits maximize variance reduction over every boundary between distinct
feature values. Each column is rank-encoded once per fit (ranks over all
distinct values), so a node scan is one bincount per feature instead of a
sort: exact-scan semantics at histogram cost. Thresholds are midpoints of
the adjacent distinct values present in the node. Row weights carry
bootstrap multiplicities (random forest) and subsample masks (boosting);
min_leaf counts weighted rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_GAIN_EPS = 1e-12


@dataclass
class Tree:
    feature: np.ndarray    # int32, -1 at leaves
    threshold: np.ndarray  # float64
    left: np.ndarray       # int32
    right: np.ndarray      # int32
    value: np.ndarray      # float64 leaf predictions (internal nodes carry node mean)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int32)
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                return self.value[node]
            rows = np.nonzero(active)[0]
            go_left = X[rows, feat[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int32),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int32),
            right=np.asarray(d["right"], dtype=np.int32),
            value=np.asarray(d["value"], dtype=np.float64),
        )


def rank_encode(X: np.ndarray):
    """Per-column dense ranks over distinct values, shared by all trees of a fit.

    Returns (ranks, values): ranks[i, f] indexes values[f], which holds the
    column's sorted distinct values.
    """
    X = np.asarray(X, dtype=np.float64)
    ranks = np.empty(X.shape, dtype=np.int32)
    values = []
    for f in range(X.shape[1]):
        vals, inv = np.unique(X[:, f], return_inverse=True)
        values.append(vals)
        ranks[:, f] = inv
    return ranks, values


def _scan_feature(r, yw, w_rows, n_bins, min_leaf):
    """Best boundary for one feature: (score, boundary_rank) or None.

    `r` are the node rows' ranks, `yw` the (weighted) targets, `w_rows` the
    weights or None.
    """
    if w_rows is None:
        cnt = np.bincount(r, minlength=n_bins).astype(np.float64)
        s = np.bincount(r, weights=yw, minlength=n_bins)
    else:
        cnt = np.bincount(r, weights=w_rows, minlength=n_bins)
        s = np.bincount(r, weights=yw, minlength=n_bins)
    ccnt = np.cumsum(cnt)
    csum = np.cumsum(s)
    total_cnt = ccnt[-1]
    total_sum = csum[-1]
    lcnt = ccnt[:-1]
    rcnt = total_cnt - lcnt
    valid = (lcnt >= min_leaf) & (rcnt >= min_leaf)
    if not valid.any():
        return None
    lsum = csum[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        score = lsum * lsum / lcnt + (total_sum - lsum) ** 2 / rcnt
    score[~valid] = -np.inf
    b = int(np.argmax(score))
    return float(score[b]), b, cnt


def build_tree(X, y, max_depth=6, min_leaf=1, weights=None, rng=None,
               feature_frac=1.0, bins=None) -> Tree:
    """Fit one regression tree.

    `weights` are nonnegative row multiplicities; zero-weight rows are
    excluded. `feature_frac` < 1 subsamples candidate features per node
    (seeded by rng, drawn in deterministic DFS order). `bins` is the cached
    result of rank_encode(X).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, n_features = X.shape
    if bins is None:
        bins = rank_encode(X)
    ranks, values = bins
    if weights is None:
        w = None
        root_rows = np.arange(n, dtype=np.int64)
    else:
        w = np.asarray(weights, dtype=np.float64)
        root_rows = np.nonzero(w > 0)[0]
        if len(root_rows) == 0:
            raise ValueError("cannot fit a tree on zero rows")
    n_pick = max(1, int(round(feature_frac * n_features)))
    subset_features = rng is not None and feature_frac < 1.0

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    def grow(rows, depth):
        node = new_node()
        yr = y[rows]
        if w is None:
            total_w = float(len(rows))
            value[node] = float(yr.mean())
            wr = None
            yw = yr
        else:
            wr = w[rows]
            total_w = float(wr.sum())
            value[node] = float(np.dot(wr, yr) / total_w)
            yw = wr * yr
        if (max_depth is not None and depth >= max_depth) or total_w < 2 * min_leaf:
            return node
        if subset_features:
            cand = np.sort(rng.choice(n_features, size=n_pick, replace=False))
        else:
            cand = range(n_features)
        parent_score = (
            (yw.sum() ** 2) / total_w if w is not None else yr.sum() ** 2 / total_w
        )
        best = None
        for f in cand:
            r = ranks[rows, f]
            found = _scan_feature(r, yw, wr, len(values[f]), min_leaf)
            if found is None:
                continue
            score, b, cnt = found
            if best is None or score > best[0]:
                best = (score, f, b, cnt)
        if best is None or best[0] - parent_score <= _GAIN_EPS:
            return node
        _, f, b, cnt = best
        occupied = np.nonzero(cnt > 0)[0]
        pos = int(np.searchsorted(occupied, b, side="right"))
        thr = 0.5 * (values[f][occupied[pos - 1]] + values[f][occupied[pos]])
        go_left = ranks[rows, f] <= b
        feature[node] = int(f)
        threshold[node] = float(thr)
        left[node] = grow(rows[go_left], depth + 1)
        right[node] = grow(rows[~go_left], depth + 1)
        return node

    grow(root_rows, 0)
    return Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        value=np.asarray(value, dtype=np.float64),
    )
