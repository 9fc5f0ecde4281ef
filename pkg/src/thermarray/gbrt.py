"""Histogram gradient-boosted regression trees, self-contained.

Quantile-binned features, least-squares boosting, best-first leaf growth.
Bin ids, not raw values, drive every split, so any two values in one bin are
indistinguishable to the model.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .config import GBRTParams
from .errors import ValidationError

_EARLY_STOP_PATIENCE = 10


@dataclass(frozen=True)
class GBRTModel:
    """Immutable fitted ensemble. Trees are flat node lists; node `feature`
    of -1 marks a leaf."""

    base_prediction: float
    bin_edges: tuple          # per-feature ascending edge arrays
    trees: tuple              # tuple of node-dict tuples
    n_features: int
    feature_config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_features < 1:
            raise ValidationError("model needs at least one feature")
        if len(self.bin_edges) != self.n_features:
            raise ValidationError("one bin-edge array per feature required")
        for tree in self.trees:
            for node in tree:
                if node["feature"] >= self.n_features:
                    raise ValidationError("tree references unknown feature")
                if not np.isfinite(node["leaf_value"]):
                    raise ValidationError("non-finite leaf value")

    def to_dict(self) -> dict:
        return {
            "base_prediction": self.base_prediction,
            "bin_edges": [list(map(float, e)) for e in self.bin_edges],
            "trees": [[dict(n) for n in tree] for tree in self.trees],
            "n_features": self.n_features,
            "feature_config": dict(self.feature_config),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GBRTModel":
        trees = tuple(
            tuple({"feature": int(n["feature"]),
                   "threshold_bin": int(n["threshold_bin"]),
                   "left": int(n["left"]), "right": int(n["right"]),
                   "leaf_value": float(n["leaf_value"])} for n in tree)
            for tree in doc["trees"])
        return cls(base_prediction=float(doc["base_prediction"]),
                   bin_edges=tuple(np.asarray(e, dtype=np.float64)
                                   for e in doc["bin_edges"]),
                   trees=trees,
                   n_features=int(doc["n_features"]),
                   feature_config=dict(doc.get("feature_config", {})))


# --------------------------------------------------------------------------
# binning
# --------------------------------------------------------------------------

def _compute_bin_edges(x: np.ndarray, n_bins: int) -> np.ndarray:
    distinct = np.unique(x)
    if len(distinct) <= 1:
        return np.empty(0)
    if len(distinct) <= n_bins:
        return (distinct[:-1] + distinct[1:]) / 2.0
    qs = np.quantile(x, np.arange(1, n_bins) / n_bins)
    return np.unique(qs)


def _bin_matrix(X: np.ndarray, edges) -> np.ndarray:
    binned = np.empty(X.shape, dtype=np.int32)
    for j, e in enumerate(edges):
        binned[:, j] = np.searchsorted(e, X[:, j], side="right")
    return binned


# --------------------------------------------------------------------------
# tree growth
# --------------------------------------------------------------------------

def _best_split(binned, residual, rows, params: GBRTParams):
    """Best (gain, feature, threshold_bin) over all features for one node."""
    g_total = residual[rows].sum()
    n_total = len(rows)
    lam = params.l2_regularization
    parent = g_total * g_total / (n_total + lam)
    best = None
    for j in range(binned.shape[1]):
        bins = binned[rows, j]
        gsum = np.bincount(bins, weights=residual[rows], minlength=params.n_bins)
        cnt = np.bincount(bins, minlength=params.n_bins)
        gl = np.cumsum(gsum)[:-1]
        nl = np.cumsum(cnt)[:-1]
        gr = g_total - gl
        nr = n_total - nl
        valid = (nl >= params.min_samples_leaf) & (nr >= params.min_samples_leaf)
        if not valid.any():
            continue
        gains = np.where(
            valid,
            gl * gl / np.maximum(nl + lam, 1e-12)
            + gr * gr / np.maximum(nr + lam, 1e-12) - parent,
            -np.inf)
        t = int(np.argmax(gains))
        if gains[t] > 1e-12 and (best is None or gains[t] > best[0]):
            best = (float(gains[t]), j, t)
    return best


def _grow_tree(binned, residual, params: GBRTParams):
    """Best-first growth until max_leaves; returns a flat node list."""
    rows = np.arange(len(residual))
    lam = params.l2_regularization
    nodes = [{"feature": -1, "threshold_bin": -1, "left": -1, "right": -1,
              "leaf_value": float(residual.sum() / (len(residual) + lam))}]
    node_rows = {0: rows}
    heap = []
    counter = 0
    split = _best_split(binned, residual, rows, params)
    if split:
        heapq.heappush(heap, (-split[0], counter, 0, split))
    leaves = 1
    while heap and leaves < params.max_leaves:
        _, _, node_id, (gain, feat, thr) = heapq.heappop(heap)
        rows = node_rows.pop(node_id)
        mask = binned[rows, feat] <= thr
        left_rows, right_rows = rows[mask], rows[~mask]
        children = []
        for child_rows in (left_rows, right_rows):
            g = residual[child_rows].sum()
            nodes.append({"feature": -1, "threshold_bin": -1, "left": -1,
                          "right": -1,
                          "leaf_value": float(g / (len(child_rows) + lam))})
            child_id = len(nodes) - 1
            node_rows[child_id] = child_rows
            children.append(child_id)
        nodes[node_id].update(feature=feat, threshold_bin=thr,
                              left=children[0], right=children[1])
        leaves += 1
        for child_id in children:
            child_split = _best_split(binned, residual, node_rows[child_id], params)
            if child_split:
                counter += 1
                heapq.heappush(heap, (-child_split[0], counter, child_id, child_split))
    return tuple(nodes)


def _predict_binned(tree, binned: np.ndarray) -> np.ndarray:
    pos = np.zeros(len(binned), dtype=np.int64)
    feats = np.array([n["feature"] for n in tree])
    thrs = np.array([n["threshold_bin"] for n in tree])
    lefts = np.array([n["left"] for n in tree])
    rights = np.array([n["right"] for n in tree])
    values = np.array([n["leaf_value"] for n in tree])
    while True:
        internal = feats[pos] >= 0
        if not internal.any():
            break
        idx = np.flatnonzero(internal)
        p = pos[idx]
        go_left = binned[idx, feats[p]] <= thrs[p]
        pos[idx] = np.where(go_left, lefts[p], rights[p])
    return values[pos]


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------

def fit(X, y, params: GBRTParams | None = None,
        feature_config: dict | None = None) -> GBRTModel:
    """Fit boosted trees to least-squares residuals.

    Deterministic per seed. Stops at max_iterations or when validation loss
    (on a held-out fraction) stops improving for 10 rounds.
    """
    if params is None:
        params = GBRTParams()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) == 0:
        raise ValidationError("X must be a non-empty 2D matrix")
    if len(X) != len(y):
        raise ValidationError("X and y length mismatch")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValidationError("non-finite values in training data")
    if len(X) < 2 * params.min_samples_leaf:
        raise ValidationError(
            f"need at least {2 * params.min_samples_leaf} samples")

    n = len(X)
    rng = np.random.default_rng(params.seed)
    n_val = int(n * params.early_stopping_fraction)
    if n_val >= 1 and (n - n_val) >= 2 * params.min_samples_leaf:
        perm = rng.permutation(n)
        val_idx, train_idx = perm[:n_val], perm[n_val:]
    else:
        val_idx, train_idx = np.empty(0, dtype=int), np.arange(n)

    edges = tuple(_compute_bin_edges(X[train_idx, j], params.n_bins)
                  for j in range(X.shape[1]))
    binned = _bin_matrix(X, edges)
    bt, bv = binned[train_idx], binned[val_idx]
    yt, yv = y[train_idx], y[val_idx]

    base = float(yt.mean())
    pred_t = np.full(len(yt), base)
    pred_v = np.full(len(yv), base)
    trees = []
    best_val = np.inf
    stall = 0
    for _ in range(params.max_iterations):
        residual = yt - pred_t
        if np.max(np.abs(residual)) < 1e-12:
            break
        tree = _grow_tree(bt, residual, params)
        if len(tree) == 1 and abs(tree[0]["leaf_value"]) < 1e-15:
            break
        # bake the learning rate into the stored leaves: a prediction is then
        # plainly base + sum of tree outputs
        tree = tuple({**n, "leaf_value": n["leaf_value"] * params.learning_rate}
                     for n in tree)
        trees.append(tree)
        pred_t += _predict_binned(tree, bt)
        if len(yv):
            pred_v += _predict_binned(tree, bv)
            val_loss = float(np.mean((yv - pred_v) ** 2))
            if val_loss < best_val - 1e-12:
                best_val = val_loss
                stall = 0
            else:
                stall += 1
                if stall >= _EARLY_STOP_PATIENCE:
                    break
    return GBRTModel(base_prediction=base, bin_edges=edges, trees=tuple(trees),
                     n_features=X.shape[1],
                     feature_config=dict(feature_config or {}))


def predict(model: GBRTModel, x) -> float | np.ndarray:
    """Base prediction plus the sum of scaled tree outputs. Pure."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    X = arr[None, :] if single else arr
    if X.shape[1] != model.n_features:
        raise ValidationError(
            f"expected {model.n_features} features, got {X.shape[1]}")
    binned = _bin_matrix(X, model.bin_edges)
    out = np.full(len(X), model.base_prediction)
    for tree in model.trees:
        out += _predict_binned(tree, binned)
    return float(out[0]) if single else out
