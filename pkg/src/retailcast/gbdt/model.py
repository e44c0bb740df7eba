"""Histogram gradient-boosted regression trees.

Second-order boosting with L2-regularised leaves, histogram split search with a
learned default direction for missing values, and either best-first
(leaf-wise) or depth-wise tree growth.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import pandas as pd

from . import _kernels as K
from .binning import BinMapper


@dataclass(frozen=True)
class GbdtConfig:
    n_rounds: int = 500
    learning_rate: float = 0.05
    max_depth: int = -1
    max_leaves: int = 31
    min_child_weight: float = 1e-3
    min_child_samples: int = 1
    lambda_l2: float = 1.0
    n_bins: int = 255
    subsample: float = 1.0
    colsample: float = 1.0
    loss: str = "squared"
    quantile: float = 0.5
    growth: str = "leaf"
    min_split_gain: float = 0.0
    seed: int = 0

    def __post_init__(self):
        errors = []
        if self.n_rounds < 0:
            errors.append("n_rounds must be >= 0")
        if not 0 < self.learning_rate <= 1:
            errors.append("learning_rate must lie in (0, 1]")
        if self.max_depth == 0 or self.max_depth < -1:
            errors.append("max_depth must be >= 1 or -1 for unlimited")
        if self.max_leaves < 2:
            errors.append("max_leaves must be >= 2")
        if self.min_child_weight < 0 or self.lambda_l2 < 0:
            errors.append("min_child_weight and lambda_l2 must be >= 0")
        if not 2 <= self.n_bins <= 256:
            errors.append("n_bins must lie in [2, 256]")
        if not 0 < self.subsample <= 1 or not 0 < self.colsample <= 1:
            errors.append("subsample and colsample must lie in (0, 1]")
        if self.loss not in ("squared", "quantile"):
            errors.append(f"unknown loss {self.loss!r}")
        if not 0 < self.quantile < 1:
            errors.append("quantile must lie in (0, 1)")
        if self.growth not in ("leaf", "level"):
            errors.append(f"unknown growth {self.growth!r}")
        if self.growth == "level" and self.max_depth == -1:
            errors.append("level-wise growth needs a finite max_depth")
        if errors:
            raise ValueError("; ".join(errors))


@dataclass
class Tree:
    """Flat binary tree; node 0 is the root and ``left == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    split_bin: np.ndarray
    default_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.left == -1))

    def depth(self) -> int:
        def rec(i):
            if self.left[i] == -1:
                return 0
            return 1 + max(rec(self.left[i]), rec(self.right[i]))
        return rec(0)


@dataclass
class GbdtModel:
    base_score: float
    learning_rate: float
    trees: list[Tree]
    bin_edges: list[np.ndarray]
    feature_names: list[str]
    importance_gain: np.ndarray
    importance_split: np.ndarray
    config: GbdtConfig
    train_loss: list[float] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def feature_importance(self, kind: str = "gain") -> dict[str, float]:
        arr = self.importance_gain if kind == "gain" else self.importance_split
        return {n: float(v) for n, v in zip(self.feature_names, arr)}

    def _flat(self):
        if not self.trees:
            return None
        offsets = np.cumsum([0] + [t.left.size for t in self.trees[:-1]])

        def cat(attr, shift=False):
            parts = []
            for off, t in zip(offsets, self.trees):
                a = getattr(t, attr)
                if shift:
                    a = np.where(a >= 0, a + off, -1)
                parts.append(a)
            return np.concatenate(parts)

        return (cat("feature").astype(np.int64), cat("threshold").astype(float),
                cat("default_left").astype(np.bool_), cat("left", True).astype(np.int64),
                cat("right", True).astype(np.int64), cat("value").astype(float),
                offsets.astype(np.int64))

    def predict(self, X) -> np.ndarray:
        X = _as_matrix(X, self.feature_names)
        out = np.full(X.shape[0], self.base_score, dtype=float)
        flat = self._flat()
        if flat is not None:
            feat, thr, dl, lft, rgt, val, roots = flat
            K.predict_raw(X, feat, thr, dl, lft, rgt, val, roots, self.learning_rate, out)
        return out


def _as_matrix(X, feature_names: Sequence[str]) -> np.ndarray:
    if isinstance(X, pd.DataFrame):
        missing = [c for c in feature_names if c not in X.columns]
        if missing:
            raise KeyError(f"rows lack training features {missing}")
        return np.ascontiguousarray(X[list(feature_names)].to_numpy(dtype=float))
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(feature_names):
        raise ValueError(f"expected a 2-d array with {len(feature_names)} columns, got shape {X.shape}")
    return np.ascontiguousarray(X)


def split_gain(g_left: float, h_left: float, g_right: float, h_right: float, lam: float) -> float:
    """Loss reduction of splitting a node into the given children."""
    def score(g, h):
        return g * g / (h + lam) if h + lam > 0 else 0.0
    return score(g_left, h_left) + score(g_right, h_right) - score(g_left + g_right, h_left + h_right)


def _gradients(y, pred, cfg):
    if cfg.loss == "squared":
        return pred - y, np.ones_like(y)
    tau = cfg.quantile
    g = np.where(pred >= y, 1.0 - tau, -tau)
    return g, np.ones_like(y)


def _loss(y, pred, cfg) -> float:
    if cfg.loss == "squared":
        return float(np.mean((pred - y) ** 2))
    d = y - pred
    return float(np.mean(np.maximum(cfg.quantile * d, (cfg.quantile - 1) * d)))


class _Node:
    __slots__ = ("idx", "rows", "G", "H", "depth", "hist", "split")

    def __init__(self, idx, rows, G, H, depth, hist):
        self.idx = idx
        self.rows = rows
        self.G = G
        self.H = H
        self.depth = depth
        self.hist = hist
        self.split = None


class _TreeBuilder:
    def __init__(self, binned, mapper, grad, hess, features, cfg):
        self.binned = binned
        self.grad = grad
        self.hess = hess
        self.features = features
        self.cfg = cfg
        self.missing_bin = mapper.missing_bin
        self.n_total = mapper.missing_bin + 1
        self.n_value_bins = mapper.n_value_bins
        self.edges = mapper.edges
        self.unit_hess = bool(np.all(hess == 1.0))
        self.feature, self.split_bin, self.default_left = [], [], []
        self.left, self.right, self.gain, self.G, self.H = [], [], [], [], []
        self.leaf_rows: dict[int, np.ndarray] = {}

    def _new_node(self, rows, depth, hist=None):
        idx = len(self.feature)
        for lst, v in ((self.feature, -1), (self.split_bin, -1), (self.default_left, True),
                       (self.left, -1), (self.right, -1), (self.gain, 0.0)):
            lst.append(v)
        if hist is None:
            hist = K.build_histogram(self.binned, rows, self.grad, self.hess,
                                     self.features, self.n_total, self.unit_hess)
        G, H = K.node_sums(rows, self.grad, self.hess)
        self.G.append(G)
        self.H.append(H)
        node = _Node(idx, rows, G, H, depth, hist)
        self._evaluate(node)
        return node

    def _evaluate(self, node):
        cfg = self.cfg
        if cfg.max_depth != -1 and node.depth >= cfg.max_depth:
            node.split = None
            return
        gain, f, b, dl = K.find_best_split(
            node.hist, self.features, self.n_value_bins, self.missing_bin,
            node.G, node.H, float(node.rows.size), cfg.lambda_l2,
            cfg.min_child_weight, float(cfg.min_child_samples),
            max(cfg.min_split_gain, K.GAIN_EPS))
        node.split = (gain, f, b, dl) if f >= 0 else None

    def _split(self, node):
        gain, f, b, dl = node.split
        lrows, rrows = K.partition(node.rows, self.binned[f], b, dl, self.missing_bin)
        if lrows.size <= rrows.size:
            lhist = K.build_histogram(self.binned, lrows, self.grad, self.hess, self.features, self.n_total, self.unit_hess)
            rhist = K.subtract_histogram(node.hist, lhist, self.features)
        else:
            rhist = K.build_histogram(self.binned, rrows, self.grad, self.hess, self.features, self.n_total, self.unit_hess)
            lhist = K.subtract_histogram(node.hist, rhist, self.features)
        node.hist = None
        left = self._new_node(lrows, node.depth + 1, lhist)
        right = self._new_node(rrows, node.depth + 1, rhist)
        i = node.idx
        self.feature[i] = f
        self.split_bin[i] = b
        self.default_left[i] = dl
        self.left[i] = left.idx
        self.right[i] = right.idx
        self.gain[i] = gain
        return left, right

    def grow(self, rows) -> None:
        root = self._new_node(rows, 0)
        leaves = []
        if self.cfg.growth == "leaf":
            heap = []
            n_leaves = 1
            if root.split is not None:
                heapq.heappush(heap, (-root.split[0], root.idx, root))
            else:
                leaves.append(root)
            while heap and n_leaves < self.cfg.max_leaves:
                _, _, node = heapq.heappop(heap)
                for child in self._split(node):
                    if child.split is not None:
                        heapq.heappush(heap, (-child.split[0], child.idx, child))
                    else:
                        leaves.append(child)
                n_leaves += 1
            leaves.extend(item[2] for item in heap)
        else:
            frontier = [root]
            while frontier:
                nxt = []
                for node in frontier:
                    if node.split is None:
                        leaves.append(node)
                    else:
                        nxt.extend(self._split(node))
                frontier = nxt
        for leaf in leaves:
            self.leaf_rows[leaf.idx] = leaf.rows

    def finish(self, leaf_values: dict[int, float]) -> Tree:
        n = len(self.feature)
        value = np.zeros(n)
        for idx, v in leaf_values.items():
            value[idx] = v
        feature = np.array(self.feature, dtype=np.int64)
        split_bin = np.array(self.split_bin, dtype=np.int64)
        threshold = np.full(n, np.nan)
        for i in range(n):
            if feature[i] >= 0:
                e = self.edges[feature[i]]
                threshold[i] = e[split_bin[i]] if split_bin[i] < e.size else np.inf
        return Tree(
            feature=feature, threshold=threshold, split_bin=split_bin,
            default_left=np.array(self.default_left, dtype=bool),
            left=np.array(self.left, dtype=np.int64), right=np.array(self.right, dtype=np.int64),
            value=value, gain=np.array(self.gain, dtype=float),
        )


def _canonical_order(binned: np.ndarray, y: np.ndarray) -> np.ndarray:
    # rows equal in every bin and in the target are interchangeable
    keys = [y] + [binned[j] for j in range(binned.shape[0] - 1, -1, -1)]
    return np.lexsort(keys)


def fit(X, y, cfg: GbdtConfig | None = None, feature_names: Sequence[str] | None = None,
        record_loss: bool = False) -> GbdtModel:
    """Fit a boosted ensemble to training rows.

    ``X`` may be a DataFrame (its columns become the feature names) or a
    2-d array. Row order does not affect the fitted model.
    """
    cfg = cfg or GbdtConfig()
    if isinstance(X, pd.DataFrame):
        feature_names = list(X.columns) if feature_names is None else list(feature_names)
        X = X[feature_names].to_numpy(dtype=float)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("training set is empty")
    if X.shape[1] == 0:
        raise ValueError("training set has no features")
    if y.shape != (X.shape[0],):
        raise ValueError("target length does not match rows")
    if np.isnan(y).any():
        raise ValueError("target contains NaN")
    if feature_names is None:
        feature_names = [f"f{j}" for j in range(X.shape[1])]
    feature_names = list(feature_names)

    mapper = BinMapper(cfg.n_bins).fit(X)
    binned = mapper.transform(X)
    order = _canonical_order(binned, y)
    binned = np.ascontiguousarray(binned[:, order])
    y = y[order]
    n, F = y.size, X.shape[1]

    base = float(np.mean(y)) if cfg.loss == "squared" else float(np.quantile(y, cfg.quantile))
    pred = np.full(n, base)
    rng = np.random.default_rng(cfg.seed)
    imp_gain = np.zeros(F)
    imp_split = np.zeros(F)
    trees: list[Tree] = []
    losses = [_loss(y, pred, cfg)] if record_loss else []
    all_rows = np.arange(n, dtype=np.int64)
    all_feats = np.arange(F, dtype=np.int64)

    for _ in range(cfg.n_rounds):
        grad, hess = _gradients(y, pred, cfg)
        rows = all_rows
        if cfg.subsample < 1:
            k = max(1, int(round(cfg.subsample * n)))
            rows = np.sort(rng.choice(n, size=k, replace=False)).astype(np.int64)
        feats = all_feats
        if cfg.colsample < 1:
            k = max(1, int(round(cfg.colsample * F)))
            feats = np.sort(rng.choice(F, size=k, replace=False)).astype(np.int64)
        builder = _TreeBuilder(binned, mapper, grad, hess, feats, cfg)
        builder.grow(rows)
        values = {}
        for idx, lrows in builder.leaf_rows.items():
            if cfg.loss == "squared":
                values[idx] = -builder.G[idx] / (builder.H[idx] + cfg.lambda_l2)
            else:
                values[idx] = float(np.quantile(y[lrows] - pred[lrows], cfg.quantile))
        tree = builder.finish(values)
        K.add_tree_binned(binned, tree.feature, tree.split_bin, tree.default_left,
                          tree.left, tree.right, tree.value, mapper.missing_bin,
                          cfg.learning_rate, pred)
        internal = tree.feature >= 0
        np.add.at(imp_gain, tree.feature[internal], tree.gain[internal])
        np.add.at(imp_split, tree.feature[internal], 1.0)
        trees.append(tree)
        if record_loss:
            losses.append(_loss(y, pred, cfg))

    return GbdtModel(
        base_score=base, learning_rate=cfg.learning_rate, trees=trees,
        bin_edges=mapper.edges, feature_names=feature_names,
        importance_gain=imp_gain, importance_split=imp_split, config=cfg,
        train_loss=losses,
    )


def predict(model: GbdtModel, X) -> np.ndarray:
    return model.predict(X)


def feature_importance(model: GbdtModel, kind: str = "gain") -> dict[str, float]:
    return model.feature_importance(kind)


def with_overrides(cfg: GbdtConfig, **overrides) -> GbdtConfig:
    return replace(cfg, **overrides)
