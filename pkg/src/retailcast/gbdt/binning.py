"""Quantile binning of real-valued feature columns."""
from __future__ import annotations

import numpy as np


def bin_edges(column, n_bins: int) -> np.ndarray:
    """Upper edges separating at most ``n_bins`` value bins.

    Columns with no more than ``n_bins`` distinct finite values get one bin
    per value, split at midpoints. Otherwise edges sit at the
    ``k / n_bins`` quantiles (linear interpolation), deduplicated.
    A constant or all-missing column yields no edges, i.e. one bin.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    x = np.asarray(column, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        return np.empty(0)
    distinct = np.unique(x)
    if distinct.size <= 1:
        return np.empty(0)
    if distinct.size <= n_bins:
        return (distinct[:-1] + distinct[1:]) / 2.0
    qs = np.quantile(x, np.arange(1, n_bins) / n_bins)
    edges = np.unique(qs)
    # an edge equal to the max would leave the top bin empty
    return edges[edges < distinct[-1]]


class BinMapper:
    """Per-feature edges plus the mapping from raw values to bin indices.

    ``missing_bin`` equals ``n_bins`` and is shared by every feature.
    """

    def __init__(self, n_bins: int = 255):
        if not 2 <= n_bins <= 256:
            raise ValueError("n_bins must lie in [2, 256]")
        self.n_bins = n_bins
        self.edges: list[np.ndarray] = []

    @property
    def missing_bin(self) -> int:
        return self.n_bins

    @property
    def n_value_bins(self) -> np.ndarray:
        return np.array([e.size + 1 for e in self.edges], dtype=np.int64)

    def fit(self, X: np.ndarray) -> "BinMapper":
        X = np.asarray(X, dtype=float)
        self.edges = [bin_edges(X[:, j], self.n_bins) for j in range(X.shape[1])]
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Feature-major uint16 bin matrix, shape (n_features, n_rows)."""
        X = np.asarray(X, dtype=float)
        if X.shape[1] != len(self.edges):
            raise ValueError(f"expected {len(self.edges)} features, got {X.shape[1]}")
        out = np.empty((X.shape[1], X.shape[0]), dtype=np.uint16)
        for j, e in enumerate(self.edges):
            col = X[:, j]
            b = np.searchsorted(e, col, side="left")
            b[np.isnan(col)] = self.missing_bin
            out[j] = b
        return out
