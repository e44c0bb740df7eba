"""Compiled inner loops for histogram construction, split search and traversal.

Binned data is stored feature-major, shape (n_features, n_rows), uint16. Every
feature reserves the index ``missing_bin`` for NaN; value bins are
``0 .. n_value_bins[f] - 1``. Histograms have shape (n_features, missing_bin + 1, 3)
holding (sum_grad, sum_hess, count) per bin.
"""
import numpy as np
from numba import njit

# smallest gain that counts as an improvement; also used by the exact oracle
GAIN_EPS = 1e-12
# a later candidate must beat the best by this relative margin; mirror-image
# partitions have equal gains that differ only by summation rounding
TIE_RTOL = 1e-10


@njit(cache=True)
def build_histogram(binned, rows, grad, hess, features, n_total_bins, unit_hess):
    n = rows.size
    gg = np.empty(n)
    hh = np.empty(n)
    for k in range(n):
        gg[k] = grad[rows[k]]
        hh[k] = hess[rows[k]]
    hist = np.zeros((binned.shape[0], n_total_bins, 3))
    for j in range(features.size):
        f = features[j]
        col = binned[f]
        h = hist[f]
        if unit_hess:
            for k in range(n):
                b = col[rows[k]]
                h[b, 0] += gg[k]
                h[b, 2] += 1.0
            for b in range(n_total_bins):
                h[b, 1] = h[b, 2]
        else:
            for k in range(n):
                b = col[rows[k]]
                h[b, 0] += gg[k]
                h[b, 1] += hh[k]
                h[b, 2] += 1.0
    return hist


@njit(cache=True)
def subtract_histogram(parent, child, features):
    out = np.zeros_like(parent)
    for j in range(features.size):
        f = features[j]
        out[f] = parent[f] - child[f]
    return out


@njit(cache=True)
def _score(g, h, lam):
    return g * g / (h + lam)


@njit(cache=True)
def find_best_split(hist, features, n_value_bins, missing_bin, G, H, N,
                    lam, min_child_weight, min_child_samples, min_gain):
    """Best (gain, feature, bin, default_left) over the candidate features.

    Left child takes value bins <= bin. Missing rows go left when
    default_left is true. Ties (within ``TIE_RTOL``) keep the first candidate
    in (feature, bin, default_left=True first) order. Returns feature -1 when
    no split beats ``min_gain``.
    """
    parent = _score(G, H, lam)
    best_gain = min_gain
    best_f = -1
    best_b = -1
    best_dl = True
    for j in range(features.size):
        f = features[j]
        h = hist[f]
        mg = h[missing_bin, 0]
        mh = h[missing_bin, 1]
        mn = h[missing_bin, 2]
        nb = n_value_bins[f]
        gl = 0.0
        hl = 0.0
        nl = 0.0
        for b in range(nb):
            gl += h[b, 0]
            hl += h[b, 1]
            nl += h[b, 2]
            last = b == nb - 1
            # missing -> left
            if not last:
                GL = gl + mg
                HL = hl + mh
                NL = nl + mn
                GR = G - GL
                HR = H - HL
                NR = N - NL
                if (NL >= min_child_samples and NR >= min_child_samples
                        and HL >= min_child_weight and HR >= min_child_weight):
                    gain = _score(GL, HL, lam) + _score(GR, HR, lam) - parent
                    if gain > best_gain + TIE_RTOL * abs(best_gain):
                        best_gain = gain
                        best_f = f
                        best_b = b
                        best_dl = True
            # missing -> right; on the last bin this isolates the missing rows
            if mn > 0 or not last:
                GL = gl
                HL = hl
                NL = nl
                GR = G - GL
                HR = H - HL
                NR = N - NL
                if (NL >= min_child_samples and NR >= min_child_samples
                        and HL >= min_child_weight and HR >= min_child_weight):
                    gain = _score(GL, HL, lam) + _score(GR, HR, lam) - parent
                    if gain > best_gain + TIE_RTOL * abs(best_gain):
                        best_gain = gain
                        best_f = f
                        best_b = b
                        best_dl = False
    return best_gain, best_f, best_b, best_dl


@njit(cache=True)
def partition(rows, col, split_bin, default_left, missing_bin):
    left = np.empty(rows.size, dtype=np.int64)
    right = np.empty(rows.size, dtype=np.int64)
    nl = 0
    nr = 0
    for k in range(rows.size):
        r = rows[k]
        b = col[r]
        if b == missing_bin:
            go_left = default_left
        else:
            go_left = b <= split_bin
        if go_left:
            left[nl] = r
            nl += 1
        else:
            right[nr] = r
            nr += 1
    return left[:nl].copy(), right[:nr].copy()


@njit(cache=True)
def node_sums(rows, grad, hess):
    g = 0.0
    h = 0.0
    for k in range(rows.size):
        g += grad[rows[k]]
        h += hess[rows[k]]
    return g, h


@njit(cache=True)
def add_tree_binned(binned, feature, split_bin, default_left, left, right, value,
                    missing_bin, scale, out):
    n = binned.shape[1]
    for i in range(n):
        node = 0
        while left[node] != -1:
            b = binned[feature[node], i]
            if b == missing_bin:
                go_left = default_left[node]
            else:
                go_left = b <= split_bin[node]
            node = left[node] if go_left else right[node]
        out[i] += scale * value[node]


@njit(cache=True)
def predict_raw(X, feature, threshold, default_left, left, right, value,
                roots, scale, out):
    n = X.shape[0]
    for i in range(n):
        acc = 0.0
        for t in range(roots.size):
            node = roots[t]
            while left[node] != -1:
                x = X[i, feature[node]]
                if np.isnan(x):
                    go_left = default_left[node]
                else:
                    go_left = x <= threshold[node]
                node = left[node] if go_left else right[node]
            acc += value[node]
        out[i] += scale * acc
