"""Slow, loop-based reference implementations used to check the fast code.

Nothing here imports the package's metric or tree code; only plain Python,
``math.fsum`` and small numpy helpers for sorting.
"""
from __future__ import annotations

import datetime as dt
import math
from collections import defaultdict

import numpy as np

NAN = float("nan")
EPOCH_MONDAY = dt.date(1970, 1, 5)


# ---------------------------------------------------------------- metrics

def _div(a, b):
    return a / b if b != 0 else NAN


def ref_scales(history):
    ys = [float(v) for v in history if not math.isnan(float(v))]
    if len(ys) < 2:
        return NAN, NAN
    d = [ys[i + 1] - ys[i] for i in range(len(ys) - 1)]
    s1 = math.fsum(abs(x) for x in d) / len(d)
    s2 = math.fsum(x * x for x in d) / len(d)
    if s1 == 0:
        return NAN, NAN
    return s1, s2


def ref_metrics(rows, history, bucket_days=7):
    """All fifteen metrics from a list of row dicts.

    Row keys: series, product, group, zone, date (datetime.date), t, p,
    price, cogs, rebate. ``history`` maps series to training values.
    """
    n = len(rows)
    t = [r["t"] for r in rows]
    p = [r["p"] for r in rows]
    e = [pi - ti for pi, ti in zip(p, t)]
    mse = math.fsum(x * x for x in e) / n
    mae = math.fsum(abs(x) for x in e) / n
    me = math.fsum(e) / n
    tbar = math.fsum(t) / n
    sst = math.fsum((x - tbar) ** 2 for x in t)
    out = {
        "mse": mse,
        "rmse": math.sqrt(mse),
        "mae": mae,
        "r2": 1 - math.fsum(x * x for x in e) / sst if sst > 0 else NAN,
        "me": me,
        "mfb": _div(math.fsum(e), math.fsum(t)),
        "theils_bias": 0.0 if mse == 0 else min(1.0, me * me / mse),
    }

    def rev(r, s):
        return s * r["price"]

    def pro(r, s):
        return s * (r["price"] - r["cogs"] + r["rebate"])

    # group level: (zone, group) cells
    for name, fn in (("group_rev_wmape", rev), ("group_profit_wmape", pro)):
        cells = defaultdict(lambda: [[], []])
        for r in rows:
            c = cells[(r["zone"], r["group"])]
            c[0].append(fn(r, r["t"]))
            c[1].append(fn(r, r["p"]))
        num = math.fsum(abs(math.fsum(pp) - math.fsum(tt)) for tt, pp in cells.values())
        den = math.fsum(math.fsum(tt) for tt, _ in cells.values())
        out[name] = _div(num, den)

    # series level: per product over its zone cells, then unweighted mean
    for name, fn in (("series_rev_wmape", rev), ("series_profit_wmape", pro)):
        cells = defaultdict(lambda: [[], []])
        for r in rows:
            c = cells[(r["product"], r["zone"])]
            c[0].append(fn(r, r["t"]))
            c[1].append(fn(r, r["p"]))
        per = defaultdict(lambda: [[], []])
        for (prod, _), (tt, pp) in cells.items():
            per[prod][0].append(abs(math.fsum(pp) - math.fsum(tt)))
            per[prod][1].append(math.fsum(tt))
        vals = [_div(math.fsum(a), math.fsum(b)) for a, b in per.values()]
        vals = [v for v in vals if not math.isnan(v)]
        out[name] = math.fsum(vals) / len(vals) if vals else NAN

    # demand error / bias over (series, bucket) cells
    cells = defaultdict(lambda: [[], []])
    for r in rows:
        b = (r["date"] - EPOCH_MONDAY).days // bucket_days
        c = cells[(r["series"], b)]
        c[0].append(r["t"])
        c[1].append(r["p"])
    diffs = [math.fsum(pp) - math.fsum(tt) for tt, pp in cells.values()]
    tot = math.fsum(math.fsum(tt) for tt, _ in cells.values())
    out["demand_error"] = _div(math.fsum(abs(d) for d in diffs), tot)
    out["demand_bias"] = _div(math.fsum(diffs), tot)

    # scaled errors, averaged over series with a usable scale
    by_series = defaultdict(list)
    for r in rows:
        by_series[r["series"]].append(r["p"] - r["t"])
    rs, ms = [], []
    for key, errs in by_series.items():
        s1, s2 = ref_scales(history.get(key, []))
        if math.isnan(s1):
            continue
        rs.append(math.sqrt(math.fsum(x * x for x in errs) / len(errs) / s2))
        ms.append(math.fsum(abs(x) for x in errs) / len(errs) / s1)
    out["rmsse"] = math.fsum(rs) / len(rs) if rs else NAN
    out["mase"] = math.fsum(ms) / len(ms) if ms else NAN
    return out


# ---------------------------------------------------------------- greedy trees

def _midpoints(col):
    vals = sorted({float(v) for v in col if not math.isnan(v)})
    return [(a + b) / 2.0 for a, b in zip(vals[:-1], vals[1:])]


TIE_RTOL = 1e-10


def _score(g, h, lam):
    return g * g / (h + lam)


def exact_tree(X, grad, hess, rows, depth, max_depth, lam, min_child_samples,
               min_child_weight, min_gain, thresholds):
    """Exhaustive greedy split search, recursing depth first.

    Candidates come in (feature, threshold, missing-left first) order and a
    later candidate wins only when its gain is larger by a relative 1e-10. Returns nested
    tuples: ("leaf", G, H) or ("split", f, threshold, default_left, L, R).
    """
    G = math.fsum(grad[i] for i in rows)
    H = math.fsum(hess[i] for i in rows)
    if max_depth != -1 and depth >= max_depth:
        return ("leaf", G, H)
    parent = _score(G, H, lam)
    best = (min_gain, None)
    for f in range(X.shape[1]):
        col = X[:, f]
        miss = [i for i in rows if math.isnan(col[i])]
        cands = list(thresholds[f])
        for k, thr in enumerate(cands + [math.inf]):
            last = k == len(cands)
            base_left = [i for i in rows if not math.isnan(col[i]) and col[i] <= thr]
            options = []
            if not last:
                options.append(True)
            if miss or not last:
                options.append(False)
            for dl in options:
                left = base_left + miss if dl else base_left
                lset = set(left)
                right = [i for i in rows if i not in lset]
                GL = math.fsum(grad[i] for i in left)
                HL = math.fsum(hess[i] for i in left)
                GR, HR = G - GL, H - HL
                if (len(left) < min_child_samples or len(right) < min_child_samples
                        or HL < min_child_weight or HR < min_child_weight):
                    continue
                gain = _score(GL, HL, lam) + _score(GR, HR, lam) - parent
                if gain > best[0] + TIE_RTOL * abs(best[0]):
                    best = (gain, (f, thr, dl, sorted(left), sorted(right)))
    if best[1] is None:
        return ("leaf", G, H)
    f, thr, dl, left, right = best[1]
    args = (depth + 1, max_depth, lam, min_child_samples, min_child_weight, min_gain, thresholds)
    return ("split", f, thr, dl,
            exact_tree(X, grad, hess, left, *args),
            exact_tree(X, grad, hess, right, *args))


def exact_predict_tree(node, x, lam):
    while node[0] == "split":
        _, f, thr, dl, left, right = node
        v = x[f]
        go_left = dl if math.isnan(v) else v <= thr
        node = left if go_left else right
    _, G, H = node
    return -G / (H + lam)


def exact_boost(X, y, n_rounds, learning_rate, max_depth, lam, min_child_samples=1,
                min_child_weight=1e-3, min_gain=1e-12):
    """Squared-loss boosting with exhaustive split search; returns (base, trees)."""
    X = np.asarray(X, dtype=float)
    y = [float(v) for v in y]
    n = len(y)
    base = math.fsum(y) / n
    pred = [base] * n
    thresholds = [_midpoints(X[:, f]) for f in range(X.shape[1])]
    trees = []
    for _ in range(n_rounds):
        grad = [pred[i] - y[i] for i in range(n)]
        hess = [1.0] * n
        tree = exact_tree(X, grad, hess, list(range(n)), 0, max_depth, lam,
                          min_child_samples, min_child_weight, min_gain, thresholds)
        trees.append(tree)
        for i in range(n):
            pred[i] += learning_rate * exact_predict_tree(tree, X[i], lam)
    return base, trees


def model_tree_nested(tree, lam=None):
    """Convert a fitted flat tree to ("leaf", value) / ("split", ...) tuples."""
    def rec(i):
        if tree.left[i] == -1:
            return ("leaf", float(tree.value[i]))
        return ("split", int(tree.feature[i]), float(tree.threshold[i]), bool(tree.default_left[i]),
                rec(tree.left[i]), rec(tree.right[i]))
    return rec(0)


def oracle_tree_values(node, lam):
    if node[0] == "leaf":
        return ("leaf", -node[1] / (node[2] + lam))
    _, f, thr, dl, left, right = node
    return ("split", f, thr, dl, oracle_tree_values(left, lam), oracle_tree_values(right, lam))


def trees_match(a, b, tol=1e-9) -> tuple[bool, str]:
    """Structural equality with a relative tolerance on leaf values."""
    if a[0] != b[0]:
        return False, f"node kind {a[0]} vs {b[0]}"
    if a[0] == "leaf":
        ok = math.isclose(a[1], b[1], rel_tol=tol, abs_tol=tol)
        return ok, "" if ok else f"leaf {a[1]} vs {b[1]}"
    if a[1:4] != b[1:4]:
        return False, f"split {a[1:4]} vs {b[1:4]}"
    ok, why = trees_match(a[4], b[4], tol)
    if not ok:
        return ok, why
    return trees_match(a[5], b[5], tol)


# ---------------------------------------------------------------- classification

def ref_classify(series):
    """Exact rational Syntetos-Boylan label (inputs must be integers or NaN)."""
    from fractions import Fraction

    ys = [Fraction(int(v)) for v in series if not math.isnan(float(v))]
    idx = [i for i, v in enumerate(ys) if v > 0]
    if not idx:
        return "No Demand"
    gaps = [b - a for a, b in zip(idx[:-1], idx[1:])]
    adi = Fraction(sum(gaps), len(gaps)) if gaps else Fraction(len(ys))
    sizes = [ys[i] for i in idx]
    m = sum(sizes) / len(sizes)
    cv2 = sum((s - m) ** 2 for s in sizes) / len(sizes) / (m * m)
    gappy = adi >= Fraction(132, 100)
    variable = cv2 >= Fraction(49, 100)
    if gappy:
        return "Lumpy" if variable else "Intermittent"
    return "Erratic" if variable else "Smooth"


# ---------------------------------------------------------------- random inputs

def random_eval_case(rng: np.random.Generator, n: int | None = None):
    """A random validation frame plus the same data as oracle rows and history."""
    import pandas as pd

    n = int(rng.integers(1, 51)) if n is None else n
    n_series = int(rng.integers(1, 6))
    series = [f"P{int(rng.integers(3))}|S{k}" for k in range(n_series)]
    products = {s: s.split("|")[0] for s in series}
    groups = {p: f"G{int(rng.integers(2))}" for p in set(products.values())}
    zones = {s: int(rng.integers(1, 3)) for s in series}
    pick = rng.integers(n_series, size=n)
    days = rng.integers(0, 28, size=n)
    start = dt.date(2023, 3, 1)
    t = rng.poisson(rng.uniform(0.2, 6.0), size=n).astype(float)
    if rng.random() < 0.1:
        t[:] = 0.0
    p = np.maximum(0.0, t + rng.normal(0, 2.0, size=n)) if rng.random() < 0.8 else rng.uniform(0, 5, size=n)
    price = rng.uniform(1.0, 20.0, size=n)
    cogs = price * rng.uniform(0.3, 0.9, size=n)
    rebate = rng.uniform(0.0, 1.0, size=n)
    rows, history = [], {}
    for i in range(n):
        s = series[pick[i]]
        rows.append({
            "series": s, "product": products[s], "group": groups[products[s]], "zone": zones[s],
            "date": start + dt.timedelta(days=int(days[i])),
            "t": float(t[i]), "p": float(p[i]), "price": float(price[i]),
            "cogs": float(cogs[i]), "rebate": float(rebate[i]),
        })
    for s in series:
        h = rng.poisson(3.0, size=int(rng.integers(0, 30))).astype(float)
        if h.size:
            h[rng.random(h.size) < 0.2] = np.nan
        if rng.random() < 0.1:
            h[:] = 2.0
        history[s] = h
    frame = pd.DataFrame({
        "series_key": [r["series"] for r in rows],
        "product_id": [r["product"] for r in rows],
        "group_id": [r["group"] for r in rows],
        "zone_id": [r["zone"] for r in rows],
        "date": pd.to_datetime([r["date"] for r in rows]),
        "true_sales": t, "pred_sales": p, "real_price": price, "cogs": cogs, "rebate": rebate,
    })
    return frame, rows, history


def close(a: float, b: float, rel: float = 1e-9) -> bool:
    if math.isnan(a) or math.isnan(b):
        return math.isnan(a) and math.isnan(b)
    return math.isclose(a, b, rel_tol=rel, abs_tol=1e-12)


def reports_identical(a, b) -> bool:
    """Bit-exact equality of two metric reports, NaN matching NaN."""
    va, vb = a.values(), b.values()
    same = all(
        (math.isnan(va[k]) and math.isnan(vb[k])) or va[k] == vb[k] for k in va
    )
    return same and a.n_rows == b.n_rows and a.excluded == b.excluded
