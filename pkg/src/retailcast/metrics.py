"""Forecast evaluation: pointwise errors, scaled errors, bias and financial WMAPE.

Undefined values (zero denominators, zero naive scales) are reported as NaN and
left out of any average; the number of exclusions is carried on the report.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Mapping

import numpy as np
import pandas as pd

# Appendix table column order.
REPORT_COLUMNS = [
    "Group", "MSE", "RMSE", "MAE", "R2",
    "Group Revenue WMAPE", "Series Revenue WMAPE",
    "Group Profit WMAPE", "Series Profit WMAPE",
    "Demand Error", "Demand Bias",
    "RMSSE", "MASE", "ME", "MFB", "Theils Bias",
]

# Summary table column order (first column is the model).
SUMMARY_COLUMNS = [
    "RMSSE", "MASE", "MSE", "RMSE", "MAE", "R2", "ME", "MFB", "Theils Bias",
    "Group Revenue WMAPE", "Series Revenue WMAPE",
    "Group Profit WMAPE", "Series Profit WMAPE",
    "Demand Error", "Demand Bias",
]

FRAME_COLUMNS = (
    "series_key", "product_id", "group_id", "zone_id", "date",
    "true_sales", "pred_sales", "real_price", "cogs", "rebate",
)

_EPOCH_MONDAY = np.datetime64("1970-01-05")


@dataclass(frozen=True)
class MetricReport:
    mse: float
    rmse: float
    mae: float
    r2: float
    rmsse: float
    mase: float
    me: float
    mfb: float
    theils_bias: float
    group_rev_wmape: float
    series_rev_wmape: float
    group_profit_wmape: float
    series_profit_wmape: float
    demand_error: float
    demand_bias: float
    n_rows: int = 0
    excluded: dict = field(default_factory=dict)

    _LABELS = {
        "MSE": "mse", "RMSE": "rmse", "MAE": "mae", "R2": "r2",
        "RMSSE": "rmsse", "MASE": "mase", "ME": "me", "MFB": "mfb",
        "Theils Bias": "theils_bias",
        "Group Revenue WMAPE": "group_rev_wmape",
        "Series Revenue WMAPE": "series_rev_wmape",
        "Group Profit WMAPE": "group_profit_wmape",
        "Series Profit WMAPE": "series_profit_wmape",
        "Demand Error": "demand_error", "Demand Bias": "demand_bias",
    }

    def by_label(self, label: str) -> float:
        return getattr(self, self._LABELS[label])

    def values(self) -> dict[str, float]:
        d = asdict(self)
        return {f.name: d[f.name] for f in fields(self) if f.name not in ("n_rows", "excluded")}


# ---------------------------------------------------------------- primitives

def wmape(true, pred) -> float:
    """Sum of absolute errors over the sum of true values.

    Returns NaN when the true total is zero.
    """
    true = np.asarray(true, dtype=float)
    pred = np.asarray(pred, dtype=float)
    denom = true.sum()
    if denom == 0:
        return float("nan")
    return float(np.abs(pred - true).sum() / denom)


def pointwise_suite(true, pred) -> dict[str, float]:
    """MSE, RMSE, MAE, R2, ME and MFB of a set of paired observations.

    R2 is NaN when the truth has no variance; MFB is NaN when the truth sums
    to zero.
    """
    true = np.asarray(true, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if true.size == 0:
        raise ValueError("pointwise_suite needs at least one observation")
    err = pred - true
    mse = float(np.mean(err**2))
    sst = float(np.sum((true - true.mean()) ** 2))
    total = true.sum()
    return {
        "mse": mse,
        "rmse": float(np.sqrt(mse)),
        "mae": float(np.mean(np.abs(err))),
        "r2": float(1.0 - np.sum(err**2) / sst) if sst > 0 else float("nan"),
        "me": float(np.mean(err)),
        "mfb": float(err.sum() / total) if total != 0 else float("nan"),
    }


def theils_bias(true, pred) -> float:
    """Bias proportion of Theil's MSE decomposition, mean(error)**2 / MSE."""
    err = np.asarray(pred, dtype=float) - np.asarray(true, dtype=float)
    mse = np.mean(err**2)
    if mse == 0:
        return 0.0
    # clipped: mean(err)**2 can exceed mean(err**2) by an ulp
    return float(min(1.0, np.mean(err) ** 2 / mse))


def naive_scales(train) -> tuple[float, float]:
    """In-sample one-step naive scales (mean absolute, mean squared difference).

    Missing points are dropped before differencing. Both scales are NaN when
    fewer than two points remain or the series never changes.
    """
    y = np.asarray(train, dtype=float)
    y = y[~np.isnan(y)]
    if y.size < 2:
        return float("nan"), float("nan")
    d = np.diff(y)
    s1 = float(np.mean(np.abs(d)))
    s2 = float(np.mean(d**2))
    if s1 == 0:
        return float("nan"), float("nan")
    return s1, s2


def mase(train, true, pred) -> float:
    s1, _ = naive_scales(train)
    if np.isnan(s1):
        return float("nan")
    return float(np.mean(np.abs(np.asarray(pred, float) - np.asarray(true, float))) / s1)


def rmsse(train, true, pred) -> float:
    _, s2 = naive_scales(train)
    if np.isnan(s2):
        return float("nan")
    return float(np.sqrt(np.mean((np.asarray(pred, float) - np.asarray(true, float)) ** 2) / s2))


# ---------------------------------------------------------------- frame level

def financial_frame(frame: pd.DataFrame) -> pd.DataFrame:
    """Add true/pred revenue and profit columns to a validation frame."""
    missing = [c for c in FRAME_COLUMNS if c not in frame.columns]
    if missing:
        raise KeyError(f"frame lacks columns {missing}")
    out = frame.copy()
    margin = out["real_price"] - out["cogs"] + out["rebate"]
    out["true_revenue"] = out["true_sales"] * out["real_price"]
    out["pred_revenue"] = out["pred_sales"] * out["real_price"]
    out["true_profit"] = out["true_sales"] * margin
    out["pred_profit"] = out["pred_sales"] * margin
    return out


def _ensure_financial(frame: pd.DataFrame) -> pd.DataFrame:
    if "true_revenue" in frame.columns:
        return frame
    return financial_frame(frame)


def _cell_index(*cols) -> tuple[np.ndarray, int]:
    """Dense cell id per row for the combination of key columns."""
    code = np.zeros(len(cols[0]), dtype=np.int64)
    for c in cols:
        k, uniq = pd.factorize(np.asarray(c), sort=True)
        code = code * max(len(uniq), 1) + k
    uniq, inv = np.unique(code, return_inverse=True)
    return inv.ravel(), uniq.size


def _cell_sums(inv: np.ndarray, n: int, *values) -> list[np.ndarray]:
    return [np.bincount(inv, weights=np.asarray(v, dtype=float), minlength=n) for v in values]


def _cell_wmape(frame: pd.DataFrame, keys: list[str], true_col: str, pred_col: str) -> float:
    inv, n = _cell_index(*(frame[k].to_numpy() for k in keys))
    t, p = _cell_sums(inv, n, frame[true_col], frame[pred_col])
    return wmape(t, p)


def group_financial_wmape(frame: pd.DataFrame) -> tuple[float, float]:
    """Revenue and profit WMAPE over (zone, group) aggregation cells."""
    if len(frame) == 0:
        raise ValueError("empty frame")
    f = _ensure_financial(frame)
    keys = ["zone_id", "group_id"]
    return (_cell_wmape(f, keys, "true_revenue", "pred_revenue"),
            _cell_wmape(f, keys, "true_profit", "pred_profit"))


def _series_financial(frame: pd.DataFrame) -> tuple[float, float, int]:
    f = _ensure_financial(frame)
    prod = f["product_id"].to_numpy()
    inv, n = _cell_index(prod, f["zone_id"].to_numpy())
    tr, pr, tp, pp = _cell_sums(inv, n, f["true_revenue"], f["pred_revenue"],
                                f["true_profit"], f["pred_profit"])
    # product of each (product, zone) cell
    first = np.zeros(n, dtype=np.int64)
    first[inv[::-1]] = np.arange(inv.size)[::-1]
    pinv, m = _cell_index(prod[first])
    abs_rev, tot_rev, abs_pro, tot_pro = _cell_sums(pinv, m, np.abs(pr - tr), tr, np.abs(pp - tp), tp)
    with np.errstate(divide="ignore", invalid="ignore"):
        rev = np.where(tot_rev != 0, abs_rev / np.where(tot_rev != 0, tot_rev, 1.0), np.nan)
        pro = np.where(tot_pro != 0, abs_pro / np.where(tot_pro != 0, tot_pro, 1.0), np.nan)
    excluded = int(np.isnan(rev).sum() + np.isnan(pro).sum())
    rev_m = float(np.nanmean(rev)) if np.any(~np.isnan(rev)) else float("nan")
    pro_m = float(np.nanmean(pro)) if np.any(~np.isnan(pro)) else float("nan")
    return rev_m, pro_m, excluded


def series_financial_wmape(frame: pd.DataFrame) -> tuple[float, float]:
    """Unweighted mean over products of per-product revenue and profit WMAPE.

    Each product's WMAPE is taken over its zone-level totals; products with a
    zero true total are skipped.
    """
    if len(frame) == 0:
        raise ValueError("empty frame")
    rev, pro, _ = _series_financial(frame)
    return rev, pro


def _bucket_index(dates: pd.Series, bucket_days: int) -> np.ndarray:
    days = (np.asarray(dates, dtype="datetime64[D]") - _EPOCH_MONDAY).astype(np.int64)
    return np.floor_divide(days, bucket_days)


def demand_error_bias(frame: pd.DataFrame, bucket_days: int = 7) -> tuple[float, float]:
    """Error and bias of sales aggregated into (series, time bucket) cells."""
    if len(frame) == 0:
        raise ValueError("no buckets to evaluate")
    if bucket_days < 1:
        raise ValueError("bucket_days must be >= 1")
    inv, n = _cell_index(frame["series_key"].to_numpy(), _bucket_index(frame["date"], bucket_days))
    t, p = _cell_sums(inv, n, frame["true_sales"], frame["pred_sales"])
    total = t.sum()
    if total == 0:
        return float("nan"), float("nan")
    diff = p - t
    return float(np.abs(diff).sum() / total), float(diff.sum() / total)


def scaled_errors(
    frame: pd.DataFrame,
    train_history: Mapping[str, np.ndarray],
    pooled: bool = False,
) -> tuple[float, float, int]:
    """Panel RMSSE and MASE plus the number of series without a usable scale.

    Series-averaged by default; ``pooled`` weights every row equally instead.
    """
    keys = frame["series_key"].to_numpy()
    inv, n = _cell_index(keys)
    first = np.zeros(n, dtype=np.int64)
    first[inv[::-1]] = np.arange(inv.size)[::-1]
    scales = np.array([naive_scales(train_history.get(k, ())) for k in keys[first]], dtype=float).reshape(n, 2)
    ok = ~np.isnan(scales[:, 0])
    excluded = int(n - ok.sum())
    if not ok.any():
        return float("nan"), float("nan"), excluded
    err = frame["pred_sales"].to_numpy(float) - frame["true_sales"].to_numpy(float)
    sq, ab, cnt = _cell_sums(inv, n, err**2, np.abs(err), np.ones_like(err))
    s1, s2 = scales[ok, 0], scales[ok, 1]
    sq, ab, cnt = sq[ok], ab[ok], cnt[ok]
    if pooled:
        rows = cnt.sum()
        return float(np.sqrt(np.sum(sq / s2) / rows)), float(np.sum(ab / s1) / rows), excluded
    return float(np.mean(np.sqrt(sq / cnt / s2))), float(np.mean(ab / cnt / s1)), excluded


def evaluate(
    frame: pd.DataFrame,
    train_history: Mapping[str, np.ndarray],
    bucket_days: int = 7,
    pooled_scale: bool = False,
) -> MetricReport:
    """All fifteen table metrics for one validation frame."""
    if len(frame) == 0:
        raise ValueError("cannot evaluate an empty frame")
    f = _ensure_financial(frame)
    t = f["true_sales"].to_numpy(float)
    p = f["pred_sales"].to_numpy(float)
    pw = pointwise_suite(t, p)
    g_rev, g_pro = group_financial_wmape(f)
    s_rev, s_pro, s_excl = _series_financial(f)
    d_err, d_bias = demand_error_bias(f, bucket_days)
    r, m, scale_excl = scaled_errors(f, train_history, pooled=pooled_scale)
    return MetricReport(
        mse=pw["mse"], rmse=pw["rmse"], mae=pw["mae"], r2=pw["r2"],
        rmsse=r, mase=m, me=pw["me"], mfb=pw["mfb"],
        theils_bias=theils_bias(t, p),
        group_rev_wmape=g_rev, series_rev_wmape=s_rev,
        group_profit_wmape=g_pro, series_profit_wmape=s_pro,
        demand_error=d_err, demand_bias=d_bias,
        n_rows=len(f),
        excluded={"scale": scale_excl, "series_wmape": s_excl},
    )


def masked_evaluate(
    frame: pd.DataFrame,
    mask,
    train_history: Mapping[str, np.ndarray],
    bucket_days: int = 7,
    pooled_scale: bool = False,
) -> MetricReport:
    """Evaluate only the rows whose mask entry is true (originally observed)."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (len(frame),):
        raise ValueError(f"mask shape {mask.shape} does not match frame of {len(frame)} rows")
    if not mask.any():
        raise ValueError("mask excludes every row")
    return evaluate(frame.loc[mask], train_history, bucket_days, pooled_scale)


def report_row(label: str, report: MetricReport) -> dict:
    row = {"Group": label}
    for col in REPORT_COLUMNS[1:]:
        row[col] = report.by_label(col)
    return row


def report_table(rows: list[tuple[str, MetricReport]]) -> pd.DataFrame:
    return pd.DataFrame([report_row(lbl, rep) for lbl, rep in rows], columns=REPORT_COLUMNS)
