"""Preprocessing: imputation, price deflation, relative prices, causal lag and
rolling features, ordered target encoding and the time-based split."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from numba import njit

from .panelgen import series_keys

NUMERIC_FILL_FIELDS = ("price", "competitor_price")
NOMINAL_PRICE_FIELDS = ("price", "competitor_price", "cogs", "rebate")
CATEGORICAL_FIELDS = ("product_id", "store_id", "group_id", "uon_id", "zone_id")
KEY_COLUMNS = ("series_key", "product_id", "store_id", "group_id", "uon_id", "zone_id", "date")


def _series_bounds(keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Start offset of each row's series and position of the row within it."""
    n = keys.size
    if n == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    new = np.r_[True, keys[1:] != keys[:-1]]
    starts = np.flatnonzero(new)
    sid = np.cumsum(new) - 1
    start_of_row = starts[sid]
    return start_of_row.astype(np.int64), (np.arange(n) - start_of_row).astype(np.int64)


def _sorted(panel: pd.DataFrame) -> pd.DataFrame:
    keys = ["product_id", "store_id", "date"]
    if panel[keys].apply(lambda c: c.is_monotonic_increasing).all():
        return panel
    return panel.sort_values(keys, kind="stable").reset_index(drop=True)


# ---------------------------------------------------------------- imputation

@dataclass
class ImputationReport:
    unfillable: dict[str, list[str]] = field(default_factory=dict)


def impute_basic(panel: pd.DataFrame, fields: Sequence[str] = NUMERIC_FILL_FIELDS,
                 categorical: Sequence[str] = (), report: ImputationReport | None = None) -> pd.DataFrame:
    """Forward then backward fill numeric fields within each series; fill
    categorical fields with the series mode. Series with no observed value for
    a field keep it missing and are listed in ``report``."""
    out = panel.copy()
    key = series_keys(out)
    for f in fields:
        filled = out[f].groupby(key, sort=False).ffill()
        filled = filled.groupby(key, sort=False).bfill()
        out[f] = filled
        if report is not None:
            empty = filled.isna().groupby(key, sort=True).all()
            report.unfillable[f] = sorted(empty.index[empty].tolist())
    for f in categorical:
        modes = out[f].groupby(key, sort=False).agg(lambda s: s.mode().iloc[0] if s.notna().any() else np.nan)
        out[f] = out[f].fillna(key.map(modes))
        if report is not None:
            empty = out[f].isna().groupby(key, sort=True).all()
            report.unfillable[f] = sorted(empty.index[empty].tolist())
    return out


@njit(cache=True)
def _seasonal_fill(x, start, pos, length, period, k):
    n = x.size
    out = x.copy()
    unresolved = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        if not np.isnan(x[i]):
            continue
        found = False
        for j in range(1, k + 1):
            back = pos[i] - j * period
            if back >= 0 and not np.isnan(x[start[i] + back]):
                out[i] = x[start[i] + back]
                found = True
                break
            fwd = pos[i] + j * period
            if fwd < length[i] and not np.isnan(x[start[i] + fwd]):
                out[i] = x[start[i] + fwd]
                found = True
                break
        if not found:
            unresolved[i] = True
    return out, unresolved


def impute_seasonal(panel: pd.DataFrame, fields: Sequence[str] = ("sales",), period: int = 7,
                    max_periods: int = 4, report: ImputationReport | None = None) -> pd.DataFrame:
    """Fill gaps from the nearest same-phase observation within ``max_periods``
    periods (earlier side first), otherwise by linear interpolation between the
    surrounding observations, otherwise from the nearest observation.

    Only originally observed values are used as donors.
    """
    if period < 1:
        raise ValueError("period must be >= 1")
    panel = _sorted(panel)
    out = panel.copy()
    keys = series_keys(panel).to_numpy()
    start, pos = _series_bounds(keys)
    sid = np.cumsum(np.r_[True, keys[1:] != keys[:-1]]) - 1 if keys.size else np.zeros(0, np.int64)
    length = np.bincount(sid)[sid] if keys.size else np.zeros(0, np.int64)
    for f in fields:
        x = panel[f].to_numpy(dtype=float)
        filled, unresolved = _seasonal_fill(x, start, pos, length.astype(np.int64), period, max_periods)
        if unresolved.any():
            seg_starts = np.unique(start[unresolved])
            empty = []
            for s0 in seg_starts:
                s1 = s0 + length[s0]
                seg = x[s0:s1]
                obs = np.flatnonzero(~np.isnan(seg))
                if obs.size == 0:
                    empty.append(keys[s0])
                    continue
                need = np.flatnonzero(unresolved[s0:s1])
                filled[s0 + need] = np.interp(need, obs, seg[obs])
            if report is not None:
                report.unfillable[f] = sorted(empty)
        elif report is not None:
            report.unfillable[f] = []
        out[f] = filled
    return out


# ---------------------------------------------------------------- prices

def deflate_prices(panel: pd.DataFrame, base_cpi: float = 100.0,
                   fields: Sequence[str] = NOMINAL_PRICE_FIELDS) -> pd.DataFrame:
    """Add ``real_<field>`` columns: nominal value times base_cpi / cpi."""
    cpi = panel["cpi"].to_numpy(dtype=float)
    if np.any(~(cpi > 0)):
        raise ValueError("cpi must be positive everywhere")
    out = panel.copy()
    for f in fields:
        out[f"real_{f}"] = out[f].to_numpy(dtype=float) * base_cpi / cpi
    return out


def inflate_prices(panel: pd.DataFrame, base_cpi: float = 100.0,
                   fields: Sequence[str] = NOMINAL_PRICE_FIELDS) -> dict[str, np.ndarray]:
    cpi = panel["cpi"].to_numpy(dtype=float)
    return {f: panel[f"real_{f}"].to_numpy(dtype=float) * cpi / base_cpi for f in fields}


def relative_prices(panel: pd.DataFrame) -> tuple[pd.DataFrame, dict[str, int]]:
    """Out-store (vs competitor) and in-store (vs UoN mean) relative real prices.

    Returns the two columns and the number of zero denominators met.
    """
    own = panel["real_price"].to_numpy(dtype=float)
    comp = panel["real_competitor_price"].to_numpy(dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        zero_comp = comp == 0
        out_store = np.where(zero_comp, np.nan, (own - comp) / comp)
        uon_mean = panel.groupby(["store_id", "uon_id", "date"], sort=False)["real_price"].transform("mean").to_numpy()
        zero_uon = uon_mean == 0
        in_store = np.where(zero_uon, np.nan, (own - uon_mean) / uon_mean)
    cols = pd.DataFrame({"out_store": out_store, "in_store": in_store}, index=panel.index)
    return cols, {"out_store": int(zero_comp.sum()), "in_store": int(zero_uon.sum())}


# ---------------------------------------------------------------- lags / rolling

def add_lag_features(frame: pd.DataFrame, column: str, lags: Iterable[int],
                     key: str = "series_key", prefix: str | None = None) -> pd.DataFrame:
    """``<prefix>_lag<k>`` = value k rows (days) earlier in the same series."""
    keys = frame[key].to_numpy()
    _, pos = _series_bounds(keys)
    x = frame[column].to_numpy(dtype=float)
    prefix = prefix or column
    out = {}
    for k in lags:
        if k < 1:
            raise ValueError("lag offsets must be >= 1")
        v = np.full(x.size, np.nan)
        ok = pos >= k
        v[ok] = x[np.flatnonzero(ok) - k]
        out[f"{prefix}_lag{k}"] = v
    return frame.assign(**out)


@njit(cache=True)
def _rolling(x, pos, window):
    n = x.size
    mean = np.full(n, np.nan)
    std = np.full(n, np.nan)
    nz = np.full(n, np.nan)
    for i in range(n):
        lo = i - min(window, pos[i])
        s = 0.0
        c = 0
        z = 0
        for j in range(lo, i):
            v = x[j]
            if not np.isnan(v):
                s += v
                c += 1
                if v != 0:
                    z += 1
        if c == 0:
            continue
        m = s / c
        q = 0.0
        for j in range(lo, i):
            v = x[j]
            if not np.isnan(v):
                q += (v - m) * (v - m)
        mean[i] = m
        std[i] = np.sqrt(q / c)
        nz[i] = z / c
    return mean, std, nz


def add_rolling_features(frame: pd.DataFrame, column: str, windows: Iterable[int],
                         stats: Sequence[str] = ("mean", "std", "nonzero"),
                         key: str = "series_key", prefix: str | None = None) -> pd.DataFrame:
    """Window statistics over the ``w`` days strictly before each row.

    Missing values inside the window are skipped; an all-missing window gives NaN.
    """
    keys = frame[key].to_numpy()
    _, pos = _series_bounds(keys)
    x = frame[column].to_numpy(dtype=float)
    prefix = prefix or column
    out = {}
    for w in windows:
        if w < 1:
            raise ValueError("windows must be >= 1")
        mean, std, nz = _rolling(x, pos, int(w))
        got = {"mean": mean, "std": std, "nonzero": nz}
        for s in stats:
            out[f"{prefix}_roll{w}_{s}"] = got[s]
    return frame.assign(**out)


# ---------------------------------------------------------------- target encoding

@dataclass
class EncoderState:
    stats: dict[str, dict]
    prior: float
    alpha: float

    def encode_plain(self, column: str, values) -> np.ndarray:
        table = self.stats[column]
        vals = pd.Series(values)
        s = vals.map({k: v[0] for k, v in table.items()}).to_numpy(dtype=float)
        c = vals.map({k: v[1] for k, v in table.items()}).to_numpy(dtype=float)
        s = np.nan_to_num(s)
        c = np.nan_to_num(c)
        return (s + self.alpha * self.prior) / (c + self.alpha)


def target_encode_fit(frame: pd.DataFrame, columns: Sequence[str], target: str = "target",
                      alpha: float = 1.0) -> EncoderState:
    """Per-category target sums and counts over rows with a known target."""
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    rows = frame[frame[target].notna()]
    if len(rows) == 0:
        raise ValueError("no rows with a target to fit the encoder")
    prior = float(rows[target].mean())
    stats = {}
    for col in columns:
        g = rows.groupby(col, sort=True, observed=True)[target].agg(["sum", "count"])
        stats[col] = {k: (float(s), int(c)) for k, s, c in zip(g.index, g["sum"], g["count"])}
    return EncoderState(stats=stats, prior=prior, alpha=float(alpha))


def target_encode_transform(state: EncoderState, frame: pd.DataFrame, column: str,
                            mode: str = "plain", target: str = "target", seed: int = 0) -> np.ndarray:
    """Encode one categorical column.

    ``plain`` uses the fitted statistics; unseen categories get the prior.
    ``ordered`` (training rows only) visits rows with a known target in a
    seeded random order and encodes each from the rows visited before it, so a
    row never sees its own target. Rows without a target fall back to plain.
    """
    values = frame[column].to_numpy()
    if mode == "plain":
        return state.encode_plain(column, values)
    if mode != "ordered":
        raise ValueError(f"unknown mode {mode!r}")
    y = frame[target].to_numpy(dtype=float)
    enc = state.encode_plain(column, values)
    known = np.flatnonzero(~np.isnan(y))
    perm = known[np.random.default_rng(seed).permutation(known.size)]
    cats = pd.Series(values[perm])
    ys = pd.Series(y[perm])
    prev_sum = ys.groupby(cats.to_numpy(), sort=False).cumsum().to_numpy() - ys.to_numpy()
    prev_cnt = cats.groupby(cats.to_numpy(), sort=False).cumcount().to_numpy()
    enc[perm] = (prev_sum + state.alpha * state.prior) / (prev_cnt + state.alpha)
    return enc


# ---------------------------------------------------------------- split

@dataclass(frozen=True)
class SplitSpec:
    cutoff_date: pd.Timestamp
    min_train_points: int = 0
    require_both_periods: bool = True

    def __post_init__(self):
        object.__setattr__(self, "cutoff_date", pd.Timestamp(self.cutoff_date))
        if self.min_train_points < 0:
            raise ValueError("min_train_points must be >= 0")


@dataclass
class FeatureMatrix:
    """Model-ready rows with column roles.

    ``frame`` holds key columns, features, ``target`` (training target, may be
    imputed), ``sales_true`` (raw sales), ``observed`` (sales originally
    present) and ``split_tag``.
    """

    frame: pd.DataFrame
    feature_names: list[str]
    dropped: dict[str, int] = field(default_factory=dict)
    encoder: EncoderState | None = None

    ROLE_FIXED = {"target": "target", "sales_true": "target", "observed": "mask", "split_tag": "tag"}

    @property
    def train(self) -> pd.DataFrame:
        return self.frame[self.frame["split_tag"] == "train"]

    @property
    def valid(self) -> pd.DataFrame:
        return self.frame[self.frame["split_tag"] == "valid"]

    def schema(self) -> dict[str, str]:
        roles = {}
        for c in self.frame.columns:
            if c in self.feature_names:
                roles[c] = "feature"
            elif c in self.ROLE_FIXED:
                roles[c] = self.ROLE_FIXED[c]
            elif c in KEY_COLUMNS:
                roles[c] = "key"
            else:
                roles[c] = "aux"
        return roles

    def to_csv(self, path) -> Path:
        path = Path(path)
        out = self.frame.copy()
        out["date"] = pd.to_datetime(out["date"]).dt.strftime("%Y-%m-%d")
        out.to_csv(path, index=False, na_rep="", float_format="%.17g")
        sidecar = path.with_suffix(path.suffix + ".schema.json")
        sidecar.write_text(json.dumps({"columns": self.schema(), "dropped": self.dropped}, indent=1))
        return sidecar

    @classmethod
    def from_csv(cls, path) -> "FeatureMatrix":
        path = Path(path)
        meta = json.loads(path.with_suffix(path.suffix + ".schema.json").read_text())
        roles = meta["columns"]
        dtypes = {c: str for c in ("series_key", "product_id", "store_id", "group_id", "uon_id", "split_tag")}
        df = pd.read_csv(path, dtype=dtypes, keep_default_na=False, na_values=[""], float_precision="round_trip")
        df["date"] = pd.to_datetime(df["date"], format="%Y-%m-%d")
        df["observed"] = df["observed"].astype(bool)
        feats = [c for c, r in roles.items() if r == "feature"]
        return cls(frame=df[list(roles)], feature_names=feats, dropped=meta.get("dropped", {}))


def split_and_filter(frame: pd.DataFrame, spec: SplitSpec, feature_names: Sequence[str] = ()) -> FeatureMatrix:
    """Tag rows train/valid by the cutoff and drop series failing the filters.

    Filters count originally observed sales only, so raw and imputed arms keep
    the same series.
    """
    dates = pd.to_datetime(frame["date"])
    if not dates.min() < spec.cutoff_date <= dates.max():
        raise ValueError(f"cutoff {spec.cutoff_date.date()} outside panel dates "
                         f"[{dates.min().date()}, {dates.max().date()}]")
    tag = np.where(dates < spec.cutoff_date, "train", "valid")
    obs = frame["observed"].to_numpy(dtype=bool)
    key = frame["series_key"].to_numpy()
    per = pd.DataFrame({"key": key, "tr": obs & (tag == "train"), "va": obs & (tag == "valid")})
    counts = per.groupby("key", sort=True)[["tr", "va"]].sum()
    keep = pd.Series(True, index=counts.index)
    dropped = {}
    if spec.require_both_periods:
        bad = (counts["tr"] == 0) | (counts["va"] == 0)
        dropped["require_both_periods"] = int((bad & keep).sum())
        keep &= ~bad
    if spec.min_train_points > 0:
        bad = counts["tr"] < spec.min_train_points
        dropped["min_train_points"] = int((bad & keep).sum())
        keep &= ~bad
    if not keep.any():
        binding = [k for k, v in dropped.items() if v > 0] or ["cutoff"]
        raise ValueError(f"no series left after filtering (binding: {', '.join(binding)})")
    rows = pd.Series(key).map(keep).to_numpy(dtype=bool)
    out = frame.loc[rows].copy()
    out["split_tag"] = tag[rows]
    return FeatureMatrix(frame=out.reset_index(drop=True), feature_names=list(feature_names), dropped=dropped)


# ---------------------------------------------------------------- prefilter

def prefilter_features(frame: pd.DataFrame, features: Sequence[str], max_missing: float = 0.8,
                       min_variance: float = 1e-12, max_corr: float = 0.99,
                       keep: Sequence[str] = ()) -> tuple[list[str], dict[str, str]]:
    """Drop features with excessive missingness, no variance, or near-duplicate
    correlation with an earlier kept feature. Returns kept names and reasons."""
    kept, reasons = [], {}
    cols = {}
    for f in features:
        x = frame[f].to_numpy(dtype=float)
        miss = np.mean(np.isnan(x))
        if f not in keep and miss > max_missing:
            reasons[f] = f"missing {miss:.2f}"
            continue
        v = np.nanvar(x) if miss < 1 else 0.0
        if f not in keep and not v >= min_variance:
            reasons[f] = "low variance"
            continue
        dup = None
        for g in kept:
            y = cols[g]
            ok = ~np.isnan(x) & ~np.isnan(y)
            if ok.sum() < 3:
                continue
            xo, yo = x[ok], y[ok]
            if xo.std() == 0 or yo.std() == 0:
                continue
            r = np.corrcoef(xo, yo)[0, 1]
            if abs(r) > max_corr:
                dup = g
                break
        if dup is not None and f not in keep:
            reasons[f] = f"collinear with {dup}"
            continue
        kept.append(f)
        cols[f] = x
    return kept, reasons


# ---------------------------------------------------------------- pipeline

@dataclass(frozen=True)
class FeatureConfig:
    lags: tuple[int, ...] = (1, 7, 14, 28)
    windows: tuple[int, ...] = (7, 28)
    base_cpi: float = 100.0
    encode_columns: tuple[str, ...] = CATEGORICAL_FIELDS
    te_alpha: float = 1.0
    seasonal_period: int = 7


def build_feature_matrix(panel: pd.DataFrame, spec: SplitSpec, cfg: FeatureConfig = FeatureConfig(),
                         imputed: bool = False, seed: int = 0,
                         report: ImputationReport | None = None) -> FeatureMatrix:
    """Run the full preprocessing chain on a raw panel.

    Prices are basic-filled in every arm. In the imputed arm, training-period
    sales are additionally filled with :func:`impute_seasonal` using
    training-period observations only; validation targets are never imputed.
    """
    panel = _sorted(panel)
    report = report if report is not None else ImputationReport()
    df = impute_basic(panel, NUMERIC_FILL_FIELDS, report=report)
    df = deflate_prices(df, cfg.base_cpi)
    # series with no price at all borrow the product, then group, median
    for f in ("real_price", "real_competitor_price"):
        for by in ("product_id", "group_id"):
            df[f] = df[f].fillna(df.groupby(by, sort=False)[f].transform("median"))
    rel, _ = relative_prices(df)
    df = pd.concat([df, rel], axis=1)
    df["series_key"] = series_keys(df)
    df["observed"] = df["sales"].notna()
    df["sales_true"] = df["sales"].astype(float)

    target = df["sales"].astype(float)
    if imputed:
        train_part = df[df["date"] < spec.cutoff_date]
        filled = impute_seasonal(train_part, ("sales",), period=cfg.seasonal_period, report=report)
        target = target.copy()
        target.loc[train_part.index] = filled["sales"].to_numpy()
    df["target"] = target.to_numpy()
    df["promo"] = df["promo_flag"].astype(float)

    df = add_lag_features(df, "target", cfg.lags, prefix="sales")
    df = add_rolling_features(df, "target", cfg.windows, prefix="sales")
    df = add_lag_features(df, "promo", cfg.lags[:2], prefix="promo")
    df = add_rolling_features(df, "promo", cfg.windows, stats=("mean",), prefix="promo")
    df = add_lag_features(df, "stock", (1,), prefix="stock")
    dates = pd.to_datetime(df["date"])
    df["dow"] = dates.dt.dayofweek.astype(float)
    df["month"] = dates.dt.month.astype(float)
    df["age_days"] = (dates - df.groupby("series_key", sort=False)["date"].transform("min")).dt.days.astype(float)

    base_features = [
        "real_price", "real_competitor_price", "out_store", "in_store", "promo", "promo_count",
        "cpi", "salary_regional", "population", "dow", "month", "age_days", "stock_lag1",
        *[f"sales_lag{k}" for k in cfg.lags],
        *[f"sales_roll{w}_{s}" for w in cfg.windows for s in ("mean", "std", "nonzero")],
        *[f"promo_lag{k}" for k in cfg.lags[:2]],
        *[f"promo_roll{w}_mean" for w in cfg.windows],
    ]
    keep_cols = list(KEY_COLUMNS) + ["target", "sales_true", "observed", "real_cogs", "real_rebate"] + \
        [c for c in base_features if c not in KEY_COLUMNS]
    fm = split_and_filter(df[keep_cols], spec, base_features)

    tr = fm.frame["split_tag"].to_numpy() == "train"
    state = target_encode_fit(fm.frame.loc[tr], cfg.encode_columns, alpha=cfg.te_alpha)
    enc_names = []
    for i, col in enumerate(cfg.encode_columns):
        name = f"te_{col}"
        vals = np.empty(len(fm.frame))
        vals[~tr] = target_encode_transform(state, fm.frame.loc[~tr], col, "plain")
        vals[tr] = target_encode_transform(state, fm.frame.loc[tr], col, "ordered", seed=seed + i)
        fm.frame[name] = vals
        enc_names.append(name)
    fm.feature_names = fm.feature_names + enc_names
    fm.encoder = state
    return fm
