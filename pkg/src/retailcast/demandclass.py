"""Syntetos-Boylan demand classification (ADI / CV² quadrants)."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import pandas as pd

ADI_CUTOFF = 1.32
CV2_CUTOFF = 0.49
# values within this distance of a cutoff count as on it (rounding in var/mean**2)
BOUNDARY_TOL = 1e-12


class DemandClass(str, enum.Enum):
    SMOOTH = "Smooth"
    INTERMITTENT = "Intermittent"
    ERRATIC = "Erratic"
    LUMPY = "Lumpy"
    NO_DEMAND = "No Demand"


@dataclass(frozen=True)
class DemandStats:
    adi: float
    cv2: float
    nonzero_count: int


def demand_stats(series, leading_interval: bool = False, missing_as_zero: bool = False) -> DemandStats:
    """Average inter-demand interval and squared CV of nonzero demand sizes.

    ADI is the mean gap between successive demand occurrences. With
    ``leading_interval`` the periods up to and including the first demand
    count as one more interval. A single demand with no leading interval
    falls back to ``len(series) / 1``. Missing values (NaN) are dropped
    unless ``missing_as_zero``.

    For a series without demand both ``adi`` and ``cv2`` are NaN.
    """
    y = np.asarray(series, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("series must be a non-empty 1-d sequence")
    y = np.where(np.isnan(y), 0.0, y) if missing_as_zero else y[~np.isnan(y)]
    if np.any(y < 0):
        raise ValueError("demand must be nonnegative")
    idx = np.flatnonzero(y > 0)
    n = idx.size
    if n == 0:
        return DemandStats(float("nan"), float("nan"), 0)
    gaps = np.diff(idx).astype(float)
    if leading_interval:
        gaps = np.concatenate([[idx[0] + 1.0], gaps])
    adi = float(gaps.mean()) if gaps.size else float(y.size)
    sizes = y[idx]
    mean = sizes.mean()
    cv2 = float(sizes.var() / mean**2)
    return DemandStats(adi, cv2, int(n))


def classify(stats: DemandStats) -> DemandClass:
    if stats.nonzero_count == 0:
        return DemandClass.NO_DEMAND
    gappy = stats.adi >= ADI_CUTOFF - BOUNDARY_TOL
    variable = stats.cv2 >= CV2_CUTOFF - BOUNDARY_TOL
    if gappy and variable:
        return DemandClass.LUMPY
    if gappy:
        return DemandClass.INTERMITTENT
    if variable:
        return DemandClass.ERRATIC
    return DemandClass.SMOOTH


def classify_series_table(panel: pd.DataFrame, **kwargs) -> pd.DataFrame:
    """One row per (product, store) series: series_key, adi, cv2, class."""
    if len(panel) == 0:
        raise ValueError("panel is empty")
    rows = []
    for (prod, store), g in panel.groupby(["product_id", "store_id"], sort=True):
        st = demand_stats(g["sales"].to_numpy(dtype=float), **kwargs)
        rows.append((f"{prod}|{store}", st.adi, st.cv2, classify(st).value))
    return pd.DataFrame(rows, columns=["series_key", "adi", "cv2", "class"])


def classify_panel(panel: pd.DataFrame, **kwargs) -> dict[DemandClass, float]:
    """Fraction of series falling in each demand class (all five keys present)."""
    table = classify_series_table(panel, **kwargs)
    counts = table["class"].value_counts()
    n = len(table)
    return {c: float(counts.get(c.value, 0)) / n for c in DemandClass}
