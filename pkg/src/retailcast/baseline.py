"""Naive mean benchmark and the forecaster interface used by the runner."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np
import pandas as pd

from . import gbdt


class Forecaster(Protocol):
    name: str

    def fit(self, train: pd.DataFrame, feature_names: Sequence[str]) -> "Forecaster": ...

    def predict(self, rows: pd.DataFrame) -> np.ndarray: ...


def _train_rows(train: pd.DataFrame) -> pd.DataFrame:
    rows = train[train["target"].notna()]
    if len(rows) == 0:
        raise ValueError("no training rows with a target")
    return rows


@dataclass
class NaiveMeanModel:
    series_mean: dict
    group_mean: dict
    global_mean: float


def naive_fit(train: pd.DataFrame) -> NaiveMeanModel:
    """Per-series, per-group and global means of the training target.

    Rows whose target is missing are ignored, so raw arms average observed
    points only while imputed arms include imputed points.
    """
    rows = _train_rows(train)
    return NaiveMeanModel(
        series_mean=rows.groupby("series_key", sort=True)["target"].mean().to_dict(),
        group_mean=rows.groupby("group_id", sort=True)["target"].mean().to_dict(),
        global_mean=float(rows["target"].mean()),
    )


def naive_predict(model: NaiveMeanModel, rows: pd.DataFrame) -> np.ndarray:
    """Series mean when the series was seen, else its group mean, else the global mean."""
    by_series = rows["series_key"].map(model.series_mean)
    by_group = rows["group_id"].map(model.group_mean)
    return by_series.fillna(by_group).fillna(model.global_mean).to_numpy(dtype=float)


class NaiveMeanForecaster:
    name = "naive"

    def __init__(self, **_):
        self.model: NaiveMeanModel | None = None

    def fit(self, train, feature_names=()):
        self.model = naive_fit(train)
        return self

    def predict(self, rows):
        return naive_predict(self.model, rows)


class GbdtForecaster:
    name = "gbdt"

    def __init__(self, config: gbdt.GbdtConfig | None = None, clip_negative: bool = True, **_):
        self.config = config or gbdt.GbdtConfig()
        self.clip_negative = clip_negative
        self.model: gbdt.GbdtModel | None = None

    def fit(self, train, feature_names):
        rows = _train_rows(train)
        self.model = gbdt.fit(rows[list(feature_names)], rows["target"].to_numpy(dtype=float), self.config)
        return self

    def predict(self, rows):
        pred = self.model.predict(rows)
        return np.maximum(pred, 0.0) if self.clip_negative else pred


REGISTRY: dict[str, Callable[..., Forecaster]] = {
    "naive": NaiveMeanForecaster,
    "gbdt": GbdtForecaster,
}


def register(name: str, factory: Callable[..., Forecaster]) -> None:
    if name in REGISTRY:
        raise KeyError(f"forecaster {name!r} already registered")
    REGISTRY[name] = factory


def make_forecaster(name: str, **kwargs) -> Forecaster:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown forecaster {name!r}; known: {sorted(REGISTRY)}") from None
    return factory(**kwargs)
