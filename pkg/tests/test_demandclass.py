import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from oracles import ref_classify
from retailcast.demandclass import (DemandClass, DemandStats, classify, classify_panel,
                                    classify_series_table, demand_stats)


def test_worked_adi_example():
    st_ = demand_stats([3, 0, 0, 3, 0, 0, 3, 0, 0, 3])
    assert st_.adi == 3.0 and st_.cv2 == 0.0 and st_.nonzero_count == 4
    assert classify(st_) is DemandClass.INTERMITTENT


def test_every_period_equal():
    st_ = demand_stats([2, 2, 2, 2])
    assert (st_.adi, st_.cv2) == (1.0, 0.0)
    assert classify(st_) is DemandClass.SMOOTH


def test_no_demand():
    st_ = demand_stats([0, 0, 0, 0])
    assert st_.nonzero_count == 0 and math.isnan(st_.adi) and math.isnan(st_.cv2)
    assert classify(st_) is DemandClass.NO_DEMAND


@pytest.mark.parametrize("adi,cv2,expected", [
    (3.0, 0.0, DemandClass.INTERMITTENT),
    (1.0, 0.0, DemandClass.SMOOTH),
    (2.0, 1.0, DemandClass.LUMPY),
    (1.0, 0.49, DemandClass.ERRATIC),
    (1.32, 0.1, DemandClass.INTERMITTENT),
    (1.3199, 0.4899, DemandClass.SMOOTH),
])
def test_quadrants(adi, cv2, expected):
    assert classify(DemandStats(adi, cv2, 5)) is expected


def test_single_demand_adi_falls_back_to_length():
    assert demand_stats([0, 0, 5, 0]).adi == 4.0
    assert demand_stats([0, 0, 5, 0], leading_interval=True).adi == 3.0


def test_missing_handling():
    assert demand_stats([1, np.nan, 1]).adi == 1.0
    assert demand_stats([1, np.nan, 1], missing_as_zero=True).adi == 2.0


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        demand_stats([])
    with pytest.raises(ValueError):
        demand_stats([1, -1])


def _panel(series_by_store):
    rows = []
    for store, ys in series_by_store.items():
        for t, y in enumerate(ys):
            rows.append({"product_id": "P1", "store_id": store,
                         "date": pd.Timestamp("2023-01-01") + pd.Timedelta(days=t), "sales": y})
    return pd.DataFrame(rows)


def test_classify_panel_examples():
    assert classify_panel(_panel({"S1": [0, 0, 0]}))[DemandClass.NO_DEMAND] == 1.0
    dist = classify_panel(_panel({"S1": [5, 5, 5, 5], "S2": [9, 0, 0, 1, 0, 0, 30]}))
    assert dist[DemandClass.SMOOTH] == 0.5 and dist[DemandClass.LUMPY] == 0.5
    assert set(dist) == set(DemandClass)


def test_series_table_columns():
    tab = classify_series_table(_panel({"S1": [1, 0, 2], "S2": [0, 0, 0]}))
    assert list(tab.columns) == ["series_key", "adi", "cv2", "class"]
    assert tab["series_key"].tolist() == ["P1|S1", "P1|S2"]
    with pytest.raises(ValueError):
        classify_series_table(_panel({}).reindex(columns=["product_id", "store_id", "date", "sales"]))


@given(st.lists(st.one_of(st.just(0), st.integers(1, 40)), min_size=1, max_size=60))
def test_matches_reference(ys):
    assert classify(demand_stats(ys)).value == ref_classify(ys)


@given(st.lists(st.integers(0, 20), min_size=1, max_size=40), st.sampled_from([2, 4, 8, 16]))
def test_size_scale_invariance(ys, k):
    a = classify(demand_stats(ys))
    b = classify(demand_stats([y * k for y in ys]))
    assert a is b
