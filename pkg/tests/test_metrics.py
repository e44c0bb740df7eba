import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from oracles import close, random_eval_case, ref_metrics, reports_identical
from retailcast import metrics as M


def frame_of(true, pred, series=None, product=None, zone=None, group=None, dates=None,
             price=1.0, cogs=0.0, rebate=0.0):
    n = len(true)
    return pd.DataFrame({
        "series_key": series or ["P1|S1"] * n,
        "product_id": product or ["P1"] * n,
        "group_id": group or ["G1"] * n,
        "zone_id": zone or [1] * n,
        "date": pd.to_datetime(dates or pd.date_range("2023-01-02", periods=n)),
        "true_sales": np.asarray(true, float),
        "pred_sales": np.asarray(pred, float),
        "real_price": price, "cogs": cogs, "rebate": rebate,
    })


# ---------------------------------------------------------------- examples

def test_wmape_examples():
    assert M.wmape([2, 0, 4], [1, 1, 4]) == pytest.approx(2 / 6)
    assert M.wmape([1, 2], [1, 2]) == 0
    assert math.isnan(M.wmape([0, 0], [1, 1]))


def test_pointwise_examples():
    pw = M.pointwise_suite([1, 2, 3], [1, 2, 3])
    assert pw["mse"] == 0 and pw["r2"] == 1
    pw = M.pointwise_suite([0, 2], [1, 1])
    assert (pw["mse"], pw["mae"], pw["me"], pw["mfb"]) == (1, 1, 0, 0)
    assert math.isnan(M.pointwise_suite([3, 3], [1, 2])["r2"])


def test_scaled_examples():
    assert M.mase([1, 3, 1, 3], [2, 2], [1, 1]) == pytest.approx(0.5)
    assert M.rmsse([1, 3, 1, 3], [2, 2], [1, 1]) == pytest.approx(0.5)
    assert M.mase([1, 3, 1, 3], [2, 2], [2, 2]) == 0
    assert math.isnan(M.mase([4, 4, 4], [1], [2]))
    assert math.isnan(M.rmsse([4], [1], [2]))


def test_naive_scales_drop_missing_first():
    assert M.naive_scales([1, np.nan, 3, 1]) == (2.0, 4.0)


def test_theils_bias_examples():
    # errors 0 and 2: me 1, mse 2
    assert M.theils_bias([0, 0], [0, 2]) == pytest.approx(0.5)
    assert M.theils_bias([1, 2, 3], [0, 2, 4]) == 0
    assert M.theils_bias([1, 2, 3], [3, 4, 5]) == 1.0
    assert M.theils_bias([1, 2], [1, 2]) == 0


def test_group_wmape_single_cell():
    f = frame_of([100], [93.1])
    rev, pro = M.group_financial_wmape(f)
    assert rev == pytest.approx(0.069)
    f = frame_of([3, 4], [3, 4], price=2.0, cogs=1.0)
    assert M.group_financial_wmape(f) == (0.0, 0.0)


def test_series_wmape_is_mean_over_products():
    # product P1 wmape 0.2, product P2 wmape 0.4
    f = frame_of([10, 10], [12, 6], series=["P1|S1", "P2|S1"], product=["P1", "P2"])
    rev, _ = M.series_financial_wmape(f)
    assert rev == pytest.approx(0.3)


def test_series_wmape_aggregates_zone_cells_per_product():
    # two stores in one zone cancel inside the cell
    f = frame_of([10, 10], [12, 8], series=["P1|S1", "P1|S2"], product=["P1", "P1"], zone=[1, 1])
    assert M.series_financial_wmape(f)[0] == 0
    f = f.assign(zone_id=[1, 2])
    assert M.series_financial_wmape(f)[0] == pytest.approx(0.2)


def test_single_series_group_equals_series_wmape():
    f = frame_of([3, 0, 5], [2, 1, 5], price=4.0, cogs=1.0, rebate=0.5)
    assert M.group_financial_wmape(f) == pytest.approx(M.series_financial_wmape(f))


def test_demand_error_bias_examples():
    f = frame_of([5, 5], [4, 5])
    err, bias = M.demand_error_bias(f)
    assert (err, bias) == (pytest.approx(0.1), pytest.approx(-0.1))
    assert M.demand_error_bias(frame_of([1, 2], [1, 2])) == (0, 0)


def test_weekly_cancellation():
    # Monday over, Tuesday under by the same amount
    f = frame_of([2, 2], [3, 1], dates=["2023-01-02", "2023-01-03"])
    pw = M.pointwise_suite(f["true_sales"], f["pred_sales"])
    err, bias = M.demand_error_bias(f)
    assert err == 0 and bias == 0 and pw["mae"] == 1


def test_weekly_buckets_start_monday():
    # Sunday and the following Monday land in different buckets
    f = frame_of([2, 2], [3, 1], dates=["2023-01-08", "2023-01-09"])
    assert M.demand_error_bias(f)[0] == pytest.approx(0.5)


def test_financial_frame_requires_columns():
    with pytest.raises(KeyError):
        M.financial_frame(pd.DataFrame({"true_sales": [1.0]}))


def test_evaluate_zero_truth_gives_sentinels():
    f = frame_of([0, 0], [1, 0])
    rep = M.evaluate(f, {"P1|S1": np.array([1.0, 2.0])})
    assert math.isnan(rep.group_rev_wmape) and math.isnan(rep.series_rev_wmape)
    assert math.isnan(rep.mfb) and rep.mse == 0.5


def test_scaled_errors_exclusion_count():
    f = frame_of([1, 2], [1, 1], series=["A", "B"])
    r, m, excl = M.scaled_errors(f, {"A": np.array([1.0, 2.0]), "B": np.array([3.0, 3.0])})
    assert excl == 1 and m == 0


def test_pooled_scale_weights_rows():
    f = frame_of([0, 0, 0], [1, 1, 2], series=["A", "A", "B"])
    hist = {"A": np.array([0.0, 1.0]), "B": np.array([0.0, 1.0])}
    _, m_series, _ = M.scaled_errors(f, hist)
    _, m_pooled, _ = M.scaled_errors(f, hist, pooled=True)
    assert m_series == pytest.approx(1.5)
    assert m_pooled == pytest.approx(4 / 3)


def test_masked_examples():
    f, _, h = random_eval_case(np.random.default_rng(3), n=30)
    full = M.evaluate(f, h)
    assert reports_identical(M.masked_evaluate(f, np.ones(len(f), bool), h), full)
    with pytest.raises(ValueError):
        M.masked_evaluate(f, np.zeros(len(f), bool), h)
    with pytest.raises(ValueError):
        M.masked_evaluate(f, np.ones(len(f) + 1, bool), h)


def test_masking_exact_rows_keeps_error_sums():
    f = frame_of([1, 2, 3, 4], [1, 5, 3, 0])
    exact = (f["true_sales"] == f["pred_sales"]).to_numpy()
    rep = M.masked_evaluate(f, ~exact, {})
    assert rep.mae * rep.n_rows == pytest.approx(np.abs(f["pred_sales"] - f["true_sales"]).sum())


def test_report_table_header():
    f, _, h = random_eval_case(np.random.default_rng(1), n=10)
    tab = M.report_table([("G1", M.evaluate(f, h))])
    assert list(tab.columns) == M.REPORT_COLUMNS
    assert ",".join(M.REPORT_COLUMNS) == (
        "Group,MSE,RMSE,MAE,R2,Group Revenue WMAPE,Series Revenue WMAPE,Group Profit WMAPE,"
        "Series Profit WMAPE,Demand Error,Demand Bias,RMSSE,MASE,ME,MFB,Theils Bias")


# ---------------------------------------------------------------- properties

@given(st.integers(0, 2**32 - 1))
def test_matches_oracle(seed):
    f, rows, h = random_eval_case(np.random.default_rng(seed))
    got = M.evaluate(f, h).values()
    for k, v in ref_metrics(rows, h).items():
        assert close(got[k], v), (k, got[k], v)


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
def test_scale_covariance(seed, k):
    f, _, h = random_eval_case(np.random.default_rng(seed))
    base = M.evaluate(f, h)
    g = f.assign(true_sales=f["true_sales"] * k, pred_sales=f["pred_sales"] * k)
    scaled = M.evaluate(g, {s: v * k for s, v in h.items()})
    for name in ("group_rev_wmape", "series_rev_wmape", "group_profit_wmape", "series_profit_wmape",
                 "mfb", "mase", "rmsse", "r2", "theils_bias", "demand_error", "demand_bias"):
        assert close(getattr(scaled, name), getattr(base, name), 1e-8), name
    assert close(scaled.mse, base.mse * k * k, 1e-8)
    for name in ("mae", "me", "rmse"):
        assert close(getattr(scaled, name), getattr(base, name) * k, 1e-8), name


@given(st.integers(0, 2**32 - 1))
def test_masked_equals_filtered(seed):
    rng = np.random.default_rng(seed)
    f, _, h = random_eval_case(rng)
    mask = rng.random(len(f)) < 0.6
    mask[rng.integers(len(f))] = True
    assert reports_identical(M.masked_evaluate(f, mask, h), M.evaluate(f.loc[mask], h))


@given(st.lists(st.floats(0, 50), min_size=1, max_size=30), st.floats(-5, 5))
def test_theils_bias_in_unit_interval(true, shift):
    pred = np.asarray(true) + shift + np.sin(np.arange(len(true)))
    tb = M.theils_bias(true, pred)
    assert 0.0 <= tb <= 1.0
