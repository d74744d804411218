import datetime as dt
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beir_narrative.gkg import GkgRecord
from beir_narrative.panel import (
    DailyThemePanel,
    ModelData,
    PanelAccumulator,
    PanelError,
    adf_gate,
    aggregate_daily,
    build_model_data,
    diff_k,
    make_labels,
    standardize_apply,
    standardize_fit,
)
from beir_narrative.taxonomy import load_rules

TAX = load_rules()
THEMES = ["ECON_INFLATION", "ECON_STOCKMARKET", "EPU_POLICY", "PROTEST", "TAX_FNCACT_MINISTER", "LEADER", "ZZZ_UNMAPPED"]


def _rec(i, day, themes, tone):
    return GkgRecord(str(i), day, tuple(themes), tone, frozenset({"US"}))


def _random_records(seed, n=50, days=5):
    rng = np.random.default_rng(seed)
    base = dt.date(2016, 3, 7)
    out = []
    for i in range(n):
        k = rng.integers(0, len(THEMES) + 1)
        themes = list(rng.choice(THEMES, size=k, replace=False))
        out.append(_rec(i, base + dt.timedelta(days=int(rng.integers(0, days))), themes, round(float(rng.uniform(-8, 8)), 3)))
    return out


def _groupby_oracle(records):
    acc = defaultdict(list)
    for r in records:
        for t in r.themes:
            if TAX.is_retained(t):
                acc[(r.date, t)].append(r.avg_tone)
    return {k: sum(v) / len(v) for k, v in acc.items()}


def _panel_as_dict(panel):
    out = {}
    for i, d in enumerate(panel.dates.tolist()):
        for j, t in enumerate(panel.columns):
            if panel.counts[i, j]:
                out[(d, t)] = panel.values[i, j]
    return out


# --- aggregation -------------------------------------------------------------

def test_same_day_mean():
    day = dt.date(2016, 3, 7)
    p = aggregate_daily([_rec(1, day, ["ECON_INFLATION"], 2.0), _rec(2, day, ["ECON_INFLATION"], 4.0)], TAX)
    assert p.values[0, p.columns.index("ECON_INFLATION")] == 3.0


def test_tone_goes_to_all_retained_themes():
    day = dt.date(2016, 3, 7)
    p = aggregate_daily([_rec(1, day, ["ECON_INFLATION", "PROTEST", "TAX_FNCACT_MINISTER"], -1.5)], TAX)
    assert p.columns == ("ECON_INFLATION", "PROTEST")
    np.testing.assert_array_equal(p.values, [[-1.5, -1.5]])


def test_fixture_matches_groupby():
    recs = _random_records(3)
    p = aggregate_daily(recs, TAX, "US")
    got = _panel_as_dict(p)
    want = _groupby_oracle(recs)
    assert got.keys() == want.keys()
    for k in want:
        assert got[k] == pytest.approx(want[k], abs=1e-12)
    assert p.n_records == 50 and len(p.dates) <= 5


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 49))
def test_merge_of_batches_equals_single_pass(seed, cut):
    recs = _random_records(seed)
    whole = aggregate_daily(recs, TAX)
    a = PanelAccumulator(TAX).add(recs[:cut])
    b = PanelAccumulator(TAX).add(recs[cut:])
    merged = b.merge(a).panel("")
    assert merged.columns == whole.columns
    np.testing.assert_array_equal(merged.dates, whole.dates)
    np.testing.assert_allclose(merged.values, whole.values, atol=1e-12)
    np.testing.assert_array_equal(merged.counts, whole.counts)


def test_reindex_fills_zero_and_drops_weekends():
    recs = [_rec(1, dt.date(2016, 3, 5), ["ECON_INFLATION"], 5.0), _rec(2, dt.date(2016, 3, 7), ["ECON_INFLATION"], 1.0)]
    p = aggregate_daily(recs, TAX)
    cal = np.array(["2016-03-04", "2016-03-07", "2016-03-08"], dtype="datetime64[D]")
    np.testing.assert_array_equal(p.reindex(cal), [[0.0], [1.0], [0.0]])


def test_panel_csv_round_trip(tmp_path):
    p = aggregate_daily(_random_records(9), TAX, "US")
    p.to_csv(tmp_path / "panel.csv")
    q = DailyThemePanel.from_csv(tmp_path / "panel.csv")
    assert q.columns == p.columns and q.country == "US" and q.taxonomy_digest == TAX.digest
    np.testing.assert_array_equal(q.values, p.values)
    np.testing.assert_array_equal(q.counts, p.counts)


def test_panel_rejects_phantom_cells():
    with pytest.raises(PanelError):
        DailyThemePanel("US", np.array(["2016-01-04"], dtype="datetime64[D]"), ("A",), np.ones((1, 1)), np.zeros((1, 1), dtype=int))


# --- differencing -----------------------------------------------------------------

def test_diff_examples():
    np.testing.assert_array_equal(diff_k([1, 2, 3, 4, 5, 6, 7], 5), [5, 5])
    np.testing.assert_array_equal(diff_k(np.full(12, 3.3), 5), np.zeros(7))
    with pytest.raises(ValueError):
        diff_k([1, 2, 3, 4, 5], 5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8), st.integers(10, 60))
def test_diff_loop_oracle_and_inverse(seed, k, n):
    x = np.random.default_rng(seed).normal(size=n)
    d = diff_k(x, k)
    np.testing.assert_allclose(d, [x[t] - x[t - k] for t in range(k, n)])
    # rebuild from k seeds by cumulative summation
    rebuilt = np.empty(n)
    rebuilt[:k] = x[:k]
    for t in range(k, n):
        rebuilt[t] = rebuilt[t - k] + d[t - k]
    np.testing.assert_allclose(diff_k(rebuilt, k), d, atol=1e-12)


# --- ADF gate -------------------------------------------------------------------

def test_adf_gate_random_walk_and_ar1():
    rng = np.random.default_rng(42)
    rw = np.cumsum(rng.normal(size=500))
    ar = np.zeros(500)
    e = rng.normal(size=500)
    for t in range(1, 500):
        ar[t] = 0.5 * ar[t - 1] + e[t]
    const = np.full(500, 2.0)
    rows = adf_gate(np.column_stack([rw, ar, const]), ["rw", "ar", "const"])
    assert rows[0].level_p > 0.05 and rows[0].diff_p < 0.05 and rows[0].stationary
    assert rows[1].level_p < 0.05
    assert rows[2].degenerate and not rows[2].stationary


def test_adf_gate_too_short():
    with pytest.raises(ValueError):
        adf_gate(np.zeros((40, 1)), ["x"])


# --- scaling --------------------------------------------------------------------

def test_scaler_examples():
    s = standardize_fit(np.array([[1.0], [3.0]]), ["a"])
    np.testing.assert_array_equal(standardize_apply(s, [[1.0], [3.0]]), [[-1.0], [1.0]])
    z = np.random.default_rng(0).normal(size=(30, 4))
    z = standardize_apply(standardize_fit(z, list("abcd")), z)
    np.testing.assert_allclose(standardize_apply(standardize_fit(z, list("abcd")), z), z, atol=1e-12)


def test_scaler_zero_variance_names_column():
    X = np.column_stack([np.arange(5.0), np.ones(5)])
    with pytest.raises(PanelError, match="flat"):
        standardize_fit(X, ["ok", "flat"])
    with pytest.raises(ValueError):
        standardize_fit(X[:1], ["ok", "flat"])


def test_scaler_window_only():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(100, 3)) + np.linspace(0, 5, 100)[:, None]
    s = standardize_fit(X, ["a", "b", "c"], rows=slice(0, 60))
    Z = s.apply(X)
    np.testing.assert_allclose(Z[:60].mean(axis=0), 0, atol=1e-9)
    np.testing.assert_allclose(Z[:60].var(axis=0), 1, atol=1e-9)
    assert np.all(np.abs(Z[60:].mean(axis=0)) > 0.1)


# --- labels ---------------------------------------------------------------------

def test_labels_monotone_series():
    up = make_labels(np.arange(20.0), 5, 1)
    assert up.values.all() and up.n_zero == 0
    assert not make_labels(-np.arange(20.0), 5, 1).values.any()
    with pytest.raises(ValueError):
        make_labels(np.arange(6.0), 5, 1)


def test_labels_sign_oracle_with_zero_changes():
    rng = np.random.default_rng(8)
    b = np.cumsum(rng.integers(-1, 2, size=300)).astype(float)
    lab = make_labels(b, 5, 1)
    expect_pos, expect_val, zeros = [], [], 0
    for t in range(4, 299):
        ch = b[t + 1] - b[t - 4]
        if ch == 0:
            zeros += 1
            continue
        expect_pos.append(t)
        expect_val.append(int(ch > 0))
    assert zeros > 0 and lab.n_zero == zeros
    np.testing.assert_array_equal(lab.positions, expect_pos)
    np.testing.assert_array_equal(lab.values, expect_val)


def test_labels_do_not_look_past_horizon():
    rng = np.random.default_rng(1)
    b = rng.normal(size=50)
    base = make_labels(b, 5, 1)
    b2 = b.copy()
    b2[30:] += 100.0  # change the future after position 28
    changed = make_labels(b2, 5, 1)
    keep = base.positions + 1 < 30
    np.testing.assert_array_equal(base.values[keep], changed.values[: keep.sum()])


# --- model data -----------------------------------------------------------------

def _model_data(n=40, seed=0):
    rng = np.random.default_rng(seed)
    dates = np.busday_offset(np.datetime64("2016-01-04"), np.arange(n), roll="forward")
    beir = np.cumsum(rng.normal(size=n))
    market = np.cumsum(rng.normal(size=(n, 2)), axis=0)
    themes = rng.normal(size=(n, 3))
    return dates, beir, market, themes


def test_build_model_data_alignment():
    dates, beir, market, themes = _model_data()
    md = build_model_data("US", dates, beir, market, ["S", "F"], themes, ["A", "B", "C"], k=5, horizon=1)
    assert md.n == 40 - 5 - 1
    np.testing.assert_array_equal(md.dates, dates[5:39])
    np.testing.assert_allclose(md.market[0], market[5] - market[0])
    np.testing.assert_allclose(md.themes[-1], themes[38] - themes[33])
    np.testing.assert_array_equal(md.labels, (beir[6:40] - beir[1:35] > 0).astype(int))


def test_model_data_csv_round_trip(tmp_path):
    dates, beir, market, themes = _model_data()
    md = build_model_data("US", dates, beir, market, ["S", "F"], themes, ["A", "B", "C"])
    md.to_csv(tmp_path / "md.csv")
    back = ModelData.from_csv(tmp_path / "md.csv")
    assert back.market_names == md.market_names and back.theme_names == md.theme_names
    np.testing.assert_array_equal(back.market, md.market)
    np.testing.assert_array_equal(back.themes, md.themes)
    np.testing.assert_array_equal(back.labels, md.labels)
    np.testing.assert_array_equal(back.dates, md.dates)
