from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from indextrack.errors import ConfigError, DataError
from indextrack.market import (
    FeatureScaler,
    MarketPanel,
    PanelSchema,
    SynthSpec,
    TimeGrid,
    build_state,
    daily_features,
    load_panel,
    synth_panel,
    write_panel,
)

CSV_3x2 = """date,index,vix,tbill,p_AAA,vol_AAA,p_BBB,vol_BBB
2020-01-02,100,15,0.0001,10,1000,20,500
2020-01-03,101,16,0.0001,11,1100,19,600
2020-01-06,102,14,0.0001,12,900,21,700
"""


def _write(tmp_path: Path, text: str, name: str = "panel.csv") -> Path:
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def _panel(prices, index=None, vix=True) -> MarketPanel:
    prices = np.asarray(prices, dtype=float)
    d, n = prices.shape
    return MarketPanel(
        dates=tuple(f"2020-01-{i + 1:02d}" for i in range(d)),
        index_level=np.full(d, 100.0) if index is None else np.asarray(index, dtype=float),
        prices=prices,
        volumes=np.ones((d, n)),
        tbill_rate=np.zeros(d),
        tickers=tuple(f"S{j}" for j in range(n)),
        vix=np.full(d, 20.0) if vix else None,
    )


def test_load_panel_round_trip(tmp_path):
    panel = load_panel(_write(tmp_path, CSV_3x2))
    assert panel.n_days == 3
    assert panel.tickers == ("AAA", "BBB")
    assert panel.prices[1].tolist() == [11.0, 19.0]
    out = tmp_path / "copy.csv"
    write_panel(panel, out)
    again = load_panel(out)
    assert np.array_equal(again.prices, panel.prices)
    assert np.array_equal(again.volumes, panel.volumes)
    assert again.dates == panel.dates


def test_zero_price_on_day_two_is_named(tmp_path):
    text = CSV_3x2.replace("2020-01-03,101,16,0.0001,11,", "2020-01-03,101,16,0.0001,0,")
    with pytest.raises(DataError, match=r"row 1 \(2020-01-03\).*p_AAA"):
        load_panel(_write(tmp_path, text))


def test_missing_price_rejected_unless_allowed(tmp_path):
    text = CSV_3x2.replace("2020-01-03,101,16,0.0001,11,1100", "2020-01-03,101,16,0.0001,,")
    path = _write(tmp_path, text)
    with pytest.raises(DataError, match="missing price"):
        load_panel(path)
    panel = load_panel(path, allow_missing=True)
    assert np.isnan(panel.prices[1, 0])
    assert not panel.is_complete()


def test_absent_vix_shrinks_state_width(tmp_path):
    lines = [",".join(c for i, c in enumerate(row.split(",")) if i != 2) for row in CSV_3x2.strip().split("\n")]
    panel = load_panel(_write(tmp_path, "\n".join(lines) + "\n"), PanelSchema(vix=None))
    assert not panel.has_vix
    assert panel.feature_width == 2 * 2 + 2
    grid = TimeGrid(M=1, n_s=2, n=1)
    assert build_state(panel, grid, 2).shape == (2, 6)


def test_unsorted_dates_rejected(tmp_path):
    text = CSV_3x2.replace("2020-01-06", "2020-01-01")
    with pytest.raises(DataError, match="increasing"):
        load_panel(_write(tmp_path, text))


def test_bad_date_format_rejected(tmp_path):
    with pytest.raises(DataError, match="ISO"):
        load_panel(_write(tmp_path, CSV_3x2.replace("2020-01-03", "03/01/2020")))


def test_missing_file_is_data_error(tmp_path):
    with pytest.raises(DataError):
        load_panel(tmp_path / "nope.csv")


def test_constant_prices_give_zero_returns():
    panel = _panel(np.full((6, 3), 50.0))
    s = build_state(panel, TimeGrid(M=2, n_s=2, n=1), 5)
    assert s.shape == (4, 2 * 3 + 3)
    assert np.all(s[:, 0] == 0.0)
    assert np.all(s[:, 3:6] == 0.0)


def test_state_shape_two_stocks():
    panel = _panel(np.arange(1, 13, dtype=float).reshape(6, 2))
    s = build_state(panel, TimeGrid(M=2, n_s=2, n=1), 4)
    assert s.shape == (4, 7)
    assert s.ravel().size == 4 * 7


def test_price_doubling_gives_unit_return():
    prices = np.array([[10.0], [10.0], [20.0]])
    panel = _panel(prices)
    s = build_state(panel, TimeGrid(M=1, n_s=2, n=1), 2)
    # columns: index return, vix, tbill, stock return, volume
    assert s[-1, 3] == 1.0
    assert s[0, 3] == 0.0


def test_state_needs_history():
    panel = _panel(np.full((4, 1), 5.0))
    with pytest.raises(DataError):
        build_state(panel, TimeGrid(M=2, n_s=2, n=1), 3)


def test_state_is_local_and_has_no_lookahead():
    rng = np.random.default_rng(3)
    prices = 50 * np.exp(np.cumsum(rng.normal(0, 0.01, (30, 3)), axis=0))
    a = _panel(prices)
    changed = prices.copy()
    changed[21:] *= 1.5  # differs only after the decision day
    b = _panel(changed)
    grid = TimeGrid(M=5, n_s=2, n=1)
    assert np.array_equal(build_state(a, grid, 20), build_state(b, grid, 20))
    assert not np.array_equal(build_state(a, grid, 21), build_state(b, grid, 21))


def test_scaler_standardizes_training_rows():
    panel = synth_panel(0, 3, 200)
    sc = FeatureScaler.fit(panel, 1, 150)
    z = sc.transform(daily_features(panel)[1:150])
    assert np.allclose(z.mean(axis=0), 0.0, atol=1e-10)
    assert np.allclose(z.std(axis=0), 1.0, atol=1e-10)


def test_time_grid_validation():
    with pytest.raises(ConfigError):
        TimeGrid(M=10, n_s=1, n=1, n_b=3)
    with pytest.raises(ConfigError):
        TimeGrid(M=2, n_s=1, n=1, n_b=3)
    with pytest.raises(ConfigError):
        TimeGrid(M=0, n_s=1, n=1)
    assert TimeGrid(M=10, n_s=1, n=1, n_b=10).lookback_days == 10


def test_synth_is_deterministic():
    a = synth_panel(0, 4, 50)
    b = synth_panel(0, 4, 50)
    assert a.prices.tobytes() == b.prices.tobytes()
    assert a.index_level.tobytes() == b.index_level.tobytes()
    assert a.volumes.tobytes() == b.volumes.tobytes()
    assert a.dates == b.dates


def test_one_hot_index_follows_first_stock():
    p = synth_panel(1, 3, 100, SynthSpec(index_weights=(1.0, 0.0, 0.0)))
    r_idx = p.index_level[1:] / p.index_level[:-1] - 1
    r_1 = p.prices[1:, 0] / p.prices[:-1, 0] - 1
    assert np.allclose(r_idx, r_1, rtol=0, atol=1e-14)


def test_equal_weight_index_matches_recomputed_portfolio():
    p = synth_panel(2, 3, 80)
    r = p.prices[1:] / p.prices[:-1] - 1
    level = p.index_level[0] * np.cumprod(1 + r.mean(axis=1))
    assert np.allclose(p.index_level[1:], level, rtol=1e-13)
    assert p.meta["index_weights"] == pytest.approx((1 / 3,) * 3)


def test_synth_rejects_bad_weights():
    with pytest.raises(ConfigError):
        synth_panel(0, 2, 10, SynthSpec(index_weights=(0.7, 0.7)))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 6), m=st.integers(1, 5), n_s=st.integers(1, 3), vix=st.booleans())
def test_flattened_state_length(n, m, n_s, vix):
    panel = synth_panel(0, n, m * n_s + 3, SynthSpec(with_vix=vix))
    grid = TimeGrid(M=m, n_s=n_s, n=1)
    s = build_state(panel, grid, m * n_s)
    assert s.ravel().size == m * n_s * (2 * n + (3 if vix else 2))
    # last row is the decision day's own observation
    assert s[-1, 0] == pytest.approx(panel.index_level[m * n_s] / panel.index_level[m * n_s - 1] - 1)
