from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from indextrack.errors import ConfigError, DataError
from indextrack.metrics import (
    ErrorKind,
    ErrorSpec,
    Penalty,
    Trajectory,
    backtest_metrics,
    interest_adjusted,
    r_te,
    reward,
    tracking_error,
    v_te,
)

from _oracles import q_mean_loop


def test_return_te_examples():
    r = np.array([0.01, -0.02, 0.005])
    assert r_te(r, r) == 0.0
    assert r_te([0.01, -0.01], [0.0, 0.0], q=2) == pytest.approx(0.01, rel=1e-15)
    assert r_te([0.02, 0.0], [0.0, 0.0], q=1) == pytest.approx(0.01, rel=1e-15)


def test_value_te_examples():
    idx = np.array([100.0, 101.0, 99.0])
    assert v_te(7.0 * idx, idx, 7.0) == 0.0
    assert v_te([105.0], [100.0], 1.0) == pytest.approx(5.0)
    assert v_te([103.0, 104.0, 100.0], [100.0] * 3, 1.0) == pytest.approx(math.sqrt(25 / 3), rel=1e-15)


def test_errors_on_bad_input():
    with pytest.raises(DataError):
        r_te([], [])
    with pytest.raises(DataError):
        r_te([0.1], [0.1, 0.2])
    with pytest.raises(ConfigError):
        v_te([1.0], [1.0], 0.0)
    with pytest.raises(ConfigError):
        ErrorSpec(q=0.0)
    with pytest.raises(ConfigError):
        ErrorSpec(beta=-1.0)


def test_reward_scaling():
    assert ErrorSpec().beta == 1000.0
    assert ErrorSpec(kind="value").beta == 0.001
    v = np.array([1.0, 1.0024])
    i = np.array([1.0, 1.0])
    assert reward(ErrorSpec(), v, i) == pytest.approx(-2.4, rel=1e-9)
    assert reward(ErrorSpec(kind=ErrorKind.VALUE), [0.0, 108.0], [0.0, 100.0], 1.0) == pytest.approx(-0.008)
    assert reward(ErrorSpec(), i, i) == 0.0


def test_value_error_skips_span_start():
    spec = ErrorSpec(kind="value")
    # the start deviation (50) is excluded
    assert tracking_error(spec, [150.0, 100.0, 100.0], [100.0] * 3, 1.0) == 0.0


def test_negative_part_ignores_outperformance():
    assert r_te([0.02, -0.01], [0.0, 0.0], q=1, penalty=Penalty.NEGATIVE_PART) == pytest.approx(0.005)


def _traj(flows, rates, costs=None, shares=None, values=None, idx=None):
    n = len(flows)
    values = np.full(n + 1, 100.0) if values is None else np.asarray(values, float)
    idx = np.full(n + 1, 10.0) if idx is None else np.asarray(idx, float)
    return Trajectory(
        dates=[f"d{k}" for k in range(n + 1)],
        values_before=values,
        index_levels=idx,
        flows=np.asarray(flows, float),
        costs=np.zeros(n) if costs is None else np.asarray(costs, float),
        traded_shares=np.zeros(n) if shares is None else np.asarray(shares, float),
        rates=np.asarray(rates, float),
        N0=10.0,
        v0=100.0,
    )


def test_backtest_metric_examples():
    m = backtest_metrics(_traj([0.0, 0.0, 0.0], [0.01, 0.02, 0.03]))
    assert m["CF"] == 0.0 and m["CF-adj"] == 0.0 and m["TC"] == 0.0
    assert m["R-TE"] == 0.0 and m["V-TE"] == 0.0
    single = _traj([0.0, 0.0, 5.0], [0.01, 0.02, 0.03])
    assert backtest_metrics(single)["CF-adj"] == pytest.approx(5.0 * 1.03, rel=1e-15)


def test_backtest_metric_totals():
    t = _traj([1.0, -2.0], [0.1, 0.0], costs=[0.5, 0.25], shares=[3.0, 4.0])
    m = backtest_metrics(t)
    assert m["CF"] == -1.0
    # 1.0 grows over both days (1.1 * 1.0), -2.0 over the last only
    assert m["CF-adj"] == pytest.approx(1.1 - 2.0)
    assert m["TC"] == 0.75 and m["TC/V0"] == 0.0075
    assert m["Vol"] == 7.0
    assert m["CF/V0"] == -0.01


def test_trajectory_frame_pads_flow_columns(tmp_path):
    t = _traj([1.0, 2.0], [0.0, 0.0])
    df = t.to_frame()
    assert len(df) == 3
    assert math.isnan(df["cash_flow"].iloc[-1])
    t.write_csv(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().startswith("date,value_before,index")


devs = st.lists(st.floats(-1.0, 1.0, allow_nan=False), min_size=1, max_size=40)


@settings(max_examples=200, deadline=None)
@given(d=devs, q=st.floats(0.5, 4.0))
def test_q_mean_matches_loop(d, q):
    got = r_te(np.array(d), np.zeros(len(d)), q)
    assert got >= 0.0
    assert got == pytest.approx(q_mean_loop(d, q), rel=1e-12, abs=1e-300)


@settings(max_examples=200, deadline=None)
@given(d=devs, q=st.floats(0.5, 4.0), c=st.floats(0.01, 100.0))
def test_homogeneity_and_negative_part_bound(d, q, c):
    assume(max(abs(x) for x in d) > 1e-6)
    d = np.array(d)
    z = np.zeros_like(d)
    base = r_te(d, z, q)
    assert r_te(c * d, z, q) == pytest.approx(c * base, rel=1e-9)
    assert r_te(d, z, q, Penalty.NEGATIVE_PART) <= base * (1 + 1e-12)
    assert base > 0


@settings(max_examples=100, deadline=None)
@given(flows=st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30))
def test_zero_rates_leave_flows_unadjusted(flows):
    assert interest_adjusted(flows, np.zeros(len(flows))) == pytest.approx(sum(flows), abs=1e-6)
