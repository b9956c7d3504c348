"""Tracking errors, RL rewards and out-of-sample backtest metrics."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError

RETURN_BETA = 1000.0
VALUE_BETA = 0.001


class ErrorKind(str, enum.Enum):
    RETURN = "return"
    VALUE = "value"


class Penalty(str, enum.Enum):
    ABSOLUTE = "absolute"
    NEGATIVE_PART = "negative_part"  # index enhancement: only under-performance counts


@dataclass(frozen=True)
class ErrorSpec:
    kind: ErrorKind = ErrorKind.RETURN
    q: float = 2.0
    penalty: Penalty = Penalty.ABSOLUTE
    beta: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ErrorKind(self.kind))
        object.__setattr__(self, "penalty", Penalty(self.penalty))
        if self.beta is None:
            object.__setattr__(
                self, "beta", RETURN_BETA if self.kind is ErrorKind.RETURN else VALUE_BETA
            )
        if not self.q > 0:
            raise ConfigError("tracking-error exponent q must be positive")
        if not self.beta > 0:
            raise ConfigError("reward scale beta must be positive")


def _q_mean(dev: np.ndarray, q: float, penalty: Penalty) -> float:
    if dev.size == 0:
        raise DataError("tracking error needs at least one observation")
    mag = np.abs(dev) if penalty is Penalty.ABSOLUTE else np.maximum(-dev, 0.0)
    return float(np.mean(mag**q) ** (1.0 / q))


def r_te(r_tp, r_idx, q: float = 2.0, penalty: Penalty = Penalty.ABSOLUTE) -> float:
    """Return-based tracking error: q-mean of daily return differences."""
    r_tp = np.asarray(r_tp, dtype=float)
    r_idx = np.asarray(r_idx, dtype=float)
    if r_tp.shape != r_idx.shape:
        raise DataError("portfolio and index return series differ in length")
    return _q_mean(r_tp - r_idx, q, Penalty(penalty))


def v_te(v_before, idx, N0: float, q: float = 2.0, penalty: Penalty = Penalty.ABSOLUTE) -> float:
    """Value-based tracking error in index points: fund value per share vs index level."""
    v_before = np.asarray(v_before, dtype=float)
    idx = np.asarray(idx, dtype=float)
    if v_before.shape != idx.shape:
        raise DataError("portfolio value and index series differ in length")
    if N0 <= 0:
        raise ConfigError("N0 must be positive")
    return _q_mean(v_before / N0 - idx, q, Penalty(penalty))


def simple_returns(levels) -> np.ndarray:
    levels = np.asarray(levels, dtype=float)
    return levels[1:] / levels[:-1] - 1.0


def tracking_error(spec: ErrorSpec, values_before, index_levels, N0: float) -> float:
    """Tracking error over a span whose first entry is the span start.

    ``values_before`` and ``index_levels`` both run from the span start to its
    end inclusive; the error averages over the days after the start.
    """
    values_before = np.asarray(values_before, dtype=float)
    index_levels = np.asarray(index_levels, dtype=float)
    if spec.kind is ErrorKind.RETURN:
        return r_te(simple_returns(values_before), simple_returns(index_levels), spec.q, spec.penalty)
    return v_te(values_before[1:], index_levels[1:], N0, spec.q, spec.penalty)


def reward(spec: ErrorSpec, values_before, index_levels, N0: float = 1.0) -> float:
    return -spec.beta * tracking_error(spec, values_before, index_levels, N0)


@dataclass
class Trajectory:
    """Day-by-day record of an evaluation run.

    Level series (``dates``, ``values_before``, ``index_levels``) have one more
    entry than the per-day flow series, which refer to the rebalance on each
    day except the last.
    """

    dates: list[str]
    values_before: np.ndarray
    index_levels: np.ndarray
    flows: np.ndarray
    costs: np.ndarray
    traded_shares: np.ndarray
    rates: np.ndarray
    N0: float
    v0: float
    weights: list[np.ndarray] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        def pad(x: np.ndarray) -> np.ndarray:
            return np.append(x, np.nan)

        return pd.DataFrame(
            {
                "date": self.dates,
                "value_before": self.values_before,
                "index": self.index_levels,
                "fund_per_share": self.values_before / self.N0,
                "cash_flow": pad(self.flows),
                "cost": pad(self.costs),
                "traded_shares": pad(self.traded_shares),
                "rate": pad(self.rates),
            }
        )

    def write_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.12e")


def interest_adjusted(flows, rates) -> float:
    """Sum of flows each grown to the end of the span at the daily simple rates."""
    flows = np.asarray(flows, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if flows.shape != rates.shape:
        raise DataError("flows and rates differ in length")
    growth = np.cumprod((1.0 + rates)[::-1])[::-1]
    return float(growth @ flows)


def backtest_metrics(traj: Trajectory, q: float = 2.0) -> dict[str, float]:
    r_tp = simple_returns(traj.values_before)
    r_i = simple_returns(traj.index_levels)
    cf = float(traj.flows.sum())
    cf_adj = interest_adjusted(traj.flows, traj.rates)
    tc = float(traj.costs.sum())
    return {
        "R-TE": r_te(r_tp, r_i, q),
        "V-TE": v_te(traj.values_before[1:], traj.index_levels[1:], traj.N0, q),
        "CF": cf,
        "CF-adj": cf_adj,
        "CF/V0": cf / traj.v0,
        "CF-adj/V0": cf_adj / traj.v0,
        "Vol": float(traj.traded_shares.sum()),
        "TC": tc,
        "TC/V0": tc / traj.v0,
    }
