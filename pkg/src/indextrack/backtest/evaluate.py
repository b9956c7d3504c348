"""Out-of-sample evaluation of a policy over a test window."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..costs import CostModel
from ..errors import ConfigError, DataError, NumericalError
from ..market import FeatureScaler, MarketPanel, TimeGrid, daily_features
from ..metrics import ErrorSpec, Trajectory, backtest_metrics
from ..rebalance import CashRule, PortfolioState, simulate_period
from ..rl.env import EnvConfig
from ..rl.policy import Decision, Policy, action_to_decision

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 1e-9

Actor = Callable[[np.ndarray], Decision]


def apply_threshold(weights: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Zero weights at or below ``threshold`` and rescale the rest to sum to one."""
    w = np.where(np.asarray(weights, dtype=float) <= threshold, 0.0, weights)
    total = w.sum()
    if not total > 0:
        raise ConfigError(
            f"weight threshold {threshold} removes every stock (largest weight {np.max(weights):.6g})"
        )
    return w / total


def deterministic_actor(policy: Policy, n_stocks: int, b_f: float = 0.5) -> Actor:
    return lambda s: action_to_decision(policy.deterministic(s), n_stocks, policy.b, b_f)


def stochastic_actor(policy: Policy, n_stocks: int, rng: np.random.Generator, b_f: float = 0.5) -> Actor:
    return lambda s: action_to_decision(policy.sample(s, rng)[0], n_stocks, policy.b, b_f)


def constant_actor(weights, f: float = 0.0) -> Actor:
    w = np.asarray(weights, dtype=float)
    return lambda s: Decision(w, f)


@dataclass(frozen=True)
class EvalResult:
    metrics: dict[str, float]
    trajectory: Trajectory


def evaluate(
    actor: Actor,
    panel: MarketPanel,
    start: int,
    end: int,
    grid: TimeGrid,
    spec: ErrorSpec,
    model: CostModel,
    env_cfg: EnvConfig | None = None,
    scaler: FeatureScaler | None = None,
    threshold: float = DEFAULT_THRESHOLD,
    force_f: float | None = None,
    b_f: float = 0.5,
) -> EvalResult:
    """Run the fund from an all-cash start on row ``start`` to row ``end``.

    At each period start the actor sees the state ending at that day only.
    ``force_f`` overrides the cash fraction chosen by the actor.
    """
    env_cfg = env_cfg or EnvConfig()
    if not grid.lookback_days <= start < end < panel.n_days:
        raise DataError(f"evaluation span {start}..{end} needs {grid.lookback_days} prior days")
    block = panel.prices[start:end + 1]
    if not np.isfinite(block).all():
        raise DataError(f"missing prices between {panel.dates[start]} and {panel.dates[end]}")
    feats = daily_features(panel.slice_days(0, end + 1))
    if scaler is not None:
        feats = scaler.transform(feats)
    use_cash = env_cfg.cash_enabled(spec)
    model = model.expanded(panel.n_stocks)
    N0 = env_cfg.v0 / float(panel.index_level[start])
    portfolio = PortfolioState.all_cash(panel.n_stocks, env_cfg.v0)

    values = [env_cfg.v0]
    flows, costs, traded, weights = [], [], [], []
    day = start
    while day < end:
        stop = min(day + grid.M, end)
        state = feats[day - grid.lookback_days + 1:day + 1].ravel()
        decision = actor(state)
        w = apply_threshold(decision.weights, threshold)
        logger.debug("%s weights %s -> %s", panel.dates[day], decision.weights, w)
        rule = None
        if use_cash:
            f = decision.f if force_f is None else float(force_f)
            rule = CashRule(f, N0, env_cfg.xi_cap, b_f)
        try:
            result = simulate_period(
                portfolio, panel.prices[day:stop + 1], w, model,
                index_level=panel.index_level[day:stop + 1], rule=rule,
                stride=grid.n_b, tol=env_cfg.tol,
            )
        except NumericalError as exc:
            logger.error("rebalance failed in period starting %s: %s", panel.dates[day], exc)
            raise
        values.extend(result.values_before[1:])
        flows.extend(result.flows)
        costs.extend(result.costs)
        traded.extend(result.traded_shares)
        weights.append(w)
        portfolio = result.state
        day = stop

    traj = Trajectory(
        dates=list(panel.dates[start:end + 1]),
        values_before=np.array(values),
        index_levels=np.array(panel.index_level[start:end + 1]),
        flows=np.array(flows),
        costs=np.array(costs),
        traded_shares=np.array(traded),
        rates=np.array(panel.tbill_rate[start:end]),
        N0=N0,
        v0=env_cfg.v0,
        weights=weights,
    )
    return EvalResult(backtest_metrics(traj, spec.q), traj)
