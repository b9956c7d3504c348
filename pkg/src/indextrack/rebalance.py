"""Exact-cost rebalancing by Banach fixed-point iteration and period simulation."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .costs import CostModel, RebalanceContext, check_conditions, cost_function
from .errors import ConditionError, ConfigError, DivergenceError, NumericalError

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-15
DEFAULT_MAX_ITER = 1000
DEFAULT_XI_CAP = 0.2


@dataclass
class PortfolioState:
    shares: np.ndarray
    cash: float = 0.0

    @classmethod
    def all_cash(cls, n_stocks: int, cash: float) -> "PortfolioState":
        return cls(np.zeros(n_stocks), float(cash))

    def value(self, prices: np.ndarray) -> float:
        return float(self.shares @ prices + self.cash)

    def weights(self, prices: np.ndarray) -> np.ndarray:
        return self.shares * prices / self.value(prices)

    def copy(self) -> "PortfolioState":
        return PortfolioState(self.shares.copy(), self.cash)


@dataclass(frozen=True)
class RebalanceOutcome:
    v_after: float
    shares_after: np.ndarray
    cost: float
    h: float
    iterations: int
    residual: float

    def to_dict(self) -> dict:
        return {
            "v_after": self.v_after,
            "shares_after": self.shares_after.tolist(),
            "cost": self.cost,
            "h": self.h,
            "iterations": self.iterations,
            "residual": self.residual,
        }


@dataclass(frozen=True)
class CashRule:
    """Cash injection/withdrawal rule for one period.

    ``f`` scales the gap between ``N0`` index units and the fund value;
    withdrawals are capped at ``xi_cap`` of the pre-rebalance value.
    """

    f: float
    N0: float
    xi_cap: float = DEFAULT_XI_CAP
    b_f: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.f <= self.b_f * (1 + 1e-12):
            raise ConfigError(f"cash fraction f={self.f} outside [0, {self.b_f}]")
        if not 0.0 < self.xi_cap < 1.0:
            raise ConfigError(f"withdrawal cap xi={self.xi_cap} must lie in (0, 1)")
        if self.N0 <= 0:
            raise ConfigError("fund share count N0 must be positive")


def cash_flow(rule: CashRule, index_level: float, v_before: float) -> float:
    """Signed cash injected at a rebalance (negative means withdrawal)."""
    if v_before <= 0:
        raise NumericalError(f"pre-rebalance value must be positive, got {v_before}")
    return max((index_level * rule.N0 - v_before) * rule.f, -rule.xi_cap * v_before)


def weights_before(w_prev: np.ndarray, p_prev: np.ndarray, p_now: np.ndarray) -> np.ndarray:
    """Weights right before a rebalance given the weights right after the previous one."""
    grown = np.asarray(w_prev, dtype=float) * (np.asarray(p_now, dtype=float) / np.asarray(p_prev, dtype=float))
    total = grown.sum()
    if total == 0 or not math.isfinite(total):
        raise NumericalError("portfolio value ratio is zero or non-finite; weights undefined")
    return grown / total


def solve_fixed_point(
    model: CostModel,
    ctx: RebalanceContext,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    xi_bound: float | None = None,
    override: bool = False,
) -> RebalanceOutcome:
    """Solve ``V = V_before + h - c(V)`` for the post-rebalance value.

    Starts from ``V = 0`` (or returns at once when trading to ``w_target``
    at ``V_before + h`` costs nothing) and iterates until successive iterates differ by
    less than ``tol``. Iterates that stop moving within two ulps also count
    as converged, since an absolute ``tol`` of 1e-15 is finer than double
    resolution at portfolio scale.
    """
    if tol <= 0:
        raise ConfigError("tolerance must be positive")
    target = ctx.v_before + ctx.h
    if not target > 0:
        raise NumericalError(
            f"pre-rebalance value plus cash flow is {target}; refusing to rebalance"
        )
    if not override:
        report = check_conditions(model, ctx, xi_bound=xi_bound)
        if not report.ok:
            raise ConditionError("rebalance conditions violated: " + report.describe())

    cost = cost_function(model, ctx)
    if cost(target) == 0.0:
        # nothing to trade: the target value is already the (unique) fixed point
        v_old = v_new = target
        iterations = 1
    else:
        v_old = 0.0
        v_new = target - cost(v_old)
        iterations = 1
    while True:
        diff = abs(v_new - v_old)
        if diff < tol or diff <= 2.0 * np.spacing(abs(v_new)):
            break
        if iterations >= max_iter:
            raise DivergenceError(
                f"fixed-point iteration did not converge in {max_iter} steps (last step {diff:.3e})"
            )
        v_old = v_new
        v_new = target - cost(v_old)
        iterations += 1
        if not math.isfinite(v_new):
            raise DivergenceError("fixed-point iterate became non-finite")

    if v_new <= 0:
        raise NumericalError(f"rebalance produced non-positive value {v_new}")
    c_final = cost(v_new)
    return RebalanceOutcome(
        v_after=v_new,
        shares_after=ctx.w_target * v_new / ctx.prices,
        cost=c_final,
        h=ctx.h,
        iterations=iterations,
        residual=abs(target - c_final - v_new),
    )


@dataclass(frozen=True)
class PeriodResult:
    """Simulation of one period of ``m`` trading days.

    ``values_before`` has ``m + 1`` entries: the value right before the
    rebalance on each day ``0..m-1`` plus day ``m`` (the next period's start).
    The per-day arrays have ``m`` entries and are zero on non-rebalance days.
    """

    state: PortfolioState
    values_before: np.ndarray
    costs: np.ndarray
    flows: np.ndarray
    traded_shares: np.ndarray
    iterations: np.ndarray


def simulate_period(
    state: PortfolioState,
    prices: np.ndarray,
    w_target: np.ndarray,
    model: CostModel,
    index_level: np.ndarray | None = None,
    rule: CashRule | None = None,
    stride: int = 1,
    tol: float = DEFAULT_TOL,
    override: bool = False,
) -> PeriodResult:
    """Hold weights ``w_target`` over the days in ``prices`` (shape ``(m + 1, N)``).

    Rebalances on days ``0, stride, 2*stride, ...`` below ``m``; shares are
    held constant in between. The cash rule, if given, needs ``index_level``.
    """
    prices = np.asarray(prices, dtype=float)
    w_target = np.asarray(w_target, dtype=float)
    m = prices.shape[0] - 1
    if m < 1:
        raise ConfigError("a period needs at least two price rows")
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    if rule is not None and index_level is None:
        raise ConfigError("cash rule needs index levels")

    shares = state.shares.astype(float).copy()
    cash = float(state.cash)
    values = np.empty(m + 1)
    costs = np.zeros(m)
    flows = np.zeros(m)
    traded = np.zeros(m)
    iters = np.zeros(m, dtype=int)
    xi_bound = rule.xi_cap if rule is not None else None

    for k in range(m):
        p = prices[k]
        v_i = shares * p
        v_before = float(v_i.sum() + cash)
        values[k] = v_before
        if k % stride:
            continue
        h = cash_flow(rule, float(index_level[k]), v_before) if rule is not None else 0.0
        ctx = RebalanceContext(p, v_i, v_before, w_target, h)
        try:
            out = solve_fixed_point(model, ctx, tol=tol, xi_bound=xi_bound, override=override)
        except NumericalError as exc:
            raise type(exc)(f"day {k}: {exc}") from exc
        traded[k] = float(np.abs(out.shares_after - shares).sum())
        shares = out.shares_after
        cash = 0.0
        costs[k] = out.cost
        flows[k] = h
        iters[k] = out.iterations
    values[m] = float(shares @ prices[m] + cash)
    return PeriodResult(PortfolioState(shares, cash), values, costs, flows, traded, iters)
