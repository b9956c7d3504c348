"""Transaction-cost specifications as functions of the post-rebalance value.

With target weights ``w`` fixed, the post-rebalance holding of stock ``i`` is
``w_i * V`` so every cost model below is a function of the single unknown ``V``.
Three variants are supported:

* ``BROKER_MIN_MAX``: per-share fee with a per-order minimum, capped at a
  fraction of the traded value (the Interactive Brokers fixed schedule).
* ``BROKER_MIN_MAX_REG_FEES``: the above plus SEC (sale value) and FINRA
  (shares sold) regulatory fees.
* ``FIXED_PLUS_PROPORTIONAL``: a fixed fee per stock plus a proportional fee.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, NumericalError

#: Interactive Brokers Pro-Fixed schedule: USD/share, fraction of trade value, USD minimum.
IB_PER_SHARE = 0.005
IB_MAX_RATE = 0.005
IB_MIN_FEE = 1.0
SEC_RATE = 0.0000229
FINRA_PER_SHARE = 0.00013


class CostVariant(str, enum.Enum):
    BROKER_MIN_MAX = "broker_min_max"
    BROKER_MIN_MAX_REG_FEES = "broker_min_max_reg_fees"
    FIXED_PLUS_PROPORTIONAL = "fixed_plus_proportional"


def _coef(x, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1 or not np.isfinite(arr).all() or (arr < 0).any():
        raise ConfigError(f"cost coefficient {name} must be finite and non-negative")
    return arr


@dataclass(frozen=True, eq=False)
class CostModel:
    """Coefficients are length-1 (broadcast to every stock) or length-N arrays."""

    variant: CostVariant
    xi1: np.ndarray = field(default_factory=lambda: np.zeros(1))
    xi2: np.ndarray = field(default_factory=lambda: np.zeros(1))
    xi3: np.ndarray = field(default_factory=lambda: np.zeros(1))
    xi4: np.ndarray = field(default_factory=lambda: np.zeros(1))
    nu1: float = 0.0
    nu2: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", CostVariant(self.variant))
        for name in ("xi1", "xi2", "xi3", "xi4"):
            object.__setattr__(self, name, _coef(getattr(self, name), name))
        if self.nu1 < 0 or self.nu2 < 0:
            raise ConfigError("regulatory fee rates must be non-negative")
        if self.variant is not CostVariant.FIXED_PLUS_PROPORTIONAL and (self.xi2 <= 0).any():
            raise ConfigError("xi2 must be > 0 for the broker min/max schedule")

    @classmethod
    def broker(cls, xi1=IB_PER_SHARE, xi2=IB_MAX_RATE, xi3=IB_MIN_FEE) -> "CostModel":
        return cls(CostVariant.BROKER_MIN_MAX, xi1=xi1, xi2=xi2, xi3=xi3)

    @classmethod
    def broker_with_fees(
        cls, xi1=IB_PER_SHARE, xi2=IB_MAX_RATE, xi3=IB_MIN_FEE, nu1=SEC_RATE, nu2=FINRA_PER_SHARE
    ) -> "CostModel":
        return cls(CostVariant.BROKER_MIN_MAX_REG_FEES, xi1=xi1, xi2=xi2, xi3=xi3, nu1=nu1, nu2=nu2)

    @classmethod
    def fixed_plus_proportional(cls, xi3=0.0, xi4=0.0) -> "CostModel":
        return cls(CostVariant.FIXED_PLUS_PROPORTIONAL, xi3=xi3, xi4=xi4)

    @classmethod
    def zero(cls) -> "CostModel":
        return cls.fixed_plus_proportional(0.0, 0.0)

    def expanded(self, n: int) -> "CostModel":
        """Copy with every coefficient vector broadcast to length ``n``."""
        def ex(a: np.ndarray) -> np.ndarray:
            if a.size not in (1, n):
                raise ConfigError(f"coefficient vector of length {a.size} for {n} stocks")
            return np.broadcast_to(a, (n,)).copy()

        return CostModel(self.variant, ex(self.xi1), ex(self.xi2), ex(self.xi3), ex(self.xi4),
                         self.nu1, self.nu2)

    def to_dict(self) -> dict:
        def out(a: np.ndarray):
            return float(a[0]) if a.size == 1 else a.tolist()

        return {
            "variant": self.variant.value,
            "xi1": out(self.xi1),
            "xi2": out(self.xi2),
            "xi3": out(self.xi3),
            "xi4": out(self.xi4),
            "nu1": self.nu1,
            "nu2": self.nu2,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CostModel":
        try:
            variant = CostVariant(d.get("variant", CostVariant.BROKER_MIN_MAX.value))
        except ValueError:
            raise ConfigError(f"unknown cost variant {d.get('variant')!r}") from None
        defaults = {
            CostVariant.BROKER_MIN_MAX: cls.broker(),
            CostVariant.BROKER_MIN_MAX_REG_FEES: cls.broker_with_fees(),
            CostVariant.FIXED_PLUS_PROPORTIONAL: cls.zero(),
        }[variant]
        kw = {k: d.get(k, getattr(defaults, k)) for k in ("xi1", "xi2", "xi3", "xi4", "nu1", "nu2")}
        return cls(variant, **kw)


@dataclass(frozen=True, eq=False)
class RebalanceContext:
    """Everything observed right before a rebalance.

    ``v_before`` is the total pre-rebalance value including cash, so the cash
    position is ``v_before - v_before_i.sum()``.
    """

    prices: np.ndarray
    v_before_i: np.ndarray
    v_before: float
    w_target: np.ndarray
    h: float = 0.0

    def __post_init__(self) -> None:
        for name in ("prices", "v_before_i", "w_target"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = self.prices.shape
        if self.v_before_i.shape != n or self.w_target.shape != n or len(n) != 1:
            raise ConfigError("prices, v_before_i and w_target must be vectors of equal length")
        if not (self.prices > 0).all():
            raise ConfigError("prices must be positive")
        if not np.isfinite(self.w_target).all():
            raise ConfigError("target weights must be finite")

    @classmethod
    def from_holdings(cls, prices, shares, cash: float, w_target, h: float = 0.0) -> "RebalanceContext":
        prices = np.asarray(prices, dtype=float)
        v_i = prices * np.asarray(shares, dtype=float)
        return cls(prices, v_i, float(v_i.sum() + cash), w_target, h)

    @property
    def cash(self) -> float:
        return self.v_before - float(self.v_before_i.sum())

    @property
    def w_before(self) -> np.ndarray:
        return self.v_before_i / self.v_before


def cost_function(model: CostModel, ctx: RebalanceContext) -> Callable[[float], float]:
    """Return ``c(V)`` with all per-stock constants precomputed."""
    p = ctx.prices
    vb = ctx.v_before_i
    w = ctx.w_target
    n = p.size
    if model.variant is CostVariant.FIXED_PLUS_PROPORTIONAL:
        fixed = float(np.broadcast_to(model.xi3, (n,)).sum())
        xi4 = np.broadcast_to(model.xi4, (n,))

        def c(v: float) -> float:
            return fixed + float(xi4 @ np.abs(w * v - vb))

        return c

    per_share = model.xi1 / p
    xi2 = np.broadcast_to(model.xi2, (n,))
    xi3 = np.broadcast_to(model.xi3, (n,))
    if model.variant is CostVariant.BROKER_MIN_MAX:

        def c(v: float) -> float:
            trade = np.abs(vb - w * v)
            return float(np.minimum(np.maximum(per_share * trade, xi3), xi2 * trade).sum())

        return c

    sale_per_value = model.nu1 + model.nu2 / p

    def c(v: float) -> float:
        delta = w * v - vb
        trade = np.abs(delta)
        broker = np.minimum(np.maximum(per_share * trade, xi3), xi2 * trade).sum()
        # SEC and FINRA fees apply to the sold side only
        regulatory = sale_per_value @ np.maximum(-delta, 0.0)
        return float(broker + regulatory)

    return c


def cost_of(model: CostModel, ctx: RebalanceContext, v_after: float) -> float:
    """Exact transaction cost of rebalancing to ``w_target`` at post-trade value ``v_after``."""
    if not math.isfinite(v_after):
        raise NumericalError(f"post-rebalance value must be finite, got {v_after}")
    return cost_function(model, ctx)(float(v_after))


def _per_stock_slope(model: CostModel, prices: np.ndarray) -> np.ndarray:
    n = prices.size
    if model.variant is CostVariant.FIXED_PLUS_PROPORTIONAL:
        return np.broadcast_to(model.xi4, (n,)).astype(float)
    slope = model.xi1 / prices + model.xi2
    if model.variant is CostVariant.BROKER_MIN_MAX_REG_FEES:
        slope = slope + model.nu1 + model.nu2 / prices
    return np.broadcast_to(slope, (n,)).astype(float)


def contraction_coeff(model: CostModel, ctx: RebalanceContext) -> float:
    """Lipschitz constant of ``c(V)``; the fixed-point map contracts when it is below 1."""
    return float(_per_stock_slope(model, ctx.prices) @ np.abs(ctx.w_target))


def before_weight_sum(model: CostModel, ctx: RebalanceContext, w_before: np.ndarray) -> float:
    """Left-hand side of the condition on pre-rebalance weights.

    It must stay below one for the solution to be positive; the admissible
    withdrawal cap is ``(0, 1 - before_weight_sum)``.
    """
    n = ctx.prices.size
    w_abs = np.abs(np.asarray(w_before, dtype=float))
    if model.variant is CostVariant.FIXED_PLUS_PROPORTIONAL:
        fixed = float(np.broadcast_to(model.xi3, (n,)).sum())
        return float(np.broadcast_to(model.xi4, (n,)) @ w_abs) + fixed / ctx.v_before
    slope = np.broadcast_to(model.xi2, (n,)).astype(float)
    if model.variant is CostVariant.BROKER_MIN_MAX_REG_FEES:
        slope = slope + model.nu1 + model.nu2 / ctx.prices
    return float(slope @ w_abs)


@dataclass(frozen=True)
class Condition:
    name: str
    passed: bool
    value: float
    bound: float
    margin: float


@dataclass(frozen=True)
class ConditionReport:
    conditions: tuple[Condition, ...]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.conditions)

    def failed(self) -> list[Condition]:
        return [c for c in self.conditions if not c.passed]

    def __getitem__(self, name: str) -> Condition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def describe(self) -> str:
        return "; ".join(
            f"{c.name}: {'ok' if c.passed else 'FAILED'} (value={c.value:.6g}, bound={c.bound:.6g}, "
            f"margin={c.margin:.6g})"
            for c in self.conditions
        )


def check_conditions(
    model: CostModel,
    ctx: RebalanceContext,
    w_before: np.ndarray | None = None,
    xi_bound: float | None = None,
) -> ConditionReport:
    """Evaluate the sufficient conditions for a unique positive rebalance solution.

    Margins are positive when a condition holds. The cash condition is only
    checked when a withdrawal cap ``xi_bound`` is supplied.
    """
    if w_before is None:
        w_before = ctx.w_before if ctx.v_before > 0 else np.zeros_like(ctx.prices)
    conds = [Condition("v_before_positive", ctx.v_before > 0, ctx.v_before, 0.0, ctx.v_before)]
    if ctx.v_before > 0:
        s_before = before_weight_sum(model, ctx, w_before)
    else:
        s_before = math.inf
    conds.append(Condition("before_weights", s_before < 1.0, s_before, 1.0, 1.0 - s_before))
    kappa = contraction_coeff(model, ctx)
    conds.append(Condition("contraction", kappa < 1.0, kappa, 1.0, 1.0 - kappa))
    if xi_bound is not None:
        cap = 1.0 - s_before
        conds.append(Condition("xi_admissible", 0.0 < xi_bound < cap, xi_bound, cap, cap - xi_bound))
        floor = -xi_bound * ctx.v_before
        conds.append(Condition("cash_bound", ctx.h >= floor, ctx.h, floor, ctx.h - floor))
    return ConditionReport(tuple(conds))
