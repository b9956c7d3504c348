"""Training environment: one step is one period of ``M`` trading days."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..costs import CostModel
from ..errors import ConfigError, DataError, NumericalError
from ..market import FeatureScaler, MarketPanel, TimeGrid, daily_features
from ..metrics import ErrorKind, ErrorSpec, reward
from ..rebalance import DEFAULT_TOL, DEFAULT_XI_CAP, CashRule, PeriodResult, PortfolioState, simulate_period
from .gae import Transition
from .hyper import PpoHyper
from .nets import Mlp
from .policy import Policy, action_to_decision

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnvConfig:
    """Fund settings shared by training and evaluation.

    ``use_cash`` adds a trailing action component that drives the cash
    rule; None turns it on exactly for value tracking.
    """

    v0: float = 2e10
    xi_cap: float = DEFAULT_XI_CAP
    use_cash: bool | None = None
    tol: float = DEFAULT_TOL

    def __post_init__(self) -> None:
        if not self.v0 > 0:
            raise ConfigError("initial fund value must be positive")
        if not 0 < self.xi_cap < 1:
            raise ConfigError("withdrawal cap xi must lie in (0, 1)")

    def cash_enabled(self, spec: ErrorSpec) -> bool:
        return spec.kind is ErrorKind.VALUE if self.use_cash is None else bool(self.use_cash)


def default_T0(n_days: int) -> int:
    """Split point of the start-time distribution: ``ceil(3 (D - 1) / 4)`` days."""
    return int(math.ceil(3 * (n_days - 1) / 4))


def sample_start(hyper: PpoHyper, n_days: int, rng: np.random.Generator) -> int:
    """Draw an episode start as a day offset in ``0..n_days-1``.

    With probability ``zeta`` the start is uniform below ``T0``, otherwise
    uniform on ``T0..n_days-1``. Both the offset and ``T0`` are counted in
    trading days, i.e. on the ``1/M`` grid scaled by ``M``.
    """
    if n_days < 1:
        raise ConfigError("training span has no decision days")
    T0 = default_T0(n_days) if hyper.T0 is None else int(hyper.T0)
    if not 0 < T0 < n_days:
        return int(rng.integers(0, n_days))
    if rng.random() < hyper.zeta:
        return int(rng.integers(0, T0))
    return int(rng.integers(T0, n_days))


class TrackingEnv:
    """Episodes over the training part of a panel.

    Panel rows ``0..lookback-1`` feed the first state only; decision days run
    from ``lookback`` (offset 0) up to but excluding ``end_day``, the last
    row of training data.
    """

    def __init__(
        self,
        panel: MarketPanel,
        grid: TimeGrid,
        spec: ErrorSpec,
        model: CostModel,
        cfg: EnvConfig | None = None,
        end_day: int | None = None,
        scaler: FeatureScaler | None = None,
        b: float = 1.0,
        b_f: float = 0.5,
    ):
        self.panel = panel
        self.grid = grid
        self.spec = spec
        self.model = model.expanded(panel.n_stocks)
        self.cfg = cfg or EnvConfig()
        self.b = b
        self.b_f = b_f
        self.offset = grid.lookback_days
        self.end_day = panel.n_days - 1 if end_day is None else int(end_day)
        if not self.offset < self.end_day < panel.n_days:
            raise DataError(
                f"training span needs rows {self.offset}..{self.end_day} inside a {panel.n_days}-day panel"
            )
        if not panel.is_complete():
            raise DataError("training panel has missing prices")
        feats = daily_features(panel)
        self.features = scaler.transform(feats) if scaler is not None else feats
        self.use_cash = self.cfg.cash_enabled(spec)

    @property
    def n_days(self) -> int:
        """Number of decision days in the training span."""
        return self.end_day - self.offset

    @property
    def state_dim(self) -> int:
        return self.grid.lookback_days * self.features.shape[1]

    @property
    def action_dim(self) -> int:
        return self.panel.n_stocks + int(self.use_cash)

    def state(self, day: int) -> np.ndarray:
        first = day - self.grid.lookback_days + 1
        if first < 1 or day >= self.panel.n_days:
            raise DataError(f"no complete state for panel row {day}")
        return self.features[first:day + 1].ravel()

    def episode_steps(self, t0: int) -> int:
        """``min(n - 1, n') + 1`` where ``n'`` is the last step starting before the end."""
        last = (self.n_days - 1 - t0) // self.grid.M
        return min(self.grid.n - 1, last) + 1

    def step(
        self,
        portfolio: PortfolioState,
        day: int,
        action: np.ndarray,
        N0: float,
        stop: int | None = None,
    ) -> tuple[PeriodResult, float, int]:
        """Apply ``action`` from panel row ``day`` to the end of its period.

        The period ends ``M`` days later or at ``stop`` if earlier. Returns the
        period result, the reward and the end row.
        """
        end = min(day + self.grid.M, self.end_day if stop is None else stop)
        decision = action_to_decision(action, self.panel.n_stocks, self.b, self.b_f)
        rule = CashRule(decision.f, N0, self.cfg.xi_cap, self.b_f) if self.use_cash else None
        idx = self.panel.index_level[day:end + 1]
        result = simulate_period(
            portfolio,
            self.panel.prices[day:end + 1],
            decision.weights,
            self.model,
            index_level=idx,
            rule=rule,
            stride=self.grid.n_b,
            tol=self.cfg.tol,
        )
        r = reward(self.spec, result.values_before, idx, N0)
        return result, r, end

    def rollout(self, policy: Policy, value_net: Mlp, t0: int, rng: np.random.Generator) -> list[Transition]:
        """Run one episode from day offset ``t0`` with a fresh all-cash fund."""
        if not 0 <= t0 < self.n_days:
            raise ConfigError(f"start offset {t0} outside 0..{self.n_days - 1}")
        day = self.offset + t0
        N0 = self.cfg.v0 / float(self.panel.index_level[day])
        portfolio = PortfolioState.all_cash(self.panel.n_stocks, self.cfg.v0)
        steps = self.episode_steps(t0)
        s = self.state(day)
        v = float(value_net(s)[0, 0])
        out: list[Transition] = []
        for k in range(steps):
            a, logp, sigma = policy.sample(s, rng)
            result, r, end = self.step(portfolio, day, a, N0)
            truncated = end - day < self.grid.M
            s_next = self.state(end)
            v_next = float(value_net(s_next)[0, 0])
            out.append(
                Transition(
                    state=s, action=a, reward=r, v_t=v, v_t1=v_next, logp=logp, std=sigma,
                    terminal=k == steps - 1, truncated_reward=r if truncated else None,
                )
            )
            portfolio, day, s, v = result.state, end, s_next, v_next
        return out


def run_episode(env: TrackingEnv, policy: Policy, value_net: Mlp, t0: int, rng: np.random.Generator):
    """Rollout that turns numerical failures into a logged skip (returns None)."""
    try:
        return env.rollout(policy, value_net, t0, rng)
    except NumericalError as exc:
        logger.warning("episode from offset %d skipped: %s", t0, exc)
        return None
