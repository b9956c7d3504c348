"""Daily market panels, time grids, RL state tensors and a synthetic generator.

A panel holds, for each trading day, the index level, per-stock close prices
and volumes, the volatility index (optional) and the daily simple T-bill rate.
CSV layout::

    date,index,vix,tbill,p_AAA,vol_AAA,p_BBB,vol_BBB,...
"""
from __future__ import annotations

import datetime as _dt
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PanelSchema:
    """Column mapping for panel CSV files. Set ``vix=None`` if there is no VIX column."""

    date: str = "date"
    index: str = "index"
    vix: str | None = "vix"
    tbill: str = "tbill"
    price_prefix: str = "p_"
    volume_prefix: str = "vol_"


@dataclass(frozen=True, eq=False)
class MarketPanel:
    dates: tuple[str, ...]
    index_level: np.ndarray
    prices: np.ndarray
    volumes: np.ndarray
    tbill_rate: np.ndarray
    tickers: tuple[str, ...]
    vix: np.ndarray | None = None
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n_days = len(self.dates)
        n_stocks = len(self.tickers)
        shapes = {
            "index": (self.index_level.shape, (n_days,)),
            "prices": (self.prices.shape, (n_days, n_stocks)),
            "volumes": (self.volumes.shape, (n_days, n_stocks)),
            "tbill": (self.tbill_rate.shape, (n_days,)),
        }
        if self.vix is not None:
            shapes["vix"] = (self.vix.shape, (n_days,))
        for name, (got, want) in shapes.items():
            if got != want:
                raise DataError(f"{name} has shape {got}, expected {want}")
        for arr in (self.index_level, self.prices, self.volumes, self.tbill_rate, self.vix):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n_days(self) -> int:
        return len(self.dates)

    @property
    def n_stocks(self) -> int:
        return len(self.tickers)

    @property
    def has_vix(self) -> bool:
        return self.vix is not None

    @property
    def feature_width(self) -> int:
        return 2 * self.n_stocks + (3 if self.has_vix else 2)

    def is_complete(self) -> bool:
        return bool(np.isfinite(self.prices).all())

    def slice_days(self, start: int, stop: int) -> "MarketPanel":
        """Rows ``start`` (inclusive) to ``stop`` (exclusive)."""
        sl = slice(start, stop)
        return MarketPanel(
            dates=self.dates[sl],
            index_level=self.index_level[sl].copy(),
            prices=self.prices[sl].copy(),
            volumes=self.volumes[sl].copy(),
            tbill_rate=self.tbill_rate[sl].copy(),
            tickers=self.tickers,
            vix=None if self.vix is None else self.vix[sl].copy(),
            meta=dict(self.meta),
        )

    def select_stocks(self, tickers: Sequence[str]) -> "MarketPanel":
        pos = {t: i for i, t in enumerate(self.tickers)}
        try:
            cols = [pos[t] for t in tickers]
        except KeyError as exc:
            raise DataError(f"unknown ticker {exc.args[0]!r}") from None
        return MarketPanel(
            dates=self.dates,
            index_level=self.index_level.copy(),
            prices=self.prices[:, cols].copy(),
            volumes=self.volumes[:, cols].copy(),
            tbill_rate=self.tbill_rate.copy(),
            tickers=tuple(tickers),
            vix=None if self.vix is None else self.vix.copy(),
            meta=dict(self.meta),
        )

    def day_index(self, date: str) -> int:
        try:
            return self.dates.index(date)
        except ValueError:
            raise DataError(f"date {date} not in panel") from None


@dataclass(frozen=True)
class TimeGrid:
    """Period structure: ``M`` trading days per period, ``n_s`` look-back
    periods in the state, episodes of ``n`` periods, rebalancing every ``n_b`` days."""

    M: int
    n_s: int
    n: int
    n_b: int = 1

    def __post_init__(self) -> None:
        for name in ("M", "n_s", "n", "n_b"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"TimeGrid.{name} must be >= 1")
        if self.n_b > self.M:
            raise ConfigError("rebalancing stride n_b cannot exceed M")
        if self.M % self.n_b != 0:
            raise ConfigError("n_b must divide M")

    @property
    def lookback_days(self) -> int:
        return self.n_s * self.M

    def check_panel(self, panel: MarketPanel) -> None:
        if self.lookback_days > panel.n_days:
            raise DataError(
                f"panel has {panel.n_days} days but the state needs {self.lookback_days}"
            )


def _validate_iso(dates: Sequence[str]) -> tuple[str, ...]:
    out = []
    for row, d in enumerate(dates):
        s = str(d).strip()
        try:
            _dt.date.fromisoformat(s)
        except ValueError:
            raise DataError(f"row {row}: date {s!r} is not ISO-8601 (YYYY-MM-DD)") from None
        out.append(s)
    for row in range(1, len(out)):
        if out[row] <= out[row - 1]:
            raise DataError(
                f"row {row}: dates must be strictly increasing ({out[row - 1]} then {out[row]})"
            )
    return tuple(out)


def load_panel(
    path: str | Path,
    schema: PanelSchema | None = None,
    allow_missing: bool = False,
) -> MarketPanel:
    """Read and validate a panel CSV.

    Missing prices are rejected unless ``allow_missing`` is set, in which case
    they are kept as NaN so a rolling-window universe rule can drop the stock.
    """
    schema = schema or PanelSchema()
    path = Path(path)
    if not path.exists():
        raise DataError(f"panel file {path} does not exist")
    try:
        df = pd.read_csv(path, dtype={schema.date: str}, encoding="utf-8")
    except Exception as exc:  # pandas raises a zoo of parser errors
        raise DataError(f"cannot parse {path}: {exc}") from exc

    required = [schema.date, schema.index, schema.tbill]
    if schema.vix is not None:
        required.append(schema.vix)
    missing_cols = [c for c in required if c not in df.columns]
    if missing_cols:
        raise DataError(f"{path}: missing columns {missing_cols}")

    tickers = [c[len(schema.price_prefix):] for c in df.columns if c.startswith(schema.price_prefix)]
    if not tickers:
        raise DataError(f"{path}: no price columns with prefix {schema.price_prefix!r}")
    for t in tickers:
        if schema.volume_prefix + t not in df.columns:
            raise DataError(f"{path}: price column for {t!r} has no matching volume column")

    dates = _validate_iso(df[schema.date].tolist())

    def numeric(col: str) -> np.ndarray:
        try:
            return pd.to_numeric(df[col], errors="raise").to_numpy(dtype=float)
        except (ValueError, TypeError) as exc:
            raise DataError(f"{path}: column {col!r} is not numeric: {exc}") from None

    index_level = numeric(schema.index)
    prices = np.column_stack([numeric(schema.price_prefix + t) for t in tickers])
    volumes = np.column_stack([numeric(schema.volume_prefix + t) for t in tickers])
    tbill = numeric(schema.tbill)
    vix = numeric(schema.vix) if schema.vix is not None else None

    def first_bad(mask: np.ndarray) -> int:
        return int(np.flatnonzero(mask)[0])

    bad = ~np.isfinite(index_level) | (index_level <= 0)
    if bad.any():
        r = first_bad(bad)
        raise DataError(f"row {r} ({dates[r]}): index level must be positive, got {index_level[r]}")

    nan_px = np.isnan(prices)
    if nan_px.any() and not allow_missing:
        r, c = np.argwhere(nan_px)[0]
        raise DataError(f"row {r} ({dates[r]}): missing price for {tickers[c]!r}")
    nonpos = ~nan_px & ~(prices > 0)
    if nonpos.any():
        r, c = np.argwhere(nonpos)[0]
        raise DataError(
            f"row {r} ({dates[r]}): non-positive price {prices[r, c]} for column "
            f"{schema.price_prefix + tickers[c]!r}"
        )
    bad_vol = ~np.isnan(volumes) & (volumes < 0)
    if bad_vol.any():
        r, c = np.argwhere(bad_vol)[0]
        raise DataError(f"row {r} ({dates[r]}): negative volume for {tickers[c]!r}")
    volumes = np.where(np.isnan(prices), np.nan, volumes)
    if np.isnan(volumes[~np.isnan(prices)]).any():
        r, c = np.argwhere(np.isnan(volumes) & ~np.isnan(prices))[0]
        raise DataError(f"row {r} ({dates[r]}): missing volume for {tickers[c]!r}")
    if not np.isfinite(tbill).all():
        raise DataError(f"row {first_bad(~np.isfinite(tbill))}: missing tbill rate")
    if vix is not None and (~np.isfinite(vix) | (vix < 0)).any():
        raise DataError(f"row {first_bad(~np.isfinite(vix) | (vix < 0))}: vix must be non-negative")

    return MarketPanel(
        dates=dates,
        index_level=index_level,
        prices=prices,
        volumes=volumes,
        tbill_rate=tbill,
        tickers=tuple(tickers),
        vix=vix,
    )


def write_panel(panel: MarketPanel, path: str | Path) -> None:
    cols: dict[str, object] = {"date": list(panel.dates), "index": panel.index_level}
    if panel.vix is not None:
        cols["vix"] = panel.vix
    cols["tbill"] = panel.tbill_rate
    for j, t in enumerate(panel.tickers):
        cols[f"p_{t}"] = panel.prices[:, j]
        cols[f"vol_{t}"] = panel.volumes[:, j]
    pd.DataFrame(cols).to_csv(path, index=False, float_format="%.17g", encoding="utf-8")


def daily_features(panel: MarketPanel) -> np.ndarray:
    """Per-day feature rows ``[r_index, vix, tbill, r_1..r_N, vol_1..vol_N]``.

    Row 0 has NaN returns since there is no prior close.
    """
    n_days = panel.n_days
    r_idx = np.full(n_days, np.nan)
    r_idx[1:] = panel.index_level[1:] / panel.index_level[:-1] - 1.0
    r_stk = np.full(panel.prices.shape, np.nan)
    r_stk[1:] = panel.prices[1:] / panel.prices[:-1] - 1.0
    parts = [r_idx[:, None]]
    if panel.vix is not None:
        parts.append(panel.vix[:, None])
    parts.extend([panel.tbill_rate[:, None], r_stk, panel.volumes])
    return np.hstack(parts)


@dataclass(frozen=True)
class FeatureScaler:
    """Per-column z-score fitted on a training span of daily features."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, panel: MarketPanel, start: int, stop: int) -> "FeatureScaler":
        rows = daily_features(panel)[max(start, 1):stop]
        if len(rows) < 2:
            raise DataError("need at least two days to fit the feature scaler")
        mean = rows.mean(axis=0)
        std = rows.std(axis=0)
        std = np.where(std > 1e-12, std, 1.0)
        return cls(mean=mean, std=std)

    @classmethod
    def identity(cls, width: int) -> "FeatureScaler":
        return cls(mean=np.zeros(width), std=np.ones(width))

    def transform(self, rows: np.ndarray) -> np.ndarray:
        return (rows - self.mean) / self.std


def build_state(
    panel: MarketPanel,
    grid: TimeGrid,
    day: int,
    scaler: FeatureScaler | None = None,
    features: np.ndarray | None = None,
) -> np.ndarray:
    """State matrix for a decision on panel row ``day``.

    Covers the ``n_s * M`` trading days ending at ``day`` inclusive, one row per
    day. ``features`` may pass a precomputed :func:`daily_features` array.
    """
    rows = grid.lookback_days
    first = day - rows + 1
    if first < 1:
        raise DataError(
            f"day {day}: state needs {rows} days of returns, i.e. rows {first - 1}..{day}"
        )
    if day >= panel.n_days:
        raise DataError(f"day {day} beyond panel end ({panel.n_days} days)")
    feats = daily_features(panel) if features is None else features
    state = feats[first:day + 1]
    if scaler is not None:
        state = scaler.transform(state)
    return np.array(state, dtype=float)


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the synthetic panel generator.

    The index is a daily-rebalanced constant-weight portfolio of the stocks
    with weights ``index_weights`` (equal weights when None), so a tracker
    holding those weights reproduces it exactly in the absence of costs.
    """

    index_weights: tuple[float, ...] | None = None
    drift: float = 0.0003
    market_vol: float = 0.01
    idio_vol: float = 0.012
    beta_range: tuple[float, float] = (0.6, 1.4)
    price_range: tuple[float, float] = (20.0, 200.0)
    index_start: float = 1000.0
    volume_mean: float = 1.0e6
    tbill_annual: float = 0.02
    start_date: str = "2000-01-03"
    with_vix: bool = True


def synth_panel(seed: int, N: int, days: int, spec: SynthSpec | None = None) -> MarketPanel:
    if N < 1:
        raise ConfigError("N must be >= 1")
    if days < 2:
        raise ConfigError("days must be >= 2")
    spec = spec or SynthSpec()
    if spec.index_weights is None:
        weights = np.full(N, 1.0 / N)
    else:
        weights = np.asarray(spec.index_weights, dtype=float)
        if weights.shape != (N,) or (weights < 0).any() or abs(weights.sum() - 1.0) > 1e-12:
            raise ConfigError("index_weights must be N non-negative numbers summing to 1")

    rng = np.random.default_rng(seed)
    betas = rng.uniform(*spec.beta_range, size=N)
    p0 = rng.uniform(*spec.price_range, size=N)
    z_mkt = rng.standard_normal(days - 1)
    z_idio = rng.standard_normal((days - 1, N))
    log_ret = (
        spec.drift
        - 0.5 * (betas**2 * spec.market_vol**2 + spec.idio_vol**2)
        + betas * spec.market_vol * z_mkt[:, None]
        + spec.idio_vol * z_idio
    )
    prices = np.empty((days, N))
    prices[0] = p0
    prices[1:] = p0 * np.exp(np.cumsum(log_ret, axis=0))

    simple = prices[1:] / prices[:-1] - 1.0
    index_level = np.empty(days)
    index_level[0] = spec.index_start
    index_level[1:] = spec.index_start * np.cumprod(1.0 + simple @ weights)

    ar = np.zeros(days)
    shocks = rng.standard_normal(days)
    for d in range(1, days):
        ar[d] = 0.95 * ar[d - 1] + 0.1 * shocks[d]
    vix = 100.0 * np.sqrt(252.0) * spec.market_vol * np.exp(ar)
    tbill = np.maximum(spec.tbill_annual + 0.002 * ar, 0.0) / 252.0

    abs_move = np.vstack([np.zeros((1, N)), np.abs(simple)])
    volumes = spec.volume_mean * (1.0 + 20.0 * abs_move) * rng.lognormal(0.0, 0.3, size=(days, N))

    start = np.datetime64(spec.start_date, "D")
    bdays = np.busday_offset(start, np.arange(days), roll="forward")
    dates = tuple(str(d) for d in bdays)
    width = len(str(N))
    tickers = tuple(f"S{j + 1:0{width}d}" for j in range(N))

    return MarketPanel(
        dates=dates,
        index_level=index_level,
        prices=prices,
        volumes=volumes,
        tbill_rate=tbill,
        tickers=tickers,
        vix=vix if spec.with_vix else None,
        meta={"index_weights": tuple(float(w) for w in weights), "seed": seed},
    )
