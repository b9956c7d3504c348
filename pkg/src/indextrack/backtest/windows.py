"""Rolling yearly train/test windows."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DataError
from ..market import MarketPanel


@dataclass(frozen=True)
class Window:
    """One train/test cycle in panel row indices (inclusive ends).

    Training covers rows ``train_start..train_end`` and testing
    ``test_start..test_end`` with ``train_end == test_start``: the test
    starts at the last close seen in training.
    """

    train_start: int
    train_end: int
    test_start: int
    test_end: int
    dates: tuple[str, str, str, str]
    universe: tuple[str, ...]

    @property
    def label(self) -> str:
        return self.dates[2][:4]

    def to_dict(self) -> dict:
        return {
            "train_start": self.dates[0],
            "train_end": self.dates[1],
            "test_start": self.dates[2],
            "test_end": self.dates[3],
            "universe": list(self.universe),
        }


@dataclass(frozen=True)
class WindowPlan:
    windows: tuple[Window, ...]

    def __len__(self) -> int:
        return len(self.windows)

    def __iter__(self):
        return iter(self.windows)

    def __getitem__(self, i: int) -> Window:
        return self.windows[i]


def year_starts(dates) -> list[int]:
    """Row of the panel's first day plus the first trading day of each later year."""
    years = [d[:4] for d in dates]
    return [0] + [i for i in range(1, len(years)) if years[i] != years[i - 1]]


def complete_tickers(panel: MarketPanel, start: int, stop: int) -> tuple[str, ...]:
    block = panel.prices[start:stop + 1]
    ok = np.isfinite(block).all(axis=0) & (np.nan_to_num(block, nan=0.0) > 0).all(axis=0)
    return tuple(t for t, keep in zip(panel.tickers, ok) if keep)


def plan_windows(
    panel: MarketPanel,
    test_years: int = 1,
    min_train_years: int = 1,
    max_train_years: int | None = None,
) -> WindowPlan:
    """Consecutive test windows of ``test_years`` calendar years.

    The first test window opens once ``min_train_years`` years of data are
    available. Training runs from the earliest data, or at most
    ``max_train_years`` years back, up to the test start. The last test
    window ends at the panel's final day even if that cuts it short.
    """
    if test_years < 1 or min_train_years < 1:
        raise ConfigError("test_years and min_train_years must be >= 1")
    if max_train_years is not None and max_train_years < min_train_years:
        raise ConfigError("max_train_years must be at least min_train_years")
    last = panel.n_days - 1
    starts = year_starts(panel.dates)
    out = []
    j = min_train_years
    while j < len(starts) and starts[j] < last:
        test_start = starts[j]
        test_end = starts[j + test_years] if j + test_years < len(starts) else last
        first = 0 if max_train_years is None else max(0, j - max_train_years)
        train_start = starts[first]
        universe = complete_tickers(panel, train_start, test_start)
        if not universe:
            raise DataError(f"no stock has complete data over {panel.dates[train_start]}..{panel.dates[test_start]}")
        dates = (panel.dates[train_start], panel.dates[test_start], panel.dates[test_start], panel.dates[test_end])
        out.append(Window(train_start, test_start, test_start, test_end, dates, universe))
        j += test_years
    if not out:
        raise DataError(
            f"panel spans {len(starts)} calendar year(s); need more than {min_train_years} for one window"
        )
    return WindowPlan(tuple(out))
