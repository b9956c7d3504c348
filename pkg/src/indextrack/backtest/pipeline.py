"""Train/evaluate cycles shared by the command line and the tests."""
from __future__ import annotations

import json
import logging
import platform
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .. import __version__
from ..market import FeatureScaler, MarketPanel, load_panel, synth_panel
from ..rl.checkpoint import load_checkpoint, save_checkpoint
from ..rl.train import TrainResult, train
from .config import RunConfig
from .evaluate import EvalResult, deterministic_actor, evaluate
from .report import write_report
from .windows import Window, WindowPlan, plan_windows

logger = logging.getLogger(__name__)


def load_data(cfg: RunConfig) -> MarketPanel:
    if cfg.panel_path is not None:
        return load_panel(cfg.panel_path, allow_missing=cfg.allow_missing)
    s = cfg.synth
    return synth_panel(int(s["seed"]), int(s["n_stocks"]), int(s["days"]), cfg.synth_spec())


def write_manifest(out_dir: Path, cfg: RunConfig, command: str, extra: dict | None = None) -> Path:
    """Record what produced a run directory: config digest, seed and versions."""
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.yaml").write_text(
        yaml.safe_dump(cfg.resolved(), sort_keys=True), encoding="utf-8"
    )
    manifest = {
        "command": command,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "versions": {
            "indextrack": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "pandas": pd.__version__,
            "pyyaml": yaml.__version__,
        },
    }
    manifest.update(extra or {})
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


@dataclass
class WindowData:
    """A window's stocks and days, re-indexed so row 0 is the training start."""

    panel: MarketPanel
    train_end: int
    test_start: int
    test_end: int


def window_data(panel: MarketPanel, window: Window) -> WindowData:
    sub = panel.select_stocks(window.universe).slice_days(window.train_start, window.test_end + 1)
    base = window.train_start
    return WindowData(sub, window.train_end - base, window.test_start - base, window.test_end - base)


def train_on(cfg: RunConfig, panel: MarketPanel, end_day: int, out_dir: Path | None = None,
             init=None) -> TrainResult:
    log_path = None if out_dir is None else out_dir / "train_log.csv"
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    result = train(panel, cfg.grid, cfg.error, cfg.ppo, cfg.costs, cfg.fund, seed=cfg.seed,
                   end_day=end_day, standardize=cfg.standardize, log_path=log_path, init=init)
    if out_dir is not None:
        save_trained(out_dir / "checkpoint.npz", result, cfg, panel, end_day)
    return result


def save_trained(path: Path, result: TrainResult, cfg: RunConfig, panel: MarketPanel, end_day: int) -> None:
    meta = {
        "tickers": list(panel.tickers),
        "train_end": panel.dates[end_day],
        "seed": cfg.seed,
        "config_sha256": cfg.digest(),
        "ppo": cfg.ppo.to_dict(),
        "rng_states": result.rng_states,
    }
    extras = {}
    if result.scaler is not None:
        extras = {"scaler_mean": result.scaler.mean, "scaler_std": result.scaler.std}
    save_checkpoint(path, result.policy, result.value_net, meta, extras)


def load_trained(path: Path):
    """Return ``(policy, value_net, scaler, meta)`` from a checkpoint file."""
    policy, value_net, meta, extras = load_checkpoint(path)
    scaler = None
    if "scaler_mean" in extras:
        scaler = FeatureScaler(extras["scaler_mean"], extras["scaler_std"])
    return policy, value_net, scaler, meta


def evaluate_on(cfg: RunConfig, policy, scaler, panel: MarketPanel, start: int, end: int,
                out_dir: Path | None = None, force_f: float | None = None) -> EvalResult:
    actor = deterministic_actor(policy, panel.n_stocks, cfg.ppo.b_f)
    res = evaluate(actor, panel, start, end, cfg.grid, cfg.error, cfg.costs, cfg.fund,
                   scaler=scaler, threshold=cfg.threshold, force_f=force_f, b_f=cfg.ppo.b_f)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        res.trajectory.write_csv(out_dir / "trajectory.csv")
        (out_dir / "metrics.json").write_text(
            json.dumps({"year": panel.dates[start][:4], **res.metrics}, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    return res


def run_backtest(cfg: RunConfig, out_dir: Path, panel: MarketPanel | None = None) -> tuple[WindowPlan, list[dict]]:
    """Plan windows, then train and evaluate each in turn; writes the report."""
    panel = load_data(cfg) if panel is None else panel
    plan = plan_windows(panel, **cfg.windows)
    write_manifest(out_dir, cfg, "backtest", {"windows": [w.to_dict() for w in plan]})
    labels, rows = [], []
    previous = None
    for w in plan:
        wd = window_data(panel, w)
        wdir = out_dir / f"window_{w.label}"
        logger.info("window %s: train %s..%s, test %s..%s, %d stocks",
                    w.label, *w.dates[:2], *w.dates[2:], len(w.universe))
        init = previous if cfg.warm_start else None
        if init is not None and init[0].input_dim != cfg.grid.lookback_days * wd.panel.feature_width:
            logger.info("window %s: universe changed size, training from scratch", w.label)
            init = None
        result = train_on(cfg, wd.panel, wd.train_end, wdir, init=init)
        res = evaluate_on(cfg, result.policy, result.scaler, wd.panel, wd.test_start, wd.test_end, wdir)
        labels.append(w.label)
        rows.append(res.metrics)
        previous = (result.policy, result.value_net)
    write_report(labels, rows, out_dir)
    return plan, rows
