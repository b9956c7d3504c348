"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. ``INDEXTRACK_LOG_LEVEL`` sets log verbosity (default WARNING).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .costs import CostModel, RebalanceContext
from .errors import ConfigError, DataError, IndexTrackError
from .market import synth_panel, write_panel
from .rebalance import DEFAULT_MAX_ITER, DEFAULT_TOL, solve_fixed_point
from .rl.hyper import PpoHyper
from .backtest.config import RunConfig
from .backtest.pipeline import (
    evaluate_on, load_data, load_trained, run_backtest, train_on, write_manifest,
)
from .backtest.report import read_report_json, write_report

logger = logging.getLogger("indextrack")

LOG_ENV = "INDEXTRACK_LOG_LEVEL"


def _setup_logging() -> None:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", "-c", help="YAML run configuration")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. --set grid.M=21 (repeatable)")
    p.add_argument("--seed", type=int, help="shortcut for --set seed=N")
    p.add_argument("--out", help="output directory (default: output_dir from the config)")


def _add_ppo_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("PPO settings (values parsed as YAML, e.g. --policy-hidden [16,16])")
    for f in dataclasses.fields(PpoHyper):
        g.add_argument("--" + f.name.replace("_", "-"), dest="ppo_" + f.name, metavar="V")


def _load_config(args) -> RunConfig:
    overrides = list(args.set)
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    for f in dataclasses.fields(PpoHyper):
        v = getattr(args, "ppo_" + f.name, None)
        if v is not None:
            overrides.append(f"ppo.{f.name}={v}")
    return RunConfig.load(args.config, overrides)


def _out_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out) if args.out else cfg.output_dir


def _row(panel, date: str | None, default: int) -> int:
    return default if date is None else panel.day_index(date)


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    s = cfg.synth
    panel = synth_panel(int(s["seed"]), int(s["n_stocks"]), int(s["days"]), cfg.synth_spec())
    out = Path(args.panel_out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_panel(panel, out)
    print(f"wrote {panel.n_days} days x {panel.n_stocks} stocks to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    panel = load_data(cfg)
    end = _row(panel, args.train_end, panel.n_days - 1)
    tickers = [t for t, ok in zip(panel.tickers, np.isfinite(panel.prices[:end + 1]).all(axis=0)) if ok]
    if not tickers:
        raise DataError("no stock has complete data over the training span")
    panel = panel.select_stocks(tickers).slice_days(0, end + 1)
    out = _out_dir(args, cfg)
    write_manifest(out, cfg, "train", {"train_end": panel.dates[end]})
    result = train_on(cfg, panel, end, out)
    last = result.log[-1]
    print(f"trained {len(result.log)} epochs; last mean reward {last['mean_reward']:.6g}; "
          f"checkpoint {out / 'checkpoint.npz'}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    panel = load_data(cfg)
    policy, _, scaler, meta = load_trained(Path(args.checkpoint))
    panel = panel.select_stocks(meta["tickers"])
    start = _row(panel, args.start or meta.get("train_end"), cfg.grid.lookback_days)
    end = _row(panel, args.end, panel.n_days - 1)
    out = _out_dir(args, cfg)
    write_manifest(out, cfg, "evaluate", {"checkpoint": str(args.checkpoint)})
    res = evaluate_on(cfg, policy, scaler, panel, start, end, out, force_f=args.force_f)
    print(json.dumps(res.metrics, indent=2, sort_keys=True))
    return 0


def cmd_backtest(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    plan, _ = run_backtest(cfg, out)
    print(f"{len(plan)} window(s); report at {out / 'report.csv'}")
    return 0


def cmd_rebalance(args) -> int:
    try:
        inst = json.loads(Path(args.instance).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read {args.instance}: {exc}") from None
    except ValueError as exc:
        raise DataError(f"{args.instance} is not valid JSON: {exc}") from None
    try:
        model = CostModel.from_dict(inst.get("cost_model", {}))
        ctx = RebalanceContext.from_holdings(
            np.asarray(inst["prices"], dtype=float),
            np.asarray(inst["shares"], dtype=float),
            float(inst.get("cash", 0.0)),
            np.asarray(inst["w_target"], dtype=float),
            float(inst.get("h", 0.0)),
        )
    except KeyError as exc:
        raise ConfigError(f"rebalance instance is missing {exc.args[0]!r}") from None
    out = solve_fixed_point(
        model, ctx,
        tol=float(inst.get("tol", DEFAULT_TOL)),
        max_iter=int(inst.get("max_iter", DEFAULT_MAX_ITER)),
        xi_bound=inst.get("xi"),
        override=bool(args.override),
    )
    text = json.dumps(out.to_dict(), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_report(args) -> int:
    labels, rows = [], []
    for path in args.results:
        path = Path(path)
        if path.is_dir():
            path = path / "metrics.json"
        if path.name == "report.json":
            l, r = read_report_json(path)
            labels.extend(l)
            rows.extend(r)
            continue
        try:
            m = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot read metrics {path}: {exc}") from None
        labels.append(str(m.get("year", path.parent.name)))
        rows.append(m)
    csv_path, _ = write_report(labels, rows, Path(args.out))
    sys.stdout.write(csv_path.read_text(encoding="utf-8"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="indextrack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic market panel")
    _add_config_args(p)
    p.add_argument("panel_out", help="CSV file to write")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a policy on the panel")
    _add_config_args(p)
    _add_ppo_args(p)
    p.add_argument("--train-end", help="last training date (default: panel end)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint out of sample")
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--start", help="first test date (default: checkpoint's training end)")
    p.add_argument("--end", help="last test date (default: panel end)")
    p.add_argument("--force-f", type=float, help="fix the cash fraction instead of using the policy")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("backtest", help="rolling-window train and evaluate, then report")
    _add_config_args(p)
    _add_ppo_args(p)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("rebalance", help="solve one rebalance from a JSON instance")
    p.add_argument("instance", help="JSON with prices, shares, cash, w_target, h, cost_model")
    p.add_argument("--override", action="store_true", help="skip the contraction condition checks")
    p.add_argument("--out", help="write the outcome here instead of stdout")
    p.set_defaults(func=cmd_rebalance)

    p = sub.add_parser("report", help="aggregate per-window metrics into a table")
    p.add_argument("results", nargs="+", help="metrics.json files, window directories or report.json")
    p.add_argument("--out", default=".", help="directory for report.csv and report.json")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except IndexTrackError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
