"""Run configuration: a YAML tree with dotted-key overrides."""
from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from ..costs import CostModel
from ..errors import ConfigError
from ..market import SynthSpec, TimeGrid
from ..metrics import ErrorSpec
from ..rl.env import EnvConfig
from ..rl.hyper import PpoHyper
from .evaluate import DEFAULT_THRESHOLD



class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads ``1e7``-style numbers as floats (YAML 1.2 style)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:\d+\.?\d*|\.\d+)[eE][-+]?\d+$"),
    list("-+0123456789."),
)


def load_yaml(text: str):
    return yaml.load(text, Loader=_Loader)


DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "output_dir": "runs/default",
    "data": {"panel": None, "allow_missing": False},
    "synth": {"n_stocks": 5, "days": 760, "seed": 7, "index_weights": None, "with_vix": True},
    "error": {"kind": "return", "q": 2.0, "penalty": "absolute", "beta": None},
    "costs": {"variant": "broker_min_max"},
    "fund": {"v0": 2e10, "xi_cap": 0.2, "use_cash": None, "tol": 1e-15},
    "grid": {"M": 63, "n_s": 4, "n": 4, "n_b": 1},
    "ppo": {},
    "windows": {"test_years": 1, "min_train_years": 1, "max_train_years": None},
    "threshold": DEFAULT_THRESHOLD,
    "standardize": True,
    "warm_start": False,
}


def deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def apply_override(tree: dict, assignment: str) -> None:
    """Apply ``a.b.c=value`` in place; ``value`` is parsed as YAML."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    try:
        value = load_yaml(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse override value {raw!r}: {exc}") from None
    node = tree
    parts = key.strip().split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = value


@dataclass
class RunConfig:
    """Validated run settings plus the raw tree they came from."""

    tree: dict
    seed: int
    output_dir: Path
    panel_path: Path | None
    allow_missing: bool
    synth: dict
    error: ErrorSpec
    costs: CostModel
    fund: EnvConfig
    grid: TimeGrid
    ppo: PpoHyper
    windows: dict
    threshold: float
    standardize: bool
    warm_start: bool

    @classmethod
    def from_tree(cls, tree: dict, base_dir: Path | None = None) -> "RunConfig":
        tree = deep_merge(DEFAULTS, tree or {})
        unknown = set(tree) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        try:
            error = ErrorSpec(**tree["error"])
            grid = TimeGrid(**tree["grid"])
            fund = EnvConfig(**tree["fund"])
            ppo = PpoHyper.for_kind(error.kind, **tree["ppo"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None
        costs = CostModel.from_dict(tree["costs"])
        panel_path = tree["data"].get("panel")
        if panel_path is not None:
            panel_path = Path(panel_path)
            if not panel_path.is_absolute() and base_dir is not None:
                panel_path = base_dir / panel_path
            if not panel_path.exists():
                raise ConfigError(f"panel file {panel_path} does not exist")
        threshold = float(tree["threshold"])
        if not 0 <= threshold:
            raise ConfigError("weight threshold must be non-negative")
        return cls(
            tree=tree,
            seed=int(tree["seed"]),
            output_dir=Path(tree["output_dir"]),
            panel_path=panel_path,
            allow_missing=bool(tree["data"].get("allow_missing", False)),
            synth=tree["synth"],
            error=error,
            costs=costs,
            fund=fund,
            grid=grid,
            ppo=ppo,
            windows=tree["windows"],
            threshold=threshold,
            standardize=bool(tree["standardize"]),
            warm_start=bool(tree["warm_start"]),
        )

    @classmethod
    def load(cls, path: str | Path | None, overrides: list[str] | None = None) -> "RunConfig":
        tree: dict = {}
        base_dir = None
        if path is not None:
            path = Path(path)
            try:
                tree = load_yaml(path.read_text(encoding="utf-8")) or {}
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
            except yaml.YAMLError as exc:
                raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
            if not isinstance(tree, dict):
                raise ConfigError(f"config {path} must be a mapping")
            base_dir = path.parent
        for o in overrides or []:
            apply_override(tree, o)
        return cls.from_tree(tree, base_dir)

    def synth_spec(self) -> SynthSpec:
        w = self.synth.get("index_weights")
        return SynthSpec(
            index_weights=None if w is None else tuple(float(x) for x in w),
            with_vix=bool(self.synth.get("with_vix", True)),
        )

    def resolved(self) -> dict:
        """The effective settings, with every default filled in."""
        tree = copy.deepcopy(self.tree)
        tree["ppo"] = self.ppo.to_dict()
        tree["costs"] = self.costs.to_dict()
        if self.panel_path is not None:
            tree["data"]["panel"] = str(self.panel_path)
        return tree

    def digest(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()
