"""Checkpoints as ``.npz`` archives: weights, batch-norm stats and a JSON header."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError
from .nets import Mlp, MlpSpec
from .policy import Policy

FORMAT_VERSION = 1


def save_checkpoint(path: str | Path, policy: Policy, value_net: Mlp, meta: dict,
                    extra_arrays: dict[str, np.ndarray] | None = None) -> None:
    """Write networks plus ``meta`` (must be JSON-serializable) to ``path``."""
    header = {
        "format_version": FORMAT_VERSION,
        "b": policy.b,
        "sigma_floor": policy.sigma_floor,
        "sigma_ceiling": policy.sigma_ceiling,
        "mean_spec": policy.mean_net.spec.to_dict(),
        "std_spec": policy.std_net.spec.to_dict(),
        "value_spec": value_net.spec.to_dict(),
        "meta": meta,
    }
    arrays = {}
    arrays.update(policy.mean_net.state_dict("mean"))
    arrays.update(policy.std_net.state_dict("std"))
    arrays.update(value_net.state_dict("value"))
    for k, v in (extra_arrays or {}).items():
        arrays[f"extra/{k}"] = np.asarray(v)
    arrays["header"] = np.array(json.dumps(header, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def _spec(d: dict) -> MlpSpec:
    d = dict(d)
    d["hidden"] = tuple(d["hidden"])
    return MlpSpec(**d)


def load_checkpoint(path: str | Path) -> tuple[Policy, Mlp, dict, dict[str, np.ndarray]]:
    """Inverse of :func:`save_checkpoint`; returns ``(policy, value_net, meta, extras)``."""
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    with data:
        header = json.loads(str(data["header"]))
        if header.get("format_version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported checkpoint version {header.get('format_version')}")
        mean_net = Mlp(_spec(header["mean_spec"]))
        std_net = Mlp(_spec(header["std_spec"]))
        value_net = Mlp(_spec(header["value_spec"]))
        mean_net.load_state_dict(data, "mean")
        std_net.load_state_dict(data, "std")
        value_net.load_state_dict(data, "value")
        extras = {k[len("extra/"):]: np.array(data[k]) for k in data.files if k.startswith("extra/")}
    policy = Policy(mean_net, std_net, header["b"], header["sigma_floor"], header.get("sigma_ceiling"))
    return policy, value_net, header["meta"], extras
