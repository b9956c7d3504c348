"""Hyperparameters of the PPO training loop."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from ..errors import ConfigError
from ..metrics import ErrorKind


@dataclass(frozen=True)
class PpoHyper:
    """PPO settings. Defaults are the full-scale values; network sizes match
    the return-tracking problem (see :meth:`for_kind`).

    Episode length lives on :class:`~indextrack.market.TimeGrid` as ``n``.
    """

    gamma: float = 0.99
    lam: float = 0.95
    epsilon: float = 0.2
    e1: float = 0.5
    e2: float = 0.0
    lr: float = 1e-5
    lr_schedule: str = "constant"  # or "linear": anneal to zero over the epochs
    epochs: int = 200_000
    episodes: int = 50
    minibatch: int = 64
    workers: int = 8
    zeta: float = 0.25
    T0: int | None = None  # split point in trading days; None -> 3/4 of the training span
    b: float = 1.0
    b_f: float = 0.5
    policy_hidden: tuple[int, ...] = (128,) * 8
    value_hidden: tuple[int, ...] = (128,) * 6
    batch_norm: bool = True
    bn_momentum: float = 0.99
    bn_update_mode: str = "train"  # "eval": normalize with running stats during updates too
    init_log_std: float = 0.0
    out_scale: float = 0.01
    passes: int = 1
    normalize_advantages: bool = False
    processes: int = 1
    max_grad_norm: float | None = None
    sigma_floor: float = 1e-6
    sigma_ceiling: float | None = None
    bounded_mean: bool = False  # mu = b * tanh(.) instead of a linear mean head

    def __post_init__(self) -> None:
        object.__setattr__(self, "policy_hidden", tuple(int(h) for h in self.policy_hidden))
        object.__setattr__(self, "value_hidden", tuple(int(h) for h in self.value_hidden))
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")
        if not 0 < self.lam < 1:
            raise ConfigError("lam must lie in (0, 1)")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if not self.lr > 0:
            raise ConfigError("learning rate must be positive")
        if not 0 <= self.zeta <= 1:
            raise ConfigError("zeta must lie in [0, 1]")
        for name in ("epochs", "episodes", "minibatch", "workers", "passes", "processes"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.batch_norm and self.minibatch < 2:
            raise ConfigError("batch norm needs minibatches of at least 2 samples")
        if not self.b > 0 or not self.b_f > 0:
            raise ConfigError("action bound b and cash bound b_f must be positive")
        if self.lr_schedule not in ("constant", "linear"):
            raise ConfigError("lr_schedule must be 'constant' or 'linear'")
        if self.bn_update_mode not in ("train", "eval"):
            raise ConfigError("bn_update_mode must be 'train' or 'eval'")
        if self.max_grad_norm is not None and not self.max_grad_norm > 0:
            raise ConfigError("max_grad_norm must be positive")
        if not self.sigma_floor > 0:
            raise ConfigError("sigma_floor must be positive")
        if self.sigma_ceiling is not None and not self.sigma_ceiling > self.sigma_floor:
            raise ConfigError("sigma_ceiling must exceed sigma_floor")
        if self.T0 is not None and self.T0 < 0:
            raise ConfigError("T0 must be non-negative")

    @classmethod
    def for_kind(cls, kind: ErrorKind | str, **overrides) -> "PpoHyper":
        """Full-scale defaults for return or value tracking, with overrides."""
        if ErrorKind(kind) is ErrorKind.VALUE:
            base = dict(policy_hidden=(64,) * 4, value_hidden=(64,) * 2)
        else:
            base = {}
        base.update(overrides)
        return cls(**base)

    def replace(self, **changes) -> "PpoHyper":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["policy_hidden"] = list(self.policy_hidden)
        d["value_hidden"] = list(self.value_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PpoHyper":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown PPO settings: {sorted(unknown)}")
        return cls(**d)
