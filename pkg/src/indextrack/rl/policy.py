"""Clipped diagonal-Gaussian policy and the maps from actions to decisions."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .nets import Mlp, MlpSpec

SIGMA_FLOOR = 1e-6
LOG_2PI = math.log(2.0 * math.pi)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


def action_to_weights(a) -> np.ndarray:
    """Softmax of the stock part of an action; long-only weights summing to 1."""
    a = np.asarray(a, dtype=float)
    e = np.exp(a - a.max())
    return e / e.sum()


def action_to_f(a_last: float, b: float = 1.0, b_f: float = 0.5) -> float:
    """Cash-rule fraction in ``(0, b_f]``, increasing in ``a_last``."""
    return float(b_f * sigmoid(a_last) / sigmoid(b))


def gaussian_logp(a: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Diagonal-Gaussian log-density, summed over the last axis."""
    z = (a - mu) / sigma
    return -0.5 * (z**2).sum(axis=-1) - np.log(sigma).sum(axis=-1) - 0.5 * LOG_2PI * a.shape[-1]


def gaussian_entropy(sigma: np.ndarray) -> np.ndarray:
    return (0.5 + 0.5 * LOG_2PI + np.log(sigma)).sum(axis=-1)


@dataclass
class Policy:
    """Mean and standard-deviation networks plus the action clip bound ``b``.

    Actions have ``N`` stock components, plus one trailing component driving
    the cash rule when ``with_cash`` is set. A mean network with a tanh output
    is read as ``mu = b * tanh(.)``, keeping the mean inside the clip box.
    """

    mean_net: Mlp
    std_net: Mlp
    b: float = 1.0
    sigma_floor: float = SIGMA_FLOOR
    sigma_ceiling: float | None = None

    def __post_init__(self) -> None:
        if self.mean_net.spec.output_dim != self.std_net.spec.output_dim:
            raise ConfigError("mean and std networks must have the same output size")
        if self.std_net.spec.output_activation != "exp":
            raise ConfigError("std network needs an exp output")
        if self.mean_net.spec.output_activation == "exp":
            raise ConfigError("mean network needs a linear or tanh output")
        if not self.b > 0:
            raise ConfigError("action clip bound b must be positive")
        if self.sigma_ceiling is not None and not self.sigma_ceiling > self.sigma_floor:
            raise ConfigError("sigma_ceiling must exceed sigma_floor")

    @classmethod
    def create(
        cls,
        input_dim: int,
        action_dim: int,
        hidden: tuple[int, ...],
        rng: np.random.Generator,
        batch_norm: bool = True,
        b: float = 1.0,
        init_log_std: float = 0.0,
        out_scale: float = 0.01,
        bn_momentum: float = 0.99,
        bounded_mean: bool = False,
    ) -> "Policy":
        mean_act = "tanh" if bounded_mean else "linear"
        mean_spec = MlpSpec(input_dim, hidden, action_dim, mean_act, batch_norm, bn_momentum)
        std_spec = MlpSpec(input_dim, hidden, action_dim, "exp", batch_norm, bn_momentum)
        mean_net = Mlp(mean_spec, rng, out_scale=out_scale)
        std_net = Mlp(std_spec, rng, out_scale=out_scale, out_bias=init_log_std)
        return cls(mean_net, std_net, b)

    @property
    def action_dim(self) -> int:
        return self.mean_net.spec.output_dim

    @property
    def input_dim(self) -> int:
        return self.mean_net.spec.input_dim

    @property
    def mean_scale(self) -> float:
        return self.b if self.mean_net.spec.output_activation == "tanh" else 1.0

    def distribution(self, states: np.ndarray, mode: str = "eval"):
        """Return ``(mu, sigma)`` for a batch of flattened states."""
        mu = self.mean_scale * self.mean_net(states, mode)
        return mu, self.bound_sigma(self.std_net(states, mode))

    def bound_sigma(self, raw: np.ndarray) -> np.ndarray:
        sigma = np.maximum(raw, self.sigma_floor)
        if self.sigma_ceiling is not None:
            sigma = np.minimum(sigma, self.sigma_ceiling)
        return sigma

    def sigma_active(self, raw: np.ndarray) -> np.ndarray:
        """Mask of entries where ``bound_sigma`` passes the raw value through."""
        ok = raw > self.sigma_floor
        if self.sigma_ceiling is not None:
            ok &= raw < self.sigma_ceiling
        return ok

    def sample(self, state: np.ndarray, rng: np.random.Generator):
        """Draw ``a = clip(mu + sigma * z, -b, b)``; returns ``(a, logp, sigma)``.

        The log-density is that of the unclipped Gaussian evaluated at the
        clipped action, the same convention used when recomputing ratios.
        """
        mu, sigma = self.distribution(state)
        mu, sigma = mu[0], sigma[0]
        z = rng.standard_normal(mu.shape)
        a = np.clip(mu + sigma * z, -self.b, self.b)
        logp = float(gaussian_logp(a, mu, sigma))
        return a, logp, sigma

    def deterministic(self, state: np.ndarray) -> np.ndarray:
        mu = self.mean_scale * self.mean_net(state)[0]
        return np.clip(mu, -self.b, self.b)

    def copy(self) -> "Policy":
        return Policy(self.mean_net.copy(), self.std_net.copy(), self.b, self.sigma_floor, self.sigma_ceiling)


@dataclass(frozen=True)
class Decision:
    weights: np.ndarray
    f: float


def action_to_decision(a: np.ndarray, n_stocks: int, b: float = 1.0, b_f: float = 0.5) -> Decision:
    """Split an action into target weights and, if present, the cash fraction."""
    a = np.asarray(a, dtype=float)
    if a.shape[0] not in (n_stocks, n_stocks + 1):
        raise ConfigError(f"action has {a.shape[0]} components for {n_stocks} stocks")
    f = action_to_f(a[n_stocks], b, b_f) if a.shape[0] == n_stocks + 1 else 0.0
    return Decision(action_to_weights(a[:n_stocks]), f)
