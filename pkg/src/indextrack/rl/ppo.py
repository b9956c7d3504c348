"""Clipped-surrogate PPO losses with analytic gradients."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .gae import Transition
from .nets import Mlp
from .policy import LOG_2PI, Policy

logger = logging.getLogger(__name__)


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    logp_old: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    @classmethod
    def from_transitions(cls, items: Sequence[Transition]) -> "Batch":
        return cls(
            states=np.stack([t.state for t in items]),
            actions=np.stack([t.action for t in items]),
            logp_old=np.array([t.logp for t in items]),
            advantages=np.array([t.advantage for t in items]),
            returns=np.array([t.ret for t in items]),
        )

    def __len__(self) -> int:
        return self.states.shape[0]

    def subset(self, idx: np.ndarray) -> "Batch":
        return Batch(self.states[idx], self.actions[idx], self.logp_old[idx],
                     self.advantages[idx], self.returns[idx])


@dataclass(frozen=True)
class Losses:
    clip: float
    value: float
    entropy: float
    total: float
    skipped: int = 0


@dataclass(frozen=True)
class Grads:
    mean: dict[str, np.ndarray]
    std: dict[str, np.ndarray]
    value: dict[str, np.ndarray]


def ppo_losses(
    policy: Policy,
    value_net: Mlp,
    batch: Batch,
    epsilon: float = 0.2,
    e1: float = 0.5,
    e2: float = 0.0,
    mode: str = "train",
    update_stats: bool = False,
    coefs: tuple[float, float, float] | None = None,
    with_grads: bool = True,
) -> tuple[Losses, Grads | None]:
    """Evaluate the PPO objective on ``batch`` and optionally its gradient.

    ``clip`` is the mean clipped surrogate (to be maximized), ``value`` the
    mean squared error against return targets and ``entropy`` the negative
    mean Gaussian entropy. ``total = -clip + e1*value + e2*entropy``.

    The returned gradient is that of ``c0*clip + c1*value + c2*entropy`` with
    ``coefs = (c0, c1, c2)``, defaulting to the total. Samples whose ratio is
    not finite are dropped from the clip term and counted in ``skipped``.
    """
    B = len(batch)
    mu, mean_cache = policy.mean_net.forward(batch.states, mode, update_stats)
    mu = policy.mean_scale * mu
    raw_sigma, std_cache = policy.std_net.forward(batch.states, mode, update_stats)
    v, value_cache = value_net.forward(batch.states, mode, update_stats)
    v = v[:, 0]
    sigma = policy.bound_sigma(raw_sigma)

    diff = batch.actions - mu
    z = diff / sigma
    logp = -0.5 * (z**2).sum(axis=1) - np.log(sigma).sum(axis=1) - 0.5 * LOG_2PI * mu.shape[1]
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = np.exp(logp - batch.logp_old)
        ratio[~np.isfinite(logp)] = np.nan
    ok = np.isfinite(ratio)
    skipped = int(B - ok.sum())
    if skipped:
        logger.debug("skipping %d samples with non-finite probability ratio", skipped)
    n_ok = max(int(ok.sum()), 1)
    adv = batch.advantages
    r = np.where(ok, ratio, 1.0)
    unclipped = r * adv
    clipped = np.clip(r, 1.0 - epsilon, 1.0 + epsilon) * adv
    surrogate = np.where(ok, np.minimum(unclipped, clipped), 0.0)
    clip_term = float(surrogate.sum() / n_ok)

    value_term = float(np.mean((v - batch.returns) ** 2))
    entropy_term = float(-np.mean((0.5 + 0.5 * LOG_2PI + np.log(sigma)).sum(axis=1)))
    total = -clip_term + e1 * value_term + e2 * entropy_term
    losses = Losses(clip_term, value_term, entropy_term, float(total), skipped)
    if not with_grads:
        return losses, None

    c0, c1, c2 = coefs if coefs is not None else (-1.0, e1, e2)
    with np.errstate(over="ignore", invalid="ignore"):
        # d clip / d logp: only where the unclipped branch is the minimum
        active = ok & (unclipped <= clipped)
        g_logp = c0 * np.where(active, r * adv, 0.0) / n_ok
        g_mu = g_logp[:, None] * diff / sigma**2
        g_sigma = g_logp[:, None] * (diff**2 / sigma**3 - 1.0 / sigma)
        g_sigma += c2 * (-1.0 / (B * sigma))
        g_raw = np.where(policy.sigma_active(raw_sigma), g_sigma, 0.0)
        g_v = c1 * 2.0 * (v - batch.returns) / B
        grads = Grads(
            mean=policy.mean_net.backward(mean_cache, policy.mean_scale * g_mu),
            std=policy.std_net.backward(std_cache, g_raw),
            value=value_net.backward(value_cache, g_v[:, None]),
        )
    return losses, grads


def grads_finite(grads: Grads) -> bool:
    return all(np.isfinite(g).all() for d in (grads.mean, grads.std, grads.value) for g in d.values())
