"""Per-step training records and generalized advantage estimation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ConfigError


@dataclass
class Transition:
    """One environment step as stored in the rollout buffer.

    ``v_t1`` is the value of the following state. For the last step of a
    truncated episode that is the state at the end of the training data and
    ``reward`` is the partial-period reward, also kept in ``truncated_reward``.
    """

    state: np.ndarray
    action: np.ndarray
    reward: float
    v_t: float
    v_t1: float
    logp: float
    std: np.ndarray
    advantage: float = float("nan")
    ret: float = float("nan")
    terminal: bool = False
    truncated_reward: float | None = None


def gae(rewards, values, next_values, gamma: float, lam: float):
    """Advantages and return targets for one episode.

    ``values[l]`` and ``next_values[l]`` are the value estimates of the
    states before and after step ``l``. Returns bootstrap from the value
    after the final step.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    next_values = np.asarray(next_values, dtype=float)
    L = rewards.shape[0]
    if L == 0:
        raise ConfigError("cannot compute advantages for an empty episode")
    if values.shape != (L,) or next_values.shape != (L,):
        raise ConfigError("rewards and value estimates differ in length")
    delta = rewards + gamma * next_values - values
    adv = np.empty(L)
    ret = np.empty(L)
    acc = 0.0
    tail = next_values[-1]
    for l in range(L - 1, -1, -1):
        acc = delta[l] + gamma * lam * acc
        adv[l] = acc
        tail = rewards[l] + gamma * tail
        ret[l] = tail
    return adv, ret


def compute_gae(episode: Sequence[Transition], gamma: float, lam: float) -> Sequence[Transition]:
    """Fill ``advantage`` and ``ret`` on an ordered episode in place."""
    if not episode:
        raise ConfigError("cannot compute advantages for an empty episode")
    adv, ret = gae(
        [t.reward for t in episode],
        [t.v_t for t in episode],
        [t.v_t1 for t in episode],
        gamma,
        lam,
    )
    for t, a, r in zip(episode, adv, ret):
        t.advantage = float(a)
        t.ret = float(r)
    return episode
