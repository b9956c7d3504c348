"""The PPO training loop: collect episodes, estimate advantages, update."""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..costs import CostModel
from ..market import FeatureScaler, MarketPanel, TimeGrid
from ..metrics import ErrorSpec
from .env import EnvConfig, TrackingEnv, run_episode, sample_start
from .gae import Transition, compute_gae
from .hyper import PpoHyper
from .nets import Adam, Mlp, MlpSpec
from .policy import Policy
from .ppo import Batch, Losses, grads_finite, ppo_losses

logger = logging.getLogger(__name__)

LOG_COLUMNS = (
    "epoch", "total", "clip", "value", "entropy", "mean_reward",
    "transitions", "skipped_episodes", "skipped_samples", "skipped_updates",
)


@dataclass
class TrainResult:
    policy: Policy
    value_net: Mlp
    scaler: FeatureScaler | None
    log: list[dict] = field(default_factory=list)
    action_dim: int = 0
    rng_states: list[dict] = field(default_factory=list)


def build_networks(hyper: PpoHyper, state_dim: int, action_dim: int, rng: np.random.Generator):
    policy = Policy.create(
        state_dim, action_dim, hyper.policy_hidden, rng,
        batch_norm=hyper.batch_norm, b=hyper.b, init_log_std=hyper.init_log_std,
        out_scale=hyper.out_scale, bn_momentum=hyper.bn_momentum, bounded_mean=hyper.bounded_mean,
    )
    policy.sigma_floor = hyper.sigma_floor
    policy.sigma_ceiling = hyper.sigma_ceiling
    value_spec = MlpSpec(state_dim, hyper.value_hidden, 1, "linear", hyper.batch_norm, hyper.bn_momentum)
    return policy, Mlp(value_spec, rng)


def collect(env: TrackingEnv, policy: Policy, value_net: Mlp, hyper: PpoHyper,
            rng: np.random.Generator, episodes: int):
    """One worker's share of an epoch. Returns ``(episodes, skipped, rng)``."""
    out: list[list[Transition]] = []
    skipped = 0
    for _ in range(episodes):
        t0 = sample_start(hyper, env.n_days, rng)
        ep = run_episode(env, policy, value_net, t0, rng)
        if ep is None:
            skipped += 1
        else:
            out.append(ep)
    return out, skipped, rng


def clip_grad_norm(groups: list[dict[str, np.ndarray]], max_norm: float) -> float:
    """Rescale all gradients in place so their joint L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(sum(float((g**2).sum()) for d in groups for g in d.values())))
    if norm > max_norm:
        scale = max_norm / norm
        for d in groups:
            for k in d:
                d[k] = d[k] * scale
    return norm


def _mean_losses(items: list[Losses]) -> dict:
    keys = ("total", "clip", "value", "entropy")
    out = {k: float(np.mean([getattr(x, k) for x in items])) for k in keys}
    out["skipped_samples"] = int(sum(x.skipped for x in items))
    return out


def write_log(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for row in rows:
            w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in LOG_COLUMNS])


def update(policy: Policy, value_net: Mlp, opt: Adam, buffer: list[Transition],
           hyper: PpoHyper, rng: np.random.Generator) -> dict:
    """Shuffled minibatch passes over ``buffer``; a tail shorter than a minibatch is dropped."""
    batch = Batch.from_transitions(buffer)
    results: list[Losses] = []
    bad_steps = 0
    for _ in range(hyper.passes):
        perm = rng.permutation(len(batch))
        i = 0
        while i + hyper.minibatch <= len(batch):
            mb = batch.subset(perm[i:i + hyper.minibatch])
            if hyper.normalize_advantages:
                a = mb.advantages
                mb.advantages = (a - a.mean()) / (a.std() + 1e-8)
            mode = hyper.bn_update_mode if hyper.batch_norm else "eval"
            losses, g = ppo_losses(policy, value_net, mb, hyper.epsilon, hyper.e1, hyper.e2,
                                   mode=mode, update_stats=True)
            results.append(losses)
            i += hyper.minibatch
            if not grads_finite(g):
                bad_steps += 1
                continue
            groups = [g.mean, g.std, g.value]
            if hyper.max_grad_norm is not None:
                clip_grad_norm(groups, hyper.max_grad_norm)
            opt.step(groups)
    if not results:
        losses, _ = ppo_losses(policy, value_net, batch, hyper.epsilon, hyper.e1, hyper.e2,
                               mode="eval", with_grads=False)
        results.append(losses)
    if bad_steps:
        logger.warning("skipped %d minibatch updates with non-finite gradients", bad_steps)
    out = _mean_losses(results)
    out["skipped_updates"] = bad_steps
    return out


def train(
    panel: MarketPanel,
    grid: TimeGrid,
    spec: ErrorSpec,
    hyper: PpoHyper,
    model: CostModel,
    env_cfg: EnvConfig | None = None,
    seed: int = 0,
    end_day: int | None = None,
    standardize: bool = True,
    log_path: str | Path | None = None,
    init: tuple[Policy, Mlp] | None = None,
) -> TrainResult:
    """Train policy and value networks on panel rows up to ``end_day``.

    Runs ``hyper.epochs`` epochs. Each epoch every one of ``hyper.workers``
    logical workers collects ``hyper.episodes`` episodes with its own random
    stream; the result depends only on ``seed`` and the worker count, also
    when ``hyper.processes > 1`` spreads workers over processes.
    """
    end = panel.n_days - 1 if end_day is None else int(end_day)
    scaler = FeatureScaler.fit(panel, 1, end + 1) if standardize else None
    env = TrackingEnv(panel, grid, spec, model, env_cfg, end, scaler, hyper.b, hyper.b_f)

    streams = np.random.SeedSequence(seed).spawn(2 + hyper.workers)
    init_rng = np.random.default_rng(streams[0])
    shuffle_rng = np.random.default_rng(streams[1])
    worker_rngs = [np.random.default_rng(s) for s in streams[2:]]
    if init is None:
        policy, value_net = build_networks(hyper, env.state_dim, env.action_dim, init_rng)
    else:
        policy, value_net = init[0].copy(), init[1].copy()
    opt = Adam([policy.mean_net.params, policy.std_net.params, value_net.params], lr=hyper.lr)

    log: list[dict] = []
    pool = ProcessPoolExecutor(hyper.processes) if hyper.processes > 1 else None
    try:
        for epoch in range(hyper.epochs):
            if hyper.lr_schedule == "linear":
                opt.lr = hyper.lr * (1.0 - epoch / hyper.epochs)
            if pool is None:
                parts = [collect(env, policy, value_net, hyper, r, hyper.episodes) for r in worker_rngs]
            else:
                futures = [pool.submit(collect, env, policy, value_net, hyper, r, hyper.episodes)
                           for r in worker_rngs]
                parts = [f.result() for f in futures]
            worker_rngs = [p[2] for p in parts]
            episodes = [ep for p in parts for ep in p[0]]
            skipped = sum(p[1] for p in parts)
            buffer: list[Transition] = []
            for ep in episodes:
                compute_gae(ep, hyper.gamma, hyper.lam)
                buffer.extend(ep)
            if not buffer:
                logger.warning("epoch %d: every episode was skipped", epoch)
                row = dict(total=float("nan"), clip=float("nan"), value=float("nan"), entropy=float("nan"),
                           skipped_samples=0, skipped_updates=0)
                mean_reward = float("nan")
            else:
                row = update(policy, value_net, opt, buffer, hyper, shuffle_rng)
                mean_reward = float(np.mean([sum(t.reward for t in ep) for ep in episodes]))
            row.update(epoch=epoch, mean_reward=mean_reward, transitions=len(buffer), skipped_episodes=skipped)
            log.append(row)
            logger.debug("epoch %d total=%.6g reward=%.6g", epoch, row["total"], mean_reward)
    finally:
        if pool is not None:
            pool.shutdown()
    if log_path is not None:
        write_log(log, log_path)
    states = [r.bit_generator.state for r in (shuffle_rng, *worker_rngs)]
    return TrainResult(policy, value_net, scaler, log, env.action_dim, states)
