"""Maximum-entropy Q-learning over production rules."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..envs import GenerationEnv, derive_seed
from ..neural import MPNN, MPNNConfig, StepDecay, autodiff as ad, make_optimizer, masked_softmax
from ..neural.optim import optimizer_step
from ..scenegraph import (
    EDGE_VOCABULARY, FeatureGraph, encode_generation_features, generation_feature_width, kind_vocabulary,
)


@dataclass(frozen=True)
class SoftQConfig:
    alpha: float = 0.05
    alpha_final: float | None = None  # linear decay target over total_steps
    gamma: float = 0.99
    replay_capacity: int = 50_000
    batch_size: int = 32
    target_sync: int = 1000  # in updates
    total_steps: int = 100_000  # environment steps
    learning_starts: int = 1000
    train_every: int = 4
    eps_floor: float = 0.05
    n_envs: int = 8
    optimizer: str = "adam"
    lr: float = 1e-3
    lr_decay_every: int = 5000  # in updates
    max_grad_norm: float | None = 10.0
    log_every: int = 5000

    def __post_init__(self) -> None:
        if self.alpha <= 0 or (self.alpha_final is not None and self.alpha_final <= 0):
            raise ValueError("temperature must be positive")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")

    def temperature(self, step: int) -> float:
        if self.alpha_final is None:
            return self.alpha
        frac = min(1.0, step / max(1, self.total_steps))
        return self.alpha + frac * (self.alpha_final - self.alpha)


def softq_policy(q: np.ndarray, mask: np.ndarray, alpha: float) -> np.ndarray:
    """pi(a) proportional to exp(Q(a) / alpha) over feasible actions."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return masked_softmax(np.asarray(q, dtype=float) / alpha, mask)


def soft_value(q: np.ndarray, mask: np.ndarray, alpha: float) -> np.ndarray:
    """alpha * log sum exp(Q / alpha) over feasible actions, row-wise."""
    x = np.where(mask, q / alpha, -np.inf)
    m = x.max(axis=-1, keepdims=True)
    return alpha * (m[..., 0] + np.log(np.exp(x - m).sum(axis=-1)))


class ReplayBuffer:
    """Fixed-capacity ring buffer of generation transitions, sampled uniformly."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._data: list = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._data)

    def add(self, state: FeatureGraph, action: int, reward: float, next_state: FeatureGraph, done: bool,
            next_mask: np.ndarray) -> None:
        item = (state, int(action), float(reward), next_state, bool(done), np.asarray(next_mask, dtype=bool))
        if len(self._data) < self.capacity:
            self._data.append(item)
        else:
            self._data[self._next] = item
        self._next = (self._next + 1) % self.capacity

    def sample(self, rng: np.random.Generator, batch_size: int) -> list:
        idx = rng.integers(len(self._data), size=batch_size)
        return [self._data[i] for i in idx]


def softq_targets(target: MPNN, batch: Sequence, alpha: float, gamma: float) -> np.ndarray:
    rewards = np.array([t[2] for t in batch])
    dones = np.array([t[4] for t in batch])
    live = [i for i, t in enumerate(batch) if not t[4]]
    values = np.zeros(len(batch))
    if live:
        q_next = target([batch[i][3] for i in live])["q"].value
        masks = np.stack([batch[i][5] for i in live])
        values[live] = soft_value(q_next, masks, alpha)
    y = rewards + gamma * np.where(dones, 0.0, values)
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("non-finite soft-Q target")
    return y


def softq_train_step(model: MPNN, target: MPNN, batch: Sequence, alpha: float, gamma: float) -> float:
    """Squared soft Bellman error averaged over ``batch``; gradients land in ``model``."""
    if not batch:
        raise ValueError("empty batch")
    y = softq_targets(target, batch, alpha, gamma)
    q = model([t[0] for t in batch])["q"]
    actions = np.array([t[1] for t in batch])
    q_sa = ad.take(q, (np.arange(len(batch)), actions))
    loss = ad.mean(ad.square(q_sa - y))
    model.zero_grad()
    loss.backward()
    return float(loss.value)


def generation_model(env: GenerationEnv, seed: int, **overrides) -> MPNN:
    vocab = kind_vocabulary(env.catalog.object_names, env.catalog.meta_names)
    cfg = MPNNConfig(node_in=generation_feature_width(len(vocab)), edge_in=len(EDGE_VOCABULARY),
                     n_rules=len(env.rules), **overrides)
    return MPNN(cfg, seed=seed)


class GenerationAgent:
    """Soft-Q policy wrapper usable as an episode policy."""

    def __init__(self, model: MPNN, env: GenerationEnv, alpha: float, greedy: bool = False, seed: int = 0):
        self.model = model
        self.vocab = kind_vocabulary(env.catalog.object_names, env.catalog.meta_names)
        self.alpha = alpha
        self.greedy = greedy
        self.rng = np.random.default_rng(seed)

    def features(self, graph) -> FeatureGraph:
        return encode_generation_features(graph, self.vocab)

    def q_values(self, graphs) -> np.ndarray:
        return self.model([self.features(g) for g in graphs])["q"].value

    def act_batch(self, graphs, masks) -> list[int]:
        q = self.q_values(graphs)
        out = []
        for qi, m in zip(q, masks):
            if self.greedy:
                out.append(int(np.flatnonzero(m)[np.argmax(qi[m])]))
            else:
                out.append(int(self.rng.choice(len(qi), p=softq_policy(qi, m, self.alpha))))
        return out

    def __call__(self, env, state, obs=None) -> int:
        return self.act_batch([state.graph], [env.feasible_mask(state)])[0]


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def add(self, **kw) -> None:
        self.records.append(kw)


def train_softq(env: GenerationEnv, cfg: SoftQConfig, seed: int, model: MPNN | None = None,
                log: Callable[[dict], None] | None = None,
                checkpoint_fn: Callable[[MPNN], None] | None = None) -> MPNN:
    """Train a generation policy for ``cfg.total_steps`` environment steps.

    ``cfg.n_envs`` episodes run in lock step so one batched forward pass
    serves all of them.
    """
    rng = np.random.default_rng(derive_seed(seed, 11))
    model = model or generation_model(env, derive_seed(seed, 12))
    target = model.copy()
    agent = GenerationAgent(model, env, cfg.alpha)
    opt = make_optimizer(cfg.optimizer, StepDecay(cfg.lr, cfg.lr_decay_every))
    buffer = ReplayBuffer(cfg.replay_capacity)
    episode = 0
    states, masks, feats = [], [], []
    for _ in range(cfg.n_envs):
        s = env.reset(derive_seed(seed, 13, episode))
        episode += 1
        states.append(s)
        masks.append(env.feasible_mask(s))
        feats.append(agent.features(s.graph))
    updates = 0
    returns = [0.0] * cfg.n_envs
    recent: list[tuple[float, bool, int]] = []
    losses: list[float] = []
    t0 = time.time()
    step = 0
    while step < cfg.total_steps:
        alpha = cfg.temperature(step)
        q = model(feats)["q"].value
        for i in range(cfg.n_envs):
            pi = softq_policy(q[i], masks[i], alpha)
            feas = masks[i] / masks[i].sum()
            p = (1 - cfg.eps_floor) * pi + cfg.eps_floor * feas
            a = int(rng.choice(len(p), p=p / p.sum()))
            nxt, r, done, info = env.step(states[i], a)
            n_feat = agent.features(nxt.graph)
            # the mask of a terminal transition never enters the target
            n_mask = env.feasible_mask(nxt) if not done else np.ones(len(env.rules), bool)
            buffer.add(feats[i], a, r, n_feat, done, n_mask)
            returns[i] += r
            step += 1
            if done:
                res = nxt.last_realization
                recent.append((returns[i], bool(res is not None and res.stable),
                               res.hidden if res is not None and res.stable else 0))
                returns[i] = 0.0
                nxt = env.reset(derive_seed(seed, 13, episode))
                episode += 1
                n_mask = env.feasible_mask(nxt)
                n_feat = agent.features(nxt.graph)
            states[i], masks[i], feats[i] = nxt, n_mask, n_feat
            if step >= cfg.learning_starts and step % cfg.train_every == 0 and len(buffer) >= cfg.batch_size:
                batch = buffer.sample(rng, cfg.batch_size)
                losses.append(softq_train_step(model, target, batch, alpha, cfg.gamma))
                optimizer_step(model, opt, cfg.max_grad_norm)
                updates += 1
                if updates % cfg.target_sync == 0:
                    target.load_values(model.snapshot())
            if log is not None and step % cfg.log_every == 0:
                window = recent[-200:]
                log({
                    "step": step, "updates": updates, "alpha": alpha,
                    "loss": float(np.mean(losses[-200:])) if losses else None,
                    "return": float(np.mean([w[0] for w in window])) if window else None,
                    "stability_rate": float(np.mean([w[1] for w in window])) if window else None,
                    "hidden": float(np.mean([w[2] for w in window if w[1]])) if any(w[1] for w in window) else None,
                    "episodes": episode, "seconds": round(time.time() - t0, 1),
                })
            if checkpoint_fn is not None and step % cfg.log_every == 0:
                checkpoint_fn(model)
            if step >= cfg.total_steps:
                break
    return model
