"""Pick-and-place policies: factorised pick/place distributions, actor-critic and behaviour cloning."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..envs import ActionMask, ExplorationEnv, derive_seed
from ..neural import MPNN, MPNNConfig, StepDecay, autodiff as ad, batch_graphs, make_optimizer
from ..neural.mpnn import GraphBatch
from ..neural.optim import optimizer_step
from ..physics import FLOOR
from ..scenegraph import FeatureGraph, encode_exploration_features, exploration_feature_width

log = logging.getLogger(__name__)

PRIVILEGED = "privileged"
STUDENT = "student"


def exploration_model(n_classes: int, seed: int, value_head: bool = True, **overrides) -> MPNN:
    cfg = MPNNConfig(node_in=exploration_feature_width(n_classes), edge_in=1, node_heads=True,
                     value_head=value_head, **overrides)
    return MPNN(cfg, seed=seed)


def featurize(env: ExplorationEnv, state, obs, view: str) -> FeatureGraph:
    """Privileged view: full support graph with geometry; student view: the observation graph."""
    idx = env.catalog.class_index
    if view == PRIVILEGED:
        return encode_exploration_features(env.privileged_graph(state), idx, full_geometry=True)
    return encode_exploration_features(obs, idx)


# -- factorised action distribution -------------------------------------------------

def _pick_mask(fg: FeatureGraph, mask: ActionMask) -> np.ndarray:
    legal = {x for i, x in enumerate(mask.pick_ids) if mask.mask[i].any()}
    return np.array([nid in legal for nid in fg.node_ids], dtype=bool)


def _place_mask(fg: FeatureGraph, mask: ActionMask, pick: int) -> tuple[bool, np.ndarray]:
    row = mask.mask[mask.pick_ids.index(pick)]
    col = {y: j for j, y in enumerate(mask.place_ids)}
    nodes = np.array([nid in col and nid != FLOOR and row[col[nid]] for nid in fg.node_ids], dtype=bool)
    return bool(row[0]), nodes


def pick_probabilities(out: dict, batch: GraphBatch, b: int, fg: FeatureGraph, mask: ActionMask) -> np.ndarray:
    lo, hi = batch.offsets[b], batch.offsets[b + 1]
    pm = _pick_mask(fg, mask)
    x = np.where(pm, out["pick"].value[lo:hi], -np.inf)
    x = np.exp(x - x.max())
    return x / x.sum()


def place_probabilities(out: dict, batch: GraphBatch, b: int, fg: FeatureGraph, mask: ActionMask,
                        pick: int) -> np.ndarray:
    """Probabilities over ``[floor] + fg.node_ids`` given the chosen pick."""
    lo, hi = batch.offsets[b], batch.offsets[b + 1]
    floor_ok, nodes_ok = _place_mask(fg, mask, pick)
    logits = np.concatenate([[out["floor"].value[b]], out["place"].value[lo:hi]])
    ok = np.concatenate([[floor_ok], nodes_ok])
    x = np.where(ok, logits, -np.inf)
    x = np.exp(x - x.max())
    return x / x.sum()


def choose_actions(out: dict, batch: GraphBatch, fgs: Sequence[FeatureGraph], masks: Sequence[ActionMask],
                   rng: np.random.Generator | None) -> list[tuple[int, int]]:
    """Sample (or, with ``rng=None``, take the mode of) pick then place for every graph."""
    actions = []
    for b, (fg, mask) in enumerate(zip(fgs, masks)):
        pp = pick_probabilities(out, batch, b, fg, mask)
        i = int(np.argmax(pp)) if rng is None else int(rng.choice(len(pp), p=pp))
        x = fg.node_ids[i]
        qp = place_probabilities(out, batch, b, fg, mask, x)
        j = int(np.argmax(qp)) if rng is None else int(rng.choice(len(qp), p=qp))
        y = FLOOR if j == 0 else fg.node_ids[j - 1]
        actions.append((x, y))
    return actions


def action_log_probs(out: dict, batch: GraphBatch, fgs: Sequence[FeatureGraph], masks: Sequence[ActionMask],
                     actions: Sequence[tuple[int, int]]) -> tuple[ad.Tensor, ad.Tensor]:
    """log pi(pick) + log pi(place | pick) per graph, and the matching entropy."""
    B = batch.n_graphs
    pick_mask = np.concatenate([_pick_mask(fg, m) for fg, m in zip(fgs, masks)])
    logp_pick = ad.segment_log_softmax(out["pick"], batch.node_graph, B, pick_mask)
    floor_ok = np.zeros(B, dtype=bool)
    node_ok = []
    pick_rows, place_idx = [], []
    for b, (fg, m, (x, y)) in enumerate(zip(fgs, masks, actions)):
        if not m.allows(x, y):
            raise ValueError(f"action {(x, y)} is not legal for graph {b}")
        f_ok, n_ok = _place_mask(fg, m, x)
        floor_ok[b] = f_ok
        node_ok.append(n_ok)
        pick_rows.append(batch.offsets[b] + fg.row_of(x))
        place_idx.append(b if y == FLOOR else B + batch.offsets[b] + fg.row_of(y))
    place_mask = np.concatenate([floor_ok] + node_ok)
    segs = np.concatenate([np.arange(B), batch.node_graph])
    logits = ad.concat([out["floor"], out["place"]], axis=0)
    logp_place = ad.segment_log_softmax(logits, segs, B, place_mask)
    logp = ad.take(logp_pick, np.array(pick_rows)) + ad.take(logp_place, np.array(place_idx))
    entropy = _entropy(logp_pick, pick_mask, batch.node_graph, B) + _entropy(logp_place, place_mask, segs, B)
    return logp, entropy


def _entropy(logp: ad.Tensor, mask: np.ndarray, segs: np.ndarray, n: int) -> ad.Tensor:
    lp = ad.where(mask, logp, 0.0)
    p = ad.where(mask, ad.exp(lp), 0.0)
    return ad.neg(ad.segment_sum(p * lp, segs, n))


class ExplorePolicy:
    """Episode policy backed by a pick/place network (greedy by default)."""

    def __init__(self, model: MPNN, view: str, greedy: bool = True, seed: int = 0):
        self.model = model
        self.view = view
        self.rng = None if greedy else np.random.default_rng(seed)

    def __call__(self, env: ExplorationEnv, state, obs) -> tuple[int, int]:
        fg = featurize(env, state, obs, self.view)
        batch = batch_graphs([fg])
        out = self.model(batch)
        return choose_actions(out, batch, [fg], [env.action_mask(state)], self.rng)[0]


# -- actor-critic ------------------------------------------------------------------

@dataclass(frozen=True)
class A2CConfig:
    n_steps: int = 8
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    gamma: float = 0.99
    n_envs: int = 8
    total_steps: int = 40_000
    optimizer: str = "adam"
    lr: float = 1e-3
    lr_decay_every: int = 10_000  # in updates
    max_grad_norm: float | None = 5.0
    log_every: int = 2000

    def __post_init__(self) -> None:
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")


def n_step_returns(rewards: np.ndarray, dones: np.ndarray, bootstrap: np.ndarray, gamma: float) -> np.ndarray:
    """Returns for a (time, env) block; ``bootstrap`` values the state after the last step."""
    R = np.array(bootstrap, dtype=float)
    out = np.zeros_like(np.asarray(rewards, dtype=float))
    for t in range(len(rewards) - 1, -1, -1):
        R = rewards[t] + gamma * R * (1.0 - dones[t])
        out[t] = R
    return out


def a2c_loss(model: MPNN, fgs, masks, actions, returns: np.ndarray, cfg: A2CConfig) -> tuple[ad.Tensor, dict]:
    batch = batch_graphs(fgs)
    out = model(batch)
    logp, entropy = action_log_probs(out, batch, fgs, masks, actions)
    value = out["value"]
    adv = returns - value.value
    policy = ad.neg(ad.mean(logp * adv))
    vloss = ad.mean(ad.square(value - returns))
    ent = ad.mean(entropy)
    loss = policy + cfg.value_coef * vloss - cfg.entropy_coef * ent
    return loss, {"policy": float(policy.value), "value": float(vloss.value), "entropy": float(ent.value)}


def a2c_update(model: MPNN, fgs, masks, actions, returns, cfg: A2CConfig) -> dict:
    loss, parts = a2c_loss(model, fgs, masks, actions, np.asarray(returns, dtype=float), cfg)
    model.zero_grad()
    loss.backward()
    parts["loss"] = float(loss.value)
    return parts


def train_a2c(env: ExplorationEnv, cfg: A2CConfig, seed: int, model: MPNN | None = None,
              view: str = PRIVILEGED, log_fn: Callable[[dict], None] | None = None,
              checkpoint_fn: Callable[[MPNN], None] | None = None) -> MPNN:
    rng = np.random.default_rng(derive_seed(seed, 21))
    model = model or exploration_model(len(env.catalog.objects), derive_seed(seed, 22))
    opt = make_optimizer(cfg.optimizer, StepDecay(cfg.lr, cfg.lr_decay_every))
    episode = 0
    states, obs = [], []
    for _ in range(cfg.n_envs):
        s, o = env.reset(derive_seed(seed, 23, episode))
        episode += 1
        states.append(s)
        obs.append(o)
    finished: list[tuple[bool, int, float]] = []
    ep_return = [0.0] * cfg.n_envs
    step = 0
    updates = 0
    t0 = time.time()
    next_log = cfg.log_every
    while step < cfg.total_steps:
        roll_f, roll_m, roll_a = [], [], []
        rewards = np.zeros((cfg.n_steps, cfg.n_envs))
        dones = np.zeros((cfg.n_steps, cfg.n_envs))
        for t in range(cfg.n_steps):
            # finished-at-reset episodes (nothing hidden) carry no decision; redraw them
            for i in range(cfg.n_envs):
                while states[i].done:
                    states[i], obs[i] = env.reset(derive_seed(seed, 23, episode))
                    episode += 1
            fgs = [featurize(env, s, o, view) for s, o in zip(states, obs)]
            masks = [env.action_mask(s) for s in states]
            batch = batch_graphs(fgs)
            actions = choose_actions(model(batch), batch, fgs, masks, rng)
            for i in range(cfg.n_envs):
                s, r, done, o, _ = env.step(states[i], actions[i])
                rewards[t, i] = r
                dones[t, i] = done
                ep_return[i] += r
                if done:
                    finished.append((s.success, len(s.known), ep_return[i]))
                    ep_return[i] = 0.0
                states[i], obs[i] = s, o
            roll_f.extend(fgs)
            roll_m.extend(masks)
            roll_a.extend(actions)
            step += cfg.n_envs
        boot = np.zeros(cfg.n_envs)
        live = [i for i in range(cfg.n_envs) if not states[i].done]
        if live:
            vals = model([featurize(env, states[i], obs[i], view) for i in live])["value"].value
            boot[live] = vals
        returns = n_step_returns(rewards, dones, boot, cfg.gamma).reshape(-1)
        parts = a2c_update(model, roll_f, roll_m, roll_a, returns, cfg)
        optimizer_step(model, opt, cfg.max_grad_norm)
        updates += 1
        if log_fn is not None and step >= next_log:
            next_log += cfg.log_every
            window = finished[-200:]
            log_fn({"step": step, "updates": updates, **parts,
                    "success_rate": float(np.mean([w[0] for w in window])) if window else None,
                    "objects_found": float(np.mean([w[1] for w in window])) if window else None,
                    "return": float(np.mean([w[2] for w in window])) if window else None,
                    "episodes": episode, "seconds": round(time.time() - t0, 1)})
            if checkpoint_fn is not None:
                checkpoint_fn(model)
    return model


# -- behaviour cloning -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BCSample:
    obs: FeatureGraph
    mask: ActionMask
    action: tuple[int, int]


def collect_bc_dataset(teacher: MPNN, env: ExplorationEnv, n_samples: int, seed: int) -> list[BCSample]:
    """Run the teacher greedily on the privileged view, recording the student's observation."""
    out: list[BCSample] = []
    policy = ExplorePolicy(teacher, PRIVILEGED, greedy=True)
    episode = 0
    while len(out) < n_samples:
        state, obs = env.reset(derive_seed(seed, 31, episode))
        episode += 1
        while not state.done and len(out) < n_samples:
            action = policy(env, state, obs)
            mask = env.action_mask(state)
            fg = featurize(env, state, obs, STUDENT)
            if action[0] not in fg.node_ids or (action[1] != FLOOR and action[1] not in fg.node_ids):
                raise AssertionError("teacher chose an object the student has not seen")
            out.append(BCSample(fg, mask, action))
            state, _, _, obs, _ = env.step(state, action)
    return out


def bc_loss(student: MPNN, batch: Sequence[BCSample]) -> ad.Tensor:
    keep = [s for s in batch if s.mask.allows(*s.action)]
    if len(keep) < len(batch):
        log.warning("dropped %d behaviour-cloning samples whose action is masked", len(batch) - len(keep))
    if not keep:
        raise ValueError("empty batch")
    fgs = [s.obs for s in keep]
    gb = batch_graphs(fgs)
    logp, _ = action_log_probs(student(gb), gb, fgs, [s.mask for s in keep], [s.action for s in keep])
    return ad.neg(ad.mean(logp))


def bc_update(student: MPNN, batch: Sequence[BCSample]) -> float:
    loss = bc_loss(student, batch)
    student.zero_grad()
    loss.backward()
    return float(loss.value)


@dataclass(frozen=True)
class BCConfig:
    epochs: int = 30
    batch_size: int = 32
    optimizer: str = "adam"
    lr: float = 1e-3
    lr_decay_every: int = 5000
    max_grad_norm: float | None = 5.0


def distill(student: MPNN, data: Sequence[BCSample], cfg: BCConfig, seed: int,
            log_fn: Callable[[dict], None] | None = None) -> MPNN:
    rng = np.random.default_rng(derive_seed(seed, 41))
    opt = make_optimizer(cfg.optimizer, StepDecay(cfg.lr, cfg.lr_decay_every))
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(data))
        losses = []
        for lo in range(0, len(order), cfg.batch_size):
            losses.append(bc_update(student, [data[i] for i in order[lo:lo + cfg.batch_size]]))
            optimizer_step(student, opt, cfg.max_grad_norm)
        if log_fn is not None:
            log_fn({"epoch": epoch, "loss": float(np.mean(losses))})
    return student


def agreement(student: MPNN, data: Sequence[BCSample]) -> float:
    """Fraction of samples where the student's greedy action equals the recorded one."""
    if not data:
        return float("nan")
    hits = 0
    for lo in range(0, len(data), 64):
        chunk = data[lo:lo + 64]
        fgs = [s.obs for s in chunk]
        gb = batch_graphs(fgs)
        acts = choose_actions(student(gb), gb, fgs, [s.mask for s in chunk], None)
        hits += sum(a == s.action for a, s in zip(acts, chunk))
    return hits / len(data)
