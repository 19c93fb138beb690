"""Two-armed bandit driven through the Soft-Q learner's own pieces."""

import numpy as np

from clutterscene.agents.softq import ReplayBuffer, softq_policy, softq_train_step
from clutterscene.neural import MPNN, Adam, MPNNConfig, StepDecay, optimizer_step
from clutterscene.scenegraph import FeatureGraph

STATE = FeatureGraph(np.ones((1, 1)), np.zeros((0, 1)), np.zeros(0, np.int64), np.zeros(0, np.int64), (0,))


def train_bandit(rewards=(1.0, 0.0), alpha=0.5, updates=10_000, seed=0, batch_size=32, lr=3e-3):
    """Every pull ends the episode, so the soft-Q fixed point is Q = r."""
    rng = np.random.default_rng(seed)
    model = MPNN(MPNNConfig(node_in=1, edge_in=1, node_dim=8, global_dim=8, mp_steps=1, n_rules=2), seed=seed)
    target = model.copy()
    opt = Adam(StepDecay(lr, 10**9))
    buf = ReplayBuffer(1000)
    mask = np.ones(2, dtype=bool)
    history = []
    for step in range(updates):
        q = model([STATE])["q"].value[0]
        pi = softq_policy(q, mask, alpha)
        a = int(rng.choice(2, p=0.9 * pi + 0.05))
        buf.add(STATE, a, rewards[a], STATE, True, mask)
        softq_train_step(model, target, buf.sample(rng, batch_size), alpha, 0.99)
        optimizer_step(model, opt)
        history.append(pi)
    q = model([STATE])["q"].value[0]
    return softq_policy(q, mask, alpha), q, history


def analytic_policy(rewards=(1.0, 0.0), alpha=0.5):
    z = np.exp(np.asarray(rewards) / alpha)
    return z / z.sum()
