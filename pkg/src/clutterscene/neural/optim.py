"""Gradient-descent optimizers with a step-decay learning rate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np


@dataclass(frozen=True)
class StepDecay:
    """``lr(t) = lr0 * factor ** (t // every)``."""

    lr0: float = 1e-3
    every: int = 128_000
    factor: float = 0.5

    def __call__(self, t: int) -> float:
        return self.lr0 * self.factor ** (t // self.every)


def _check_finite(grads: Mapping[str, np.ndarray]) -> None:
    bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise FloatingPointError(f"non-finite gradient in {', '.join(sorted(bad))}")


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float | None) -> dict[str, np.ndarray]:
    if not max_norm:
        return grads
    norm = float(np.sqrt(sum(float((g ** 2).sum()) for g in grads.values())))
    if norm <= max_norm:
        return grads
    return {k: g * (max_norm / norm) for k, g in grads.items()}


class SGD:
    def __init__(self, schedule: StepDecay = StepDecay(), momentum: float = 0.0):
        self.schedule = schedule
        self.momentum = momentum
        self.t = 0
        self._vel: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
        _check_finite(grads)
        lr = self.schedule(self.t)
        out = {}
        for k, p in params.items():
            g = grads[k]
            if self.momentum:
                v = self.momentum * self._vel.get(k, 0.0) + g
                self._vel[k] = v
                g = v
            out[k] = p - lr * g
        self.t += 1
        return out


class Adam:
    def __init__(self, schedule: StepDecay = StepDecay(), beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.schedule = schedule
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
        _check_finite(grads)
        lr = self.schedule(self.t)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        out = {}
        for k, p in params.items():
            g = grads[k]
            m = b1 * self._m.get(k, 0.0) + (1 - b1) * g
            v = b2 * self._v.get(k, 0.0) + (1 - b2) * g * g
            self._m[k], self._v[k] = m, v
            mh = m / (1 - b1 ** self.t)
            vh = v / (1 - b2 ** self.t)
            out[k] = p - lr * mh / (np.sqrt(vh) + self.eps)
        return out


def make_optimizer(name: str, schedule: StepDecay, **kwargs):
    if name == "sgd":
        return SGD(schedule, **kwargs)
    if name == "adam":
        return Adam(schedule, **kwargs)
    raise ValueError(f"unknown optimizer {name!r}")


def optimizer_step(model, optimizer, max_grad_norm: float | None = None) -> None:
    """Apply one update to ``model`` from its accumulated gradients."""
    grads = clip_by_global_norm(model.grads(), max_grad_norm)
    new = optimizer.step(model.values(), grads)
    model.load_values(new)
    for k, v in new.items():
        if not np.all(np.isfinite(v)):
            raise FloatingPointError(f"parameter {k} became non-finite")
