"""Configuration, seeding and digests shared by both environments."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields

import numpy as np


@dataclass(frozen=True)
class RewardConfig:
    w_s: float = -1.0
    w_u: float = 0.5
    r_d: float = 1.0
    gamma: float = 0.99

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.w_s >= 0:
            raise ValueError(f"w_s must be negative, got {self.w_s}")


@dataclass(frozen=True)
class EnvConfig:
    sigma: float = 0.005
    delta: float = 0.01
    tau: float = 0.1
    resolution: float = 0.002
    capacity: int = 8
    gen_step_factor: int = 4
    exp_step_factor: int = 2
    placement_attempts: int = 64
    reset_retries: int = 32

    def __post_init__(self) -> None:
        if self.capacity < 1 or self.gen_step_factor < 1 or self.exp_step_factor < 1:
            raise ValueError("capacity and step factors must be positive")


def config_from_dict(cls, data: dict | None):
    """Build a config dataclass, rejecting unknown keys."""
    data = dict(data or {})
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


def derive_seed(master: int, *keys: int) -> int:
    """Independent 63-bit child seed for ``(master, *keys)``.

    Uses numpy's SeedSequence hashing, so nearby keys give unrelated streams.
    """
    state = np.random.SeedSequence([int(master) % 2**64, *(int(k) % 2**64 for k in keys)]).generate_state(2)
    return int((int(state[0]) << 32 | int(state[1])) & (2**63 - 1))


def digest_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def config_digest(*configs) -> str:
    payload = [asdict(c) if hasattr(c, "__dataclass_fields__") else c for c in configs]
    return digest_text(json.dumps(payload, sort_keys=True, default=str))


def discounted_return(rewards, gamma: float) -> float:
    total = 0.0
    for r in reversed(list(rewards)):
        total = r + gamma * total
    return total
