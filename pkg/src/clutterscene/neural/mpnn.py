"""Message-passing network with a global attention node and task heads."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..scenegraph import FeatureGraph
from . import autodiff as ad
from .autodiff import Tensor

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MPNNConfig:
    node_in: int
    edge_in: int
    node_dim: int = 32
    edge_dim: int = 3
    global_dim: int = 32
    mp_steps: int = 4
    slope: float = 0.01
    n_rules: int = 0  # > 0 enables the Q head
    node_heads: bool = False  # pick / place / floor logits
    value_head: bool = False

    def __post_init__(self) -> None:
        for name in ("node_in", "edge_in", "node_dim", "edge_dim", "global_dim", "mp_steps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True, eq=False)
class GraphBatch:
    """Several feature graphs concatenated; ``node_graph`` is each node's graph index."""

    nodes: np.ndarray
    edges: np.ndarray
    senders: np.ndarray
    receivers: np.ndarray
    node_graph: np.ndarray
    n_graphs: int
    offsets: np.ndarray  # first row of each graph, plus the total

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]


def batch_graphs(graphs: Sequence[FeatureGraph]) -> GraphBatch:
    counts = np.array([g.n_nodes for g in graphs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    senders = np.concatenate([g.senders + o for g, o in zip(graphs, offsets)]) if graphs else np.zeros(0, int)
    receivers = np.concatenate([g.receivers + o for g, o in zip(graphs, offsets)]) if graphs else np.zeros(0, int)
    edges = np.concatenate([g.edges for g in graphs]) if graphs else np.zeros((0, 1))
    return GraphBatch(
        np.concatenate([g.nodes for g in graphs]),
        edges,
        senders.astype(np.int64),
        receivers.astype(np.int64),
        np.repeat(np.arange(len(graphs)), counts),
        len(graphs),
        offsets,
    )


def parameter_shapes(cfg: MPNNConfig) -> dict[str, tuple[int, ...]]:
    """Every parameter name and shape; the order here is the canonical order."""
    d, de, dg = cfg.node_dim, cfg.edge_dim, cfg.global_dim
    shapes = {
        "embed_node.W": (cfg.node_in, d), "embed_node.b": (d,),
        "embed_edge.W": (cfg.edge_in, de), "embed_edge.b": (de,),
    }
    for t in range(cfg.mp_steps):
        shapes.update({
            f"step{t}.msg.W": (de + d, d), f"step{t}.msg.b": (d,),
            f"step{t}.agg.W": (d + d + dg, d), f"step{t}.agg.b": (d,),
            f"step{t}.att.W": (d, 1), f"step{t}.att.b": (1,),
            f"step{t}.feat.W": (d, dg), f"step{t}.feat.b": (dg,),
            f"step{t}.glb.W": (dg + dg, dg), f"step{t}.glb.b": (dg,),
        })
    if cfg.n_rules:
        shapes.update({"head_q.W": (dg, cfg.n_rules), "head_q.b": (cfg.n_rules,)})
    if cfg.node_heads:
        shapes.update({
            "head_pick.W": (d, 1), "head_pick.b": (1,),
            "head_place.W": (d, 1), "head_place.b": (1,),
            "head_floor.W": (dg, 1), "head_floor.b": (1,),
        })
    if cfg.value_head:
        shapes.update({"head_value.W": (dg, 1), "head_value.b": (1,)})
    return shapes


def init_params(cfg: MPNNConfig, seed: int) -> dict[str, np.ndarray]:
    """Gaussian weights scaled by 1/sqrt(fan_in); zero biases."""
    rng = np.random.default_rng(seed)
    out = {}
    for name, shape in parameter_shapes(cfg).items():
        if name.endswith(".W"):
            out[name] = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), size=shape)
        else:
            out[name] = np.zeros(shape)
    return out


class MPNN:
    def __init__(self, cfg: MPNNConfig, params: Mapping[str, np.ndarray] | None = None, seed: int = 0):
        self.cfg = cfg
        values = dict(params) if params is not None else init_params(cfg, seed)
        shapes = parameter_shapes(cfg)
        if set(values) != set(shapes):
            raise ValueError(f"parameter names do not match the configuration: {sorted(set(values) ^ set(shapes))}")
        self.params = {k: ad.parameter(np.array(values[k], dtype=float), k) for k in shapes}
        for k, shape in shapes.items():
            if self.params[k].shape != shape:
                raise ValueError(f"{k}: expected shape {shape}, got {self.params[k].shape}")

    # -- parameter plumbing ---------------------------------------------------
    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {k: (p.grad if p.grad is not None else np.zeros_like(p.value)) for k, p in self.params.items()}

    def values(self) -> dict[str, np.ndarray]:
        return {k: p.value for k, p in self.params.items()}

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: p.value.copy() for k, p in self.params.items()}

    def load_values(self, values: Mapping[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            p.value = np.array(values[k], dtype=float)

    def copy(self) -> "MPNN":
        return MPNN(self.cfg, self.snapshot())

    @property
    def n_parameters(self) -> int:
        return int(sum(p.value.size for p in self.params.values()))

    # -- layers ---------------------------------------------------------------
    def _linear(self, name: str, x: Tensor) -> Tensor:
        return ad.matmul(x, self.params[name + ".W"]) + self.params[name + ".b"]

    def _phi(self, name: str, x: Tensor) -> Tensor:
        return ad.leaky_relu(self._linear(name, x), self.cfg.slope)

    def embed(self, batch: GraphBatch) -> tuple[Tensor, Tensor, Tensor]:
        if batch.nodes.shape[1] != self.cfg.node_in or batch.edges.shape[1] != self.cfg.edge_in:
            raise ValueError(f"feature widths {batch.nodes.shape[1]}/{batch.edges.shape[1]} do not match "
                             f"model inputs {self.cfg.node_in}/{self.cfg.edge_in}")
        h = self._phi("embed_node", ad.constant(batch.nodes))
        e = self._phi("embed_edge", ad.constant(batch.edges))
        g = ad.constant(np.zeros((batch.n_graphs, self.cfg.global_dim)))
        return h, e, g

    def aggregate_messages(self, t: int, batch: GraphBatch, h: Tensor, e: Tensor) -> Tensor:
        """Componentwise max of incoming messages; zeros for nodes without in-edges."""
        msg = self._phi(f"step{t}.msg", ad.concat([e, ad.take(h, batch.senders)]))
        return ad.segment_max(msg, batch.receivers, batch.n_nodes)

    def mp_step(self, t: int, batch: GraphBatch, h: Tensor, e: Tensor, g: Tensor):
        m = self.aggregate_messages(t, batch, h, e)
        h = h + self._phi(f"step{t}.agg", ad.concat([h, m, ad.take(g, batch.node_graph)]))
        att = ad.segment_softmax(self._linear(f"step{t}.att", h), batch.node_graph, batch.n_graphs)
        feat = self._phi(f"step{t}.feat", h)
        readout = ad.segment_sum(att * feat, batch.node_graph, batch.n_graphs)
        g = g + self._phi(f"step{t}.glb", ad.concat([g, readout]))
        return h, g, att

    def forward(self, batch: GraphBatch) -> dict[str, Tensor]:
        h, e, g = self.embed(batch)
        attention = []
        for t in range(self.cfg.mp_steps):
            h, g, att = self.mp_step(t, batch, h, e, g)
            attention.append(att)
        out: dict[str, Tensor] = {"nodes": h, "global": g}
        out.update(self.heads(h, g))
        out["attention"] = attention
        return out

    def heads(self, h: Tensor, g: Tensor) -> dict[str, Tensor]:
        out = {}
        if self.cfg.n_rules:
            out["q"] = self._linear("head_q", g)
        if self.cfg.node_heads:
            out["pick"] = ad.reshape(self._linear("head_pick", h), (-1,))
            out["place"] = ad.reshape(self._linear("head_place", h), (-1,))
            out["floor"] = ad.reshape(self._linear("head_floor", g), (-1,))
        if self.cfg.value_head:
            out["value"] = ad.reshape(self._linear("head_value", g), (-1,))
        return out

    def __call__(self, graphs: Sequence[FeatureGraph] | GraphBatch) -> dict[str, Tensor]:
        batch = graphs if isinstance(graphs, GraphBatch) else batch_graphs(graphs)
        return self.forward(batch)


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Softmax over the unmasked entries; masked entries get exactly 0."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("all entries are masked")
    x = np.where(mask, logits, -np.inf)
    x = x - x[mask].max()
    p = np.where(mask, np.exp(x), 0.0)
    return p / p.sum()


# -- checkpoints ---------------------------------------------------------------

def save_checkpoint(model: MPNN, path: str | Path, extra: dict | None = None) -> None:
    meta = {"version": CHECKPOINT_VERSION, "config": asdict(model.cfg), "extra": extra or {}}
    arrays = {f"param/{k}": v for k, v in model.values().items()}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_checkpoint(path: str | Path) -> tuple[MPNN, dict]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        params = {k[len("param/"):]: data[k] for k in data.files if k.startswith("param/")}
    return MPNN(MPNNConfig(**meta["config"]), params), meta.get("extra", {})
