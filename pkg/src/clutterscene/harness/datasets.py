"""On-disk formats for scene-graph datasets and behaviour-cloning pairs."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

import numpy as np

from ..agents.explore import BCSample
from ..envs import ActionMask
from ..scenegraph import FeatureGraph, SceneGraph, deserialize_dataset, serialize_dataset

BC_FORMAT = "bc-pairs"
BC_VERSION = 1


def save_dataset(graphs: Iterable[SceneGraph], path: str | Path) -> None:
    Path(path).write_text(serialize_dataset(list(graphs)))


def read_dataset(path: str | Path) -> list[SceneGraph]:
    return deserialize_dataset(Path(path).read_text())


def _sample_dict(s: BCSample) -> dict:
    fg, m = s.obs, s.mask
    return {
        "nodes": fg.nodes.tolist(), "edges": fg.edges.tolist(),
        "senders": fg.senders.tolist(), "receivers": fg.receivers.tolist(), "node_ids": list(fg.node_ids),
        "pick_ids": list(m.pick_ids), "place_ids": list(m.place_ids), "mask": m.mask.astype(int).tolist(),
        "action": list(s.action),
    }


def _sample_from(d: dict) -> BCSample:
    nodes = np.asarray(d["nodes"], dtype=float)
    edges = np.asarray(d["edges"], dtype=float)
    if edges.size == 0:
        edges = edges.reshape(0, 1)
    fg = FeatureGraph(nodes, edges, np.asarray(d["senders"], dtype=np.int64),
                      np.asarray(d["receivers"], dtype=np.int64), tuple(d["node_ids"]))
    mask = ActionMask(tuple(d["pick_ids"]), tuple(d["place_ids"]),
                      np.asarray(d["mask"], dtype=bool).reshape(len(d["pick_ids"]), len(d["place_ids"])))
    return BCSample(fg, mask, tuple(d["action"]))


def dump_bc(samples: Iterable[BCSample]) -> str:
    lines = [json.dumps({"format": BC_FORMAT, "version": BC_VERSION})]
    lines += [json.dumps(_sample_dict(s), separators=(",", ":")) for s in samples]
    return "\n".join(lines) + "\n"


def load_bc(text: str) -> list[BCSample]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty behaviour-cloning file")
    head = json.loads(lines[0])
    if head.get("format") != BC_FORMAT or head.get("version") != BC_VERSION:
        raise ValueError(f"not a {BC_FORMAT} v{BC_VERSION} file")
    return [_sample_from(json.loads(ln)) for ln in lines[1:]]


def save_bc(samples: Iterable[BCSample], path: str | Path) -> None:
    Path(path).write_text(dump_bc(samples))


def read_bc(path: str | Path) -> list[BCSample]:
    return load_bc(Path(path).read_text())


def split(items: list, held_out: float, seed: int) -> tuple[list, list]:
    """Seeded shuffle then split off a ``held_out`` fraction."""
    order = np.random.default_rng(seed).permutation(len(items))
    k = int(round(len(items) * held_out))
    return [items[i] for i in order[k:]], [items[i] for i in order[:k]]
