"""Attributed scene graphs shared by the grammar, physics, perception and encoders.

A scene graph is a DAG rooted at a single ``Tray`` node. Nodes carry a kind
(terminal or the single non-terminal ``ObjectSlot``), simulation/visibility
flags and an optional pose; edges carry a support label.

Document format (one JSON value per line)::

    {"format": "scenegraph", "version": 1, "next_id": 7, "nodes": 3, "edges": 2}
    {"id": 0, "kind": "Tray", "is_simulated": false, "is_seen": false, "position": null, "quat": null}
    ...
    {"parent": 0, "child": 1, "label": "Orientation(3)"}

Nodes are sorted by id and edges by ``(parent, child)`` in canonical form.
A dataset file is a ``{"format": "scenegraph-dataset", "version": 1, "count": N}``
header followed by ``N`` documents.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

FORMAT_VERSION = 1
NUM_ORIENTATIONS = 10

TRAY = "Tray"
SLOT = "ObjectSlot"
END = "End"
OBJECT = "Object"
META = "MetaGroup"

_KIND_TAGS = (TRAY, SLOT, END, OBJECT, META)
_KIND_RE = re.compile(r"^(Tray|ObjectSlot|End|Object|MetaGroup)(?:\((\w+)\))?$")
_LABEL_RE = re.compile(r"^(Primitive|Member|Orientation)(?:\((\d+)\))?$")


class SceneGraphError(ValueError):
    """Raised when a document cannot be parsed or describes an invalid graph."""


@dataclass(frozen=True, order=True)
class NodeKind:
    tag: str
    name: str | None = None

    def __post_init__(self) -> None:
        if self.tag not in _KIND_TAGS:
            raise SceneGraphError(f"unknown node kind {self.tag!r}")
        needs_name = self.tag in (OBJECT, META)
        if needs_name != (self.name is not None):
            raise SceneGraphError(f"kind {self.tag} {'requires' if needs_name else 'takes no'} class name")

    @property
    def is_terminal(self) -> bool:
        return self.tag != SLOT

    def __str__(self) -> str:
        return f"{self.tag}({self.name})" if self.name is not None else self.tag

    @classmethod
    def parse(cls, text: str) -> "NodeKind":
        m = _KIND_RE.match(text.strip())
        if m is None:
            raise SceneGraphError(f"unknown node kind {text!r}")
        return cls(m.group(1), m.group(2))


TRAY_KIND = NodeKind(TRAY)
SLOT_KIND = NodeKind(SLOT)
END_KIND = NodeKind(END)


def object_kind(name: str) -> NodeKind:
    return NodeKind(OBJECT, name)


def meta_kind(name: str) -> NodeKind:
    return NodeKind(META, name)


@dataclass(frozen=True, order=True)
class EdgeLabel:
    """Support edge label.

    ``Primitive`` is an un-oriented support, ``Orientation(k)`` fixes the
    child's pose to global orientation ``k`` and ``Member`` ties a meta-group
    to one of its member objects.
    """

    tag: str
    k: int | None = None

    def __post_init__(self) -> None:
        if self.tag == "Orientation":
            if self.k is None or not 0 <= self.k < NUM_ORIENTATIONS:
                raise SceneGraphError(f"orientation index out of range: {self.k}")
        elif self.tag in ("Primitive", "Member"):
            if self.k is not None:
                raise SceneGraphError(f"{self.tag} takes no index")
        else:
            raise SceneGraphError(f"unknown edge label {self.tag!r}")

    def __str__(self) -> str:
        return f"Orientation({self.k})" if self.tag == "Orientation" else self.tag

    @classmethod
    def parse(cls, text: str) -> "EdgeLabel":
        m = _LABEL_RE.match(text.strip())
        if m is None:
            raise SceneGraphError(f"unknown edge label {text!r}")
        return cls(m.group(1), int(m.group(2)) if m.group(2) is not None else None)


PRIMITIVE = EdgeLabel("Primitive")
MEMBER = EdgeLabel("Member")


def orientation(k: int) -> EdgeLabel:
    return EdgeLabel("Orientation", k)


Vec3 = tuple[float, float, float]
Quat = tuple[float, float, float, float]


@dataclass(frozen=True)
class Node:
    id: int
    kind: NodeKind
    is_simulated: bool = False
    is_seen: bool = False
    position: Vec3 | None = None
    quat: Quat | None = None


class Edge(NamedTuple):
    parent: int
    child: int
    label: EdgeLabel


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class SceneGraph:
    """Immutable scene graph. Mutation happens by building a new graph."""

    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    next_id: int = 0
    _by_id: dict = field(default=None, init=False, repr=False, compare=False)
    _children: dict = field(default=None, init=False, repr=False, compare=False)
    _parents: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        nodes = tuple(sorted(self.nodes, key=lambda n: n.id))
        edges = tuple(sorted(self.edges, key=lambda e: (e.parent, e.child, str(e.label))))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        top = max((n.id for n in nodes), default=-1) + 1
        object.__setattr__(self, "next_id", max(self.next_id, top))
        object.__setattr__(self, "_by_id", {n.id: n for n in nodes})
        children: dict[int, list[Edge]] = {}
        parents: dict[int, list[Edge]] = {}
        for e in edges:
            children.setdefault(e.parent, []).append(e)
            parents.setdefault(e.child, []).append(e)
        object.__setattr__(self, "_children", children)
        object.__setattr__(self, "_parents", parents)

    # -- queries -----------------------------------------------------------
    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, node_id: int) -> bool:
        return node_id in self._by_id

    def node(self, node_id: int) -> Node:
        return self._by_id[node_id]

    def ids(self) -> list[int]:
        return [n.id for n in self.nodes]

    def children(self, node_id: int) -> list[Edge]:
        return self._children.get(node_id, [])

    def parents(self, node_id: int) -> list[Edge]:
        return self._parents.get(node_id, [])

    def edge(self, parent: int, child: int) -> Edge | None:
        for e in self.children(parent):
            if e.child == child:
                return e
        return None

    @property
    def root(self) -> int:
        trays = [n.id for n in self.nodes if n.kind.tag == TRAY]
        if len(trays) != 1:
            raise SceneGraphError(f"expected exactly one tray, found {len(trays)}")
        return trays[0]

    def count(self, tag: str) -> int:
        return sum(1 for n in self.nodes if n.kind.tag == tag)

    def object_ids(self) -> list[int]:
        return [n.id for n in self.nodes if n.kind.tag == OBJECT]

    def size(self) -> int:
        """Node count excluding the tray root."""
        return sum(1 for n in self.nodes if n.kind.tag != TRAY)

    def walk(self) -> Iterator[int]:
        """Depth-first pre-order from the root, each reachable node once."""
        seen: set[int] = set()
        stack = [self.root]
        while stack:
            nid = stack.pop()
            if nid in seen:
                continue
            seen.add(nid)
            yield nid
            stack.extend(e.child for e in reversed(self.children(nid)))

    # -- construction helpers ---------------------------------------------
    def replace_nodes(self, updates: Iterable[Node]) -> "SceneGraph":
        by_id = dict(self._by_id)
        for n in updates:
            by_id[n.id] = n
        return SceneGraph(tuple(by_id.values()), self.edges, self.next_id)

    def with_edges(self, edges: Iterable[Edge]) -> "SceneGraph":
        return SceneGraph(self.nodes, tuple(edges), self.next_id)

    def strip_poses(self) -> "SceneGraph":
        """Forget simulation state so a realizer re-samples every placement."""
        return SceneGraph(
            tuple(replace(n, is_simulated=False, position=None, quat=None) for n in self.nodes),
            self.edges,
            self.next_id,
        )


def tray_graph() -> SceneGraph:
    """Minimal start graph: a single tray root with id 0."""
    return SceneGraph((Node(0, TRAY_KIND),), (), 1)


def validate(graph: SceneGraph) -> ValidationReport:
    errors: list[str] = []
    ids = [n.id for n in graph.nodes]
    if len(set(ids)) != len(ids):
        errors.append("duplicate node id")
    known = set(ids)
    trays = [n.id for n in graph.nodes if n.kind.tag == TRAY]
    if len(trays) == 0:
        errors.append("missing tray")
    elif len(trays) > 1:
        errors.append(f"multiple trays: {trays}")
    pairs = set()
    for e in graph.edges:
        if e.parent not in known or e.child not in known:
            errors.append(f"dangling edge {e.parent}->{e.child}")
        if (e.parent, e.child) in pairs:
            errors.append(f"duplicate edge {e.parent}->{e.child}")
        pairs.add((e.parent, e.child))
        if e.parent == e.child:
            errors.append(f"self loop on {e.parent}")
    for t in trays:
        if graph.parents(t):
            errors.append(f"tray {t} has a parent")
    for n in graph.nodes:
        if n.is_simulated and not n.kind.is_terminal:
            errors.append(f"non-terminal node {n.id} marked simulated")
        if n.quat is not None and abs(float(np.linalg.norm(n.quat)) - 1.0) > 1e-9:
            errors.append(f"node {n.id} quaternion not unit")
    if _has_cycle(graph, known):
        errors.append("cycle")
    if len(trays) == 1:
        reach: set[int] = set()
        stack = [trays[0]]
        while stack:
            nid = stack.pop()
            if nid in reach:
                continue
            reach.add(nid)
            stack.extend(e.child for e in graph.children(nid) if e.child in known)
        orphans = sorted(known - reach)
        if orphans:
            errors.append(f"orphan nodes {orphans}")
    return ValidationReport(tuple(errors))


def _has_cycle(graph: SceneGraph, known: set[int]) -> bool:
    indeg = {i: 0 for i in known}
    for e in graph.edges:
        if e.parent in known and e.child in known:
            indeg[e.child] += 1
    queue = [i for i, d in indeg.items() if d == 0]
    visited = 0
    while queue:
        nid = queue.pop()
        visited += 1
        for e in graph.children(nid):
            if e.child in indeg:
                indeg[e.child] -= 1
                if indeg[e.child] == 0:
                    queue.append(e.child)
    return visited != len(known)


def is_fully_terminal(graph: SceneGraph) -> bool:
    return all(n.kind.is_terminal for n in graph.nodes)


# -- serialization ---------------------------------------------------------

def _node_record(n: Node) -> dict:
    return {
        "id": n.id,
        "kind": str(n.kind),
        "is_simulated": n.is_simulated,
        "is_seen": n.is_seen,
        "position": list(n.position) if n.position is not None else None,
        "quat": list(n.quat) if n.quat is not None else None,
    }


def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def serialize(graph: SceneGraph) -> str:
    report = validate(graph)
    if not report.ok:
        raise SceneGraphError("; ".join(report.errors))
    lines = [_dump({"format": "scenegraph", "version": FORMAT_VERSION, "next_id": graph.next_id,
                    "nodes": len(graph.nodes), "edges": len(graph.edges)})]
    lines += [_dump(_node_record(n)) for n in graph.nodes]
    lines += [_dump({"parent": e.parent, "child": e.child, "label": str(e.label)}) for e in graph.edges]
    return "\n".join(lines) + "\n"


def _parse_vec(value, size: int, where: str):
    if value is None:
        return None
    if not isinstance(value, list) or len(value) != size:
        raise SceneGraphError(f"{where}: expected list of {size} numbers")
    return tuple(float(v) for v in value)


def _read_document(lines: Sequence[str], start: int) -> tuple[SceneGraph, int]:
    try:
        header = json.loads(lines[start])
    except (IndexError, json.JSONDecodeError) as exc:
        raise SceneGraphError(f"line {start + 1}: bad header") from exc
    if header.get("format") != "scenegraph":
        raise SceneGraphError(f"line {start + 1}: not a scenegraph document")
    if header.get("version") != FORMAT_VERSION:
        raise SceneGraphError(f"line {start + 1}: unsupported version {header.get('version')}")
    n_nodes, n_edges = int(header["nodes"]), int(header["edges"])
    end = start + 1 + n_nodes + n_edges
    if end > len(lines):
        raise SceneGraphError(f"line {start + 1}: truncated document")
    nodes, edges = [], []
    for i in range(start + 1, end):
        try:
            rec = json.loads(lines[i])
            if i < start + 1 + n_nodes:
                nodes.append(Node(
                    id=int(rec["id"]),
                    kind=NodeKind.parse(rec["kind"]),
                    is_simulated=bool(rec["is_simulated"]),
                    is_seen=bool(rec["is_seen"]),
                    position=_parse_vec(rec.get("position"), 3, f"line {i + 1}"),
                    quat=_parse_vec(rec.get("quat"), 4, f"line {i + 1}"),
                ))
            else:
                edges.append(Edge(int(rec["parent"]), int(rec["child"]), EdgeLabel.parse(rec["label"])))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise SceneGraphError(f"line {i + 1}: malformed record") from exc
    ids = [n.id for n in nodes]
    if len(set(ids)) != len(ids):
        raise SceneGraphError("duplicate node id")
    graph = SceneGraph(tuple(nodes), tuple(edges), int(header.get("next_id", 0)))
    report = validate(graph)
    if not report.ok:
        raise SceneGraphError("; ".join(report.errors))
    return graph, end


def deserialize(text: str) -> SceneGraph:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    graph, end = _read_document(lines, 0)
    if end != len(lines):
        raise SceneGraphError(f"line {end + 1}: trailing content")
    return graph


def serialize_dataset(graphs: Sequence[SceneGraph]) -> str:
    head = _dump({"format": "scenegraph-dataset", "version": FORMAT_VERSION, "count": len(graphs)}) + "\n"
    return head + "".join(serialize(g) for g in graphs)


def deserialize_dataset(text: str) -> list[SceneGraph]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SceneGraphError("empty dataset")
    header = json.loads(lines[0])
    if header.get("format") != "scenegraph-dataset":
        raise SceneGraphError("line 1: not a scenegraph dataset")
    graphs, pos = [], 1
    for _ in range(int(header["count"])):
        g, pos = _read_document(lines, pos)
        graphs.append(g)
    if pos != len(lines):
        raise SceneGraphError(f"line {pos + 1}: trailing content")
    return graphs


# -- feature encoding ------------------------------------------------------

@dataclass(frozen=True)
class FeatureGraph:
    """Dense per-node/per-edge features plus connectivity.

    ``senders``/``receivers`` index rows of ``nodes``; ``node_ids`` maps rows
    back to scene-graph node ids.
    """

    nodes: np.ndarray
    edges: np.ndarray
    senders: np.ndarray
    receivers: np.ndarray
    node_ids: tuple[int, ...]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def row_of(self, node_id: int) -> int:
        return self.node_ids.index(node_id)


def kind_vocabulary(object_names: Sequence[str], meta_names: Sequence[str]) -> list[NodeKind]:
    """One-hot vocabulary for generation features, in a fixed order."""
    return ([TRAY_KIND, SLOT_KIND, END_KIND]
            + [object_kind(n) for n in object_names]
            + [meta_kind(n) for n in meta_names])


EDGE_VOCABULARY: tuple[EdgeLabel, ...] = (
    (PRIMITIVE,) + tuple(orientation(k) for k in range(NUM_ORIENTATIONS)) + (MEMBER,)
)
_EDGE_INDEX = {lab: i for i, lab in enumerate(EDGE_VOCABULARY)}


def generation_feature_width(vocab_size: int) -> int:
    # one-hot kind | is_simulated | position
    return vocab_size + 1 + 3


def encode_generation_features(graph: SceneGraph, vocabulary: Sequence[NodeKind]) -> FeatureGraph:
    index = {k: i for i, k in enumerate(vocabulary)}
    n = len(graph.nodes)
    width = generation_feature_width(len(vocabulary))
    x = np.zeros((n, width))
    rows = {}
    for r, node in enumerate(graph.nodes):
        rows[node.id] = r
        x[r, index[node.kind]] = 1.0
        if node.is_simulated and node.position is not None:
            x[r, len(vocabulary)] = 1.0
            x[r, len(vocabulary) + 1:] = node.position
    e = np.zeros((len(graph.edges), len(EDGE_VOCABULARY)))
    senders = np.empty(len(graph.edges), dtype=np.int64)
    receivers = np.empty(len(graph.edges), dtype=np.int64)
    for j, edge in enumerate(graph.edges):
        e[j, _EDGE_INDEX[edge.label]] = 1.0
        senders[j] = rows[edge.parent]
        receivers[j] = rows[edge.child]
    return FeatureGraph(x, e, senders, receivers, tuple(rows))


def exploration_feature_width(n_classes: int) -> int:
    # one-hot class | is_seen | position | quaternion
    return n_classes + 1 + 3 + 4


def encode_exploration_nodes(nodes: Sequence[Node], class_index: Mapping[str, int], *,
                             full_geometry: bool = False) -> np.ndarray:
    width = exploration_feature_width(len(class_index))
    x = np.zeros((len(nodes), width))
    c = len(class_index)
    for r, node in enumerate(nodes):
        x[r, class_index[node.kind.name]] = 1.0
        if node.is_seen:
            x[r, c] = 1.0
        if node.is_seen or full_geometry:
            if node.position is not None:
                x[r, c + 1:c + 4] = node.position
            if node.quat is not None:
                x[r, c + 4:c + 8] = node.quat
    return x


def encode_exploration_features(graph, class_index: Mapping[str, int], *,
                                full_geometry: bool = False) -> FeatureGraph:
    """Encode a full scene graph (privileged view) or an observation graph.

    Only object nodes become rows. Unseen nodes carry zero geometry unless
    ``full_geometry`` is set (the privileged view). For a scene graph, each
    object-object support relation becomes a pair of directed edges; an
    observation graph contributes its own (fully connected) edge list.
    """
    if isinstance(graph, SceneGraph):
        nodes = [graph.node(i) for i in graph.object_ids()]
        rows = {n.id: r for r, n in enumerate(nodes)}
        pairs = set()
        for e in graph.edges:
            if e.parent in rows and e.child in rows:
                pairs.add((rows[e.parent], rows[e.child]))
                pairs.add((rows[e.child], rows[e.parent]))
        pairs = sorted(pairs)
    else:
        nodes = list(graph.nodes)
        rows = {n.id: r for r, n in enumerate(nodes)}
        pairs = [(rows[s], rows[r]) for s, r in graph.edges]
    x = encode_exploration_nodes(nodes, class_index, full_geometry=full_geometry)
    senders = np.array([p[0] for p in pairs], dtype=np.int64)
    receivers = np.array([p[1] for p in pairs], dtype=np.int64)
    return FeatureGraph(x, np.ones((len(pairs), 1)), senders, receivers, tuple(rows))
