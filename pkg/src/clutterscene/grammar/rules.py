"""Rule and rule-set types plus kind/label pattern constraints."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

from ..scenegraph import (
    EDGE_VOCABULARY, END_KIND, EdgeLabel, NodeKind, SceneGraph, SLOT_KIND, TRAY_KIND, is_fully_terminal,
    tray_graph,
)


class RuleError(ValueError):
    pass


@dataclass(frozen=True)
class KindPattern:
    """Accepts node kinds from a union of ``(tag, name)`` alternatives.

    ``name=None`` in an alternative for Object/MetaGroup is a class wildcard;
    ``any_kind`` accepts everything.
    """

    alternatives: frozenset[tuple[str, str | None]] = frozenset()
    any_kind: bool = False

    def accepts(self, kind: NodeKind) -> bool:
        if self.any_kind:
            return True
        return (kind.tag, kind.name) in self.alternatives or (kind.tag, None) in self.alternatives

    def __str__(self) -> str:
        if self.any_kind:
            return "Any"
        parts = []
        for tag, name in sorted(self.alternatives, key=lambda t: (t[0], t[1] or "")):
            if tag in ("Object", "MetaGroup"):
                parts.append(f"{tag}({name or '*'})")
            else:
                parts.append(tag)
        return "|".join(parts)


@dataclass(frozen=True)
class LabelPattern:
    tag: str | None = None  # None: any label
    k: int | None = None  # None with tag Orientation: any index

    def accepts(self, label: EdgeLabel) -> bool:
        if self.tag is None:
            return True
        if label.tag != self.tag:
            return False
        return self.k is None or label.k == self.k

    def __str__(self) -> str:
        if self.tag is None:
            return "*"
        if self.tag == "Orientation":
            return f"Orientation({'*' if self.k is None else self.k})"
        return self.tag


@dataclass(frozen=True)
class PatternEdge:
    source: str
    target: str
    label: LabelPattern


@dataclass(frozen=True)
class RhsEdge:
    source: str
    target: str
    label: EdgeLabel


@dataclass(frozen=True)
class Rule:
    name: str
    lhs_nodes: tuple[tuple[str, KindPattern], ...]
    lhs_edges: tuple[PatternEdge, ...]
    rhs_nodes: tuple[tuple[str, NodeKind | None], ...]
    rhs_edges: tuple[RhsEdge, ...]
    keep: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.lhs_nodes:
            raise RuleError(f"rule {self.name}: empty left-hand side")
        lhs = [n for n, _ in self.lhs_nodes]
        if len(set(lhs)) != len(lhs):
            raise RuleError(f"rule {self.name}: duplicate lhs node")
        for e in self.lhs_edges:
            if e.source not in lhs or e.target not in lhs:
                raise RuleError(f"rule {self.name}: lhs edge {e.source}->{e.target} references undeclared node")
        if len(set(self.keep)) != len(self.keep):
            raise RuleError(f"rule {self.name}: keep list not injective")
        for k in self.keep:
            if k not in lhs:
                raise RuleError(f"rule {self.name}: dangling interface reference {k!r}")
        rhs = [n for n, _ in self.rhs_nodes]
        if len(set(rhs)) != len(rhs):
            raise RuleError(f"rule {self.name}: duplicate rhs node")
        for n, kind in self.rhs_nodes:
            if n not in self.keep and n in lhs:
                raise RuleError(f"rule {self.name}: rhs node {n!r} shadows a deleted lhs node")
            if n not in self.keep and kind is None:
                raise RuleError(f"rule {self.name}: fresh node {n!r} needs a kind")
        endpoints = set(rhs) | set(self.keep)
        for e in self.rhs_edges:
            if e.source not in endpoints or e.target not in endpoints:
                raise RuleError(f"rule {self.name}: dangling interface reference in edge {e.source}->{e.target}")

    @property
    def interface_map(self) -> dict[str, str]:
        """RHS node name -> LHS node name for persisting nodes."""
        return {k: k for k in self.keep}

    @property
    def fresh_nodes(self) -> list[tuple[str, NodeKind]]:
        return [(n, k) for n, k in self.rhs_nodes if n not in self.keep]

    @property
    def deleted_nodes(self) -> list[str]:
        return [n for n, _ in self.lhs_nodes if n not in self.keep]

    def relabels(self) -> dict[str, NodeKind]:
        return {n: k for n, k in self.rhs_nodes if n in self.keep and k is not None}


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[Rule, ...]
    non_terminals: frozenset[NodeKind] = frozenset({SLOT_KIND})
    terminals: frozenset[NodeKind] = frozenset()
    edge_labels: tuple[EdgeLabel, ...] = EDGE_VOCABULARY
    start: SceneGraph = field(default_factory=tray_graph)

    def __post_init__(self) -> None:
        names = [r.name for r in self.rules]
        if len(set(names)) != len(names):
            raise RuleError("rule names must be unique")
        if not is_fully_terminal(self.start):
            raise RuleError("start graph must be fully terminal")

    def __len__(self) -> int:
        return len(self.rules)

    def __getitem__(self, i: int) -> Rule:
        return self.rules[i]

    def __iter__(self) -> Iterator[Rule]:
        return iter(self.rules)

    @property
    def names(self) -> list[str]:
        return [r.name for r in self.rules]

    def index(self, name: str) -> int:
        return self.names.index(name)

    def rule(self, name: str) -> Rule:
        return self.rules[self.index(name)]


def terminals_for(object_names, meta_names) -> frozenset[NodeKind]:
    return frozenset([TRAY_KIND, END_KIND]
                     + [NodeKind("Object", n) for n in object_names]
                     + [NodeKind("MetaGroup", m) for m in meta_names])
