"""Subgraph matching and rewrite application."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np

from ..scenegraph import Edge, Node, SceneGraph, SceneGraphError, validate
from .rules import Rule, RuleSet


class RewriteError(ValueError):
    pass


@dataclass(frozen=True)
class Match:
    """Injective embedding of a rule's LHS into a host graph."""

    assignment: tuple[tuple[str, int], ...]

    def __getitem__(self, name: str) -> int:
        return dict(self.assignment)[name]

    def as_dict(self) -> dict[str, int]:
        return dict(self.assignment)

    def image(self) -> set[int]:
        return {h for _, h in self.assignment}


def _pattern_order(rule: Rule) -> list[str]:
    """LHS nodes in BFS order over the (undirected) pattern edges."""
    names = [n for n, _ in rule.lhs_nodes]
    adj: dict[str, list[str]] = {n: [] for n in names}
    for e in rule.lhs_edges:
        adj[e.source].append(e.target)
        adj[e.target].append(e.source)
    order: list[str] = []
    for start in names:
        if start in order:
            continue
        queue = [start]
        order.append(start)
        while queue:
            cur = queue.pop(0)
            for nb in adj[cur]:
                if nb not in order:
                    order.append(nb)
                    queue.append(nb)
    return order


def iter_matches(graph: SceneGraph, rule: Rule) -> Iterator[Match]:
    """Yield matches lazily in deterministic order (lowest host ids first)."""
    order = _pattern_order(rule)
    kinds = dict(rule.lhs_nodes)
    host_ids = graph.ids()

    def candidates(name: str, assign: dict[str, int]) -> list[int]:
        # Prefer anchoring through an already-assigned neighbour.
        for e in rule.lhs_edges:
            if e.target == name and e.source in assign:
                return sorted(x.child for x in graph.children(assign[e.source]) if e.label.accepts(x.label))
            if e.source == name and e.target in assign:
                return sorted(x.parent for x in graph.parents(assign[e.target]) if e.label.accepts(x.label))
        return host_ids

    def consistent(name: str, host: int, assign: dict[str, int]) -> bool:
        if not kinds[name].accepts(graph.node(host).kind):
            return False
        for e in rule.lhs_edges:
            if e.source == name and e.target in assign:
                edge = graph.edge(host, assign[e.target])
            elif e.target == name and e.source in assign:
                edge = graph.edge(assign[e.source], host)
            elif e.source == name and e.target == name:
                edge = graph.edge(host, host)
            else:
                continue
            if edge is None or not e.label.accepts(edge.label):
                return False
        return True

    def extend(depth: int, assign: dict[str, int], used: set[int]):
        if depth == len(order):
            yield Match(tuple((n, assign[n]) for n, _ in rule.lhs_nodes))
            return
        name = order[depth]
        for host in candidates(name, assign):
            if host in used or not consistent(name, host, assign):
                continue
            assign[name] = host
            used.add(host)
            yield from extend(depth + 1, assign, used)
            del assign[name]
            used.discard(host)

    yield from extend(0, {}, set())


def find_matches(graph: SceneGraph, rule: Rule) -> list[Match]:
    return list(iter_matches(graph, rule))


def first_match(graph: SceneGraph, rule: Rule) -> Match | None:
    return next(iter_matches(graph, rule), None)


def is_valid_match(graph: SceneGraph, rule: Rule, match: Match) -> bool:
    assign = match.as_dict()
    if set(assign) != {n for n, _ in rule.lhs_nodes}:
        return False
    if len(set(assign.values())) != len(assign):
        return False
    for name, pat in rule.lhs_nodes:
        if assign[name] not in graph or not pat.accepts(graph.node(assign[name]).kind):
            return False
    for e in rule.lhs_edges:
        edge = graph.edge(assign[e.source], assign[e.target])
        if edge is None or not e.label.accepts(edge.label):
            return False
    return True


def apply_rule(graph: SceneGraph, rule: Rule, match: Match) -> SceneGraph:
    """Replace the matched LHS image by the rule's RHS; the input is untouched.

    Deleted LHS nodes lose all incident edges, LHS edges between kept nodes
    are removed, fresh RHS nodes get new ids and RHS edges are added.
    """
    if not is_valid_match(graph, rule, match):
        raise RewriteError(f"stale or invalid match for rule {rule.name}")
    assign = match.as_dict()
    deleted = {assign[n] for n in rule.deleted_nodes}
    matched_edges = {(assign[e.source], assign[e.target]) for e in rule.lhs_edges}
    nodes = {n.id: n for n in graph.nodes if n.id not in deleted}
    for name, kind in rule.relabels().items():
        host = assign[name]
        if nodes[host].kind != kind:
            nodes[host] = replace(nodes[host], kind=kind, is_simulated=False, position=None, quat=None)
    ids = dict(assign)
    next_id = graph.next_id
    for name, kind in rule.fresh_nodes:
        ids[name] = next_id
        nodes[next_id] = Node(next_id, kind)
        next_id += 1
    edges = [e for e in graph.edges
             if e.parent not in deleted and e.child not in deleted and (e.parent, e.child) not in matched_edges]
    for e in rule.rhs_edges:
        edges.append(Edge(ids[e.source], ids[e.target], e.label))
    try:
        out = SceneGraph(tuple(nodes.values()), tuple(edges), next_id)
    except SceneGraphError as exc:
        raise RewriteError(str(exc)) from exc
    report = validate(out)
    if not report.ok:
        raise RewriteError(f"rule {rule.name} produced an invalid graph: {'; '.join(report.errors)}")
    return out


def feasible_mask(graph: SceneGraph, rules: RuleSet) -> np.ndarray:
    return np.array([first_match(graph, r) is not None for r in rules], dtype=bool)
