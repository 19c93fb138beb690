import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clutterscene.grammar import (
    RewriteError, RuleParseError, apply_rule, default_rule_set, feasible_mask, find_matches, first_match,
    parse_rule_set, parse_rules, render_rules, shipped_rules_text,
)
from clutterscene.grammar.engine import Match
from clutterscene.physics import load_catalog
from clutterscene.scenegraph import PRIMITIVE, is_fully_terminal, orientation, tray_graph, validate

from .conftest import bridge_graph, random_graph


def test_default_and_extended_sizes(rules):
    assert len(rules) == 30
    assert len(default_rule_set(load_catalog(extended=True))) == 49


def test_rule_names(rules):
    names = rules.names
    for n in ["drop_object", "stack_object", "end", "insert_cracker_box", "insert_meta_pbox_1", "orient_0"]:
        assert n in names
    assert len(set(names)) == len(names)


def test_shipped_text_matches_rendered(catalog):
    assert shipped_rules_text() == render_rules(catalog)
    assert shipped_rules_text(extended=True) == render_rules(load_catalog(extended=True))


def test_start_graph_only_allows_drop(rules):
    mask = feasible_mask(tray_graph(), rules)
    assert [rules[i].name for i in np.flatnonzero(mask)] == ["drop_object"]


def test_stack_object_matches_on_start_graph(rules):
    start, _ = bridge_graph(rules)
    assert len(find_matches(start, rules.rule("stack_object"))) == 2


def test_bridge_replay(rules):
    t0 = time.perf_counter()
    _, g = bridge_graph(rules)
    assert time.perf_counter() - t0 < 1.0
    assert is_fully_terminal(g) and validate(g).ok
    assert len(g.object_ids()) == 5
    assert g.count("MetaGroup") == 1


def test_orientation_rule_relabels_edge(rules):
    start, _ = bridge_graph(rules)
    rule = rules.rule("orient_4")
    m = first_match(start, rule)
    out = apply_rule(start, rule, m)
    assert out.edge(m["a"], m["b"]).label == orientation(4)
    assert start.edge(m["a"], m["b"]).label == PRIMITIVE


def test_stale_match_rejected(rules):
    g = tray_graph()
    with pytest.raises(RewriteError):
        apply_rule(g, rules.rule("end"), Match((("s", 0),)))


def test_dsl_round_trip_and_errors(catalog):
    text = render_rules(catalog)
    again = parse_rule_set(text, object_names=catalog.object_names, meta_names=catalog.meta_names)
    assert again.names == default_rule_set(catalog).names
    with pytest.raises(RuleParseError) as err:
        parse_rules("rule broken { lhs { node a: Tray } }")
    assert err.value.line == 1
    with pytest.raises(Exception):
        parse_rule_set("rule x { lhs { node s: ObjectSlot; } rhs { node s: Object(unicorn); } keep s; }",
                       object_names=catalog.object_names, meta_names=catalog.meta_names)


graph_params = st.tuples(st.integers(0, 10_000), st.integers(0, 20))


@settings(max_examples=50, deadline=None)
@given(graph_params, st.integers(0, 10_000))
def test_rewrite_valid_local_and_counted(rules, params, pick):
    g = random_graph(rules, *params)
    rng = np.random.default_rng(pick)
    idx = np.flatnonzero(feasible_mask(g, rules))
    rule = rules[int(rng.choice(idx))]
    matches = find_matches(g, rule)
    m = matches[int(rng.integers(len(matches)))]
    out = apply_rule(g, rule, m)
    assert validate(out).ok
    # node count arithmetic
    assert len(out.nodes) == len(g.nodes) - len(rule.deleted_nodes) + len(rule.fresh_nodes)
    # locality: untouched nodes and the edges among them are identical
    image = m.image()
    for n in g.nodes:
        if n.id not in image:
            assert out.node(n.id) == n
    before = {e for e in g.edges if e.parent not in image and e.child not in image}
    after = {e for e in out.edges if e.parent not in image and e.child not in image}
    assert before == after
    # slot elimination
    if rule.name.startswith("insert_") or rule.name == "end":
        assert out.count("ObjectSlot") == g.count("ObjectSlot") - 1
    # fresh ids never reuse old ones
    assert all(i >= g.next_id for i in set(out.ids()) - set(g.ids()))


@settings(max_examples=50, deadline=None)
@given(graph_params)
def test_feasible_mask_agrees_with_exhaustive_matching(rules, params):
    g = random_graph(rules, *params)
    mask = feasible_mask(g, rules)
    for i, rule in enumerate(rules):
        assert mask[i] == (len(find_matches(g, rule)) > 0)
