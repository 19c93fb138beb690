import numpy as np
import pytest
from hypothesis import settings

from clutterscene.grammar import apply_rule, default_rule_set, feasible_mask, find_matches
from clutterscene.physics import load_catalog
from clutterscene.scenegraph import tray_graph

settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")


@pytest.fixture(scope="session")
def catalog():
    return load_catalog()


@pytest.fixture(scope="session")
def rules(catalog):
    return default_rule_set(catalog)


def random_graph(rules, seed: int, steps: int):
    """Apply ``steps`` random feasible rules (random match too) from the tray graph."""
    rng = np.random.default_rng(seed)
    g = tray_graph()
    for _ in range(steps):
        idx = np.flatnonzero(feasible_mask(g, rules))
        rule = rules[int(rng.choice(idx))]
        matches = find_matches(g, rule)
        g = apply_rule(g, rule, matches[int(rng.integers(len(matches)))])
    return g


def bridge_graph(rules):
    """Soup can under a sugar box, then a cracker box bridged over two pudding boxes."""
    g = tray_graph()

    def use(name, host=None):
        nonlocal g
        rule = rules.rule(name)
        ms = find_matches(g, rule)
        if host is not None:
            ms = [m for m in ms if host in m.image()]
        g = apply_rule(g, rule, ms[0])

    for name in ["drop_object", "insert_tomato_soup_can", "stack_object", "insert_sugar_box"]:
        use(name)
    start = g
    use("drop_object")
    use("stack_object", host=3)
    use("insert_meta_pbox_1", host=3)
    slot = next(n.id for n in g.nodes if n.kind.tag == "ObjectSlot")
    use("insert_cracker_box", host=slot)
    return start, g


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
