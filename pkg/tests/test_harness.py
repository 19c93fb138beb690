import json

import numpy as np
import pytest

from clutterscene.envs import ExplorationEnv, GenerationEnv, replay
from clutterscene.grammar import apply_rule, find_matches
from clutterscene.harness import ConfigError, RunConfig, config_from_dict, load_config
from clutterscene.harness.cli import main
from clutterscene.harness.config import override
from clutterscene.harness.datasets import dump_bc, load_bc, read_dataset, save_dataset, split
from clutterscene.harness.evaluate import (
    episode_seed, eval_exploration, eval_generation, lf_factory, make_dataset, metrics_from_exploration_records,
    metrics_from_generation_records, re_factory, report, rg_factory,
)
from clutterscene.scenegraph import tray_graph

from .conftest import bridge_graph


@pytest.fixture(scope="module")
def exp_env(catalog, rules):
    _, g = bridge_graph(rules)
    return ExplorationEnv([g], catalog)


def test_config_defaults_and_overrides(tmp_path):
    cfg = RunConfig()
    assert cfg.eval.episodes == 500 and cfg.softq.total_steps == 100_000
    cfg2 = config_from_dict({"softq": {"alpha": 0.1}, "env": {"capacity": 4}})
    assert cfg2.softq.alpha == 0.1 and cfg2.env.capacity == 4
    assert override(cfg2, "softq", alpha=None) is cfg2
    assert override(cfg2, "softq", total_steps=5).softq.total_steps == 5
    with pytest.raises(ConfigError):
        config_from_dict({"softq": {"nope": 1}})
    with pytest.raises(ConfigError):
        config_from_dict({"reward": {"gamma": 2.0}})
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg2.to_dict()))
    assert load_config(p) == cfg2
    p.write_text("{")
    with pytest.raises(ConfigError):
        load_config(p)


def test_episode_seeds_distinct():
    assert len({episode_seed(0, k) for k in range(500)}) == 500


def test_one_node_generation_metrics(catalog, rules):
    env = GenerationEnv(rules, catalog, 1)
    m, _ = eval_generation(env, rg_factory, 5, 0)
    assert (m.mean_hidden, m.stability_rate, m.scenes) == (0.0, 1.0, 5)


def test_generation_metrics_from_records_and_replay(catalog, rules):
    env = GenerationEnv(rules, catalog, 6)
    m, records = eval_generation(env, rg_factory, 12, 3)
    assert 0.0 <= m.stability_rate <= 1.0
    assert metrics_from_generation_records(records) == m
    assert metrics_from_generation_records([replay(env, r) for r in records]) == m


def test_exploration_metrics(exp_env):
    m, records = eval_exploration(exp_env, re_factory, 10, 0)
    assert 0.0 <= m.success_rate <= 1.0
    assert m.objects_found <= m.mean_objects
    assert metrics_from_exploration_records([replay(exp_env, r) for r in records]) == m
    lf, _ = eval_exploration(exp_env, lf_factory, 10, 0)
    assert lf.success_rate == 1.0


def test_nothing_hidden_means_success(catalog, rules):
    g = tray_graph()
    for name in ("drop_object", "insert_tomato_soup_can"):
        rule = rules.rule(name)
        g = apply_rule(g, rule, find_matches(g, rule)[0])
    env = ExplorationEnv([g], catalog)
    m, records = eval_exploration(env, re_factory, 5, 0)
    assert m.success_rate == 1.0 and all(not r.steps for r in records)


def test_report_byte_identical(catalog, rules):
    env = GenerationEnv(rules, catalog, 4)
    texts = []
    for _ in range(2):
        m, _ = eval_generation(env, rg_factory, 4, 9)
        texts.append(report("generation", m, seed=9, env=env, config=RunConfig().to_dict()))
    assert texts[0] == texts[1]
    body = json.loads(texts[0])
    assert {"config_digest", "seed", "code_version", "metrics"} <= set(body)


def test_make_dataset_filter(catalog, rules, tmp_path):
    env = GenerationEnv(rules, catalog, 6)
    graphs, info = make_dataset(env, rg_factory, 3, 0, min_hidden=1, max_episodes=400)
    assert len(graphs) == 3 and info["kept"] == 3
    assert all(not n.is_simulated for g in graphs for n in g.nodes)
    save_dataset(graphs, tmp_path / "d.json")
    assert read_dataset(tmp_path / "d.json") == graphs


def test_bc_file_round_trip(catalog, exp_env):
    from clutterscene.agents import collect_bc_dataset, exploration_model
    data = collect_bc_dataset(exploration_model(len(catalog.objects), 0), exp_env, 6, 0)
    again = load_bc(dump_bc(data))
    for a, b in zip(data, again):
        assert a.action == b.action
        np.testing.assert_array_equal(a.obs.nodes, b.obs.nodes)
        np.testing.assert_array_equal(a.mask.mask, b.mask.mask)
    with pytest.raises(ValueError):
        load_bc('{"format": "other"}\n')
    train, held = split(list(range(10)), 0.3, 0)
    assert len(held) == 3 and sorted(train + held) == list(range(10))


# -- command line ------------------------------------------------------------------

def test_cli_usage_errors(capsys):
    assert main(["bogus"]) == 2
    assert main(["eval-gen", "--nodes", "x"]) == 2
    assert main(["eval-gen", "--frobnicate"]) == 2
    assert main(["--help"]) == 0


def test_cli_config_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"softq": {"alpha": -1}}')
    assert main(["--config", str(bad), "eval-gen"]) == 3
    assert main(["--config", str(tmp_path / "missing.json"), "eval-gen"]) == 3
    assert main(["--seed", "-1", "eval-gen"]) == 3


def test_cli_runtime_error(tmp_path):
    assert main(["--out", str(tmp_path), "eval-explore", "--dataset", str(tmp_path / "none.json")]) == 4
    assert main(["--out", str(tmp_path), "eval-gen", "--agent", "sg"]) == 4


def test_cli_pipeline(tmp_path, rules):
    out = str(tmp_path)
    assert main(["--out", out, "--seed", "1", "eval-gen", "--nodes", "4", "--episodes", "3"]) == 0
    first = (tmp_path / "eval-gen.json").read_text()
    assert main(["--out", out, "--seed", "1", "eval-gen", "--nodes", "4", "--episodes", "3"]) == 0
    assert (tmp_path / "eval-gen.json").read_text() == first
    assert main(["--out", out, "replay", "--records", str(tmp_path / "eval-gen.records.jsonl")]) == 0

    assert main(["--out", out, "make-dataset", "--nodes", "6", "--count", "2", "--min-hidden", "1"]) == 0
    ds = str(tmp_path / "dataset.json")
    assert main(["--out", out, "eval-explore", "--agent", "lf", "--dataset", ds, "--episodes", "2"]) == 0
    assert main(["--out", out, "replay", "--records", str(tmp_path / "eval-explore.records.jsonl"),
                 "--dataset", ds]) == 0

    cfg = tmp_path / "small.json"
    cfg.write_text(json.dumps({"a2c": {"n_envs": 2, "log_every": 16}, "softq": {"n_envs": 2, "learning_starts": 20,
                                                                               "batch_size": 4, "log_every": 20}}))
    base = ["--out", out, "--config", str(cfg)]
    assert main(base + ["gen-train", "--nodes", "4", "--steps", "40"]) == 0
    assert main(base + ["eval-gen", "--agent", "sg", "--checkpoint", str(tmp_path / "sg.npz"),
                        "--nodes", "4", "--episodes", "2"]) == 0
    assert main(base + ["gen-sample", "--nodes", "4", "--count", "2"]) == 0
    assert main(base + ["explore-train-privileged", "--dataset", ds, "--steps", "32"]) == 0
    assert main(base + ["collect-bc", "--dataset", ds, "--teacher", str(tmp_path / "teacher.npz"),
                        "--samples", "10"]) == 0
    assert main(base + ["distill", "--bc", str(tmp_path / "bc.jsonl"), "--epochs", "2"]) == 0
    assert main(base + ["eval-explore", "--agent", "se", "--checkpoint", str(tmp_path / "student.npz"),
                        "--dataset", ds, "--episodes", "2"]) == 0
    logs = (tmp_path / "gen-train.log.jsonl").read_text().splitlines()
    assert logs and {"step", "loss", "stability_rate"} <= set(json.loads(logs[0]))
    run = json.loads((tmp_path / "gen-train.config.json").read_text())
    assert run["seed"] == 0 and run["config"]["softq"]["batch_size"] == 4

    _, g = bridge_graph(rules)
    from clutterscene.scenegraph import serialize
    (tmp_path / "s.graph").write_text(serialize(g))
    assert main(["--out", out, "render", "--scene", str(tmp_path / "s.graph"), "--png", str(tmp_path / "o.png")]) == 0
    assert (tmp_path / "o.png").stat().st_size > 0
