import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clutterscene.agents import (
    PRIVILEGED, STUDENT, A2CConfig, BCConfig, ExplorePolicy, LargestFirst, SoftQConfig, agreement,
    baseline_lf, baseline_re, baseline_rg, collect_bc_dataset, distill, exploration_model, featurize,
    generation_model, soft_value, softq_policy, train_a2c, train_softq,
)
from clutterscene.agents.explore import action_log_probs, bc_update, choose_actions, n_step_returns
from clutterscene.agents.softq import ReplayBuffer, softq_targets
from clutterscene.envs import ActionMask, ExplorationEnv, GenerationEnv, run_episode
from clutterscene.neural import batch_graphs

from .bandit import analytic_policy, train_bandit
from .conftest import bridge_graph


@pytest.fixture(scope="module")
def exp_env(catalog, rules):
    _, g = bridge_graph(rules)
    return ExplorationEnv([g], catalog)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=12), st.integers(0, 2**12 - 1), st.floats(0.01, 5.0))
def test_softq_policy_respects_mask(q, bits, alpha):
    q = np.array(q)
    mask = np.array([(bits >> i) & 1 for i in range(len(q))], dtype=bool)
    if not mask.any():
        mask[0] = True
    pi = softq_policy(q, mask, alpha)
    assert np.all(pi[~mask] == 0.0)
    assert pi.sum() == pytest.approx(1.0, abs=1e-12)
    v = soft_value(q[None], mask[None], alpha)[0]
    assert v >= q[mask].max() - 1e-9
    assert v == pytest.approx(alpha * np.log(np.exp((q[mask] - q[mask].max()) / alpha).sum()) + q[mask].max())


def test_replay_buffer_ring():
    buf = ReplayBuffer(3)
    for i in range(5):
        buf.add(None, i, 0.0, None, True, np.ones(1))
    assert len(buf) == 3
    assert sorted(t[1] for t in buf._data) == [2, 3, 4]
    with pytest.raises(ValueError):
        ReplayBuffer(0)


def test_terminal_targets_are_rewards(catalog, rules):
    env = GenerationEnv(rules, catalog, 3)
    model = generation_model(env, 0)
    from clutterscene.scenegraph import encode_generation_features, kind_vocabulary
    fg = encode_generation_features(env.reset(0).graph, kind_vocabulary(catalog.object_names, catalog.meta_names))
    batch = [(fg, 0, 0.7, fg, True, np.ones(len(rules), bool)), (fg, 0, -1.0, fg, True, np.ones(len(rules), bool))]
    np.testing.assert_allclose(softq_targets(model, batch, 0.2, 0.99), [0.7, -1.0])


def test_bandit_fixed_point_quick():
    pi, _, _ = train_bandit(updates=500)
    assert 0.5 * np.abs(pi - analytic_policy()).sum() < 0.02


def test_temperature_schedule():
    cfg = SoftQConfig(alpha=0.2, alpha_final=0.02, total_steps=100)
    assert cfg.temperature(0) == 0.2
    assert cfg.temperature(100) == pytest.approx(0.02)
    assert cfg.temperature(50) == pytest.approx(0.11)
    with pytest.raises(ValueError):
        SoftQConfig(alpha=0)


def test_baselines_pick_legal_actions(exp_env):
    rng = np.random.default_rng(0)
    mask = np.array([False, True, False, True])
    assert all(baseline_rg(mask, rng) in (1, 3) for _ in range(20))
    state, obs = exp_env.reset(0)
    m = exp_env.action_mask(state)
    for _ in range(20):
        assert m.allows(*baseline_re(m, rng))
    (x, y), moved = baseline_lf(state, m)
    areas = {i: state.scene.objects[i].footprint_area for i in state.visible}
    assert x == max(areas, key=areas.get) and moved == {x}
    with pytest.raises(ValueError):
        baseline_rg(np.zeros(3, bool), rng)


def test_largest_first_resets_between_episodes(exp_env):
    lf = LargestFirst()
    a, _ = run_episode(exp_env, lf, 0)
    b, _ = run_episode(exp_env, lf, 0)
    assert a == b


def test_n_step_returns():
    r = np.array([[1.0], [1.0]])
    d = np.array([[0.0], [0.0]])
    np.testing.assert_allclose(n_step_returns(r, d, np.array([0.0]), 0.9)[:, 0], [1.9, 1.0])
    d = np.array([[1.0], [0.0]])
    np.testing.assert_allclose(n_step_returns(r, d, np.array([10.0]), 0.5)[:, 0], [1.0, 6.0])


def test_action_distribution_normalised(catalog, exp_env):
    model = exploration_model(len(catalog.objects), 0)
    state, obs = exp_env.reset(1)
    for view in (PRIVILEGED, STUDENT):
        fg = featurize(exp_env, state, obs, view)
        mask = exp_env.action_mask(state)
        batch = batch_graphs([fg])
        out = model(batch)
        pairs = mask.pairs()
        total = 0.0
        for p in pairs:
            logp, _ = action_log_probs(out, batch, [fg], [mask], [p])
            total += float(np.exp(logp.value[0]))
        assert total == pytest.approx(1.0, abs=1e-10)
        rng = np.random.default_rng(0)
        for _ in range(10):
            assert mask.allows(*choose_actions(out, batch, [fg], [mask], rng)[0])
        with pytest.raises(ValueError):
            action_log_probs(out, batch, [fg], [mask], [(pairs[0][0], pairs[0][0])])


def test_bc_gradient_zero_when_expert_action_is_certain(catalog, exp_env):
    student = exploration_model(len(catalog.objects), 0, value_head=False)
    state, obs = exp_env.reset(1)
    fg = featurize(exp_env, state, obs, STUDENT)
    full = exp_env.action_mask(state)
    only = np.zeros_like(full.mask)
    only[0, 0] = True
    mask = ActionMask(full.pick_ids, full.place_ids, only)
    from clutterscene.agents import BCSample
    loss = bc_update(student, [BCSample(fg, mask, (full.pick_ids[0], full.place_ids[0]))])
    assert loss == pytest.approx(0.0, abs=1e-12)
    assert all(np.all(g == 0) for g in student.grads().values())


def test_training_is_reproducible(catalog, rules, exp_env):
    env = GenerationEnv(rules, catalog, 4)
    cfg = SoftQConfig(total_steps=120, learning_starts=40, batch_size=8, n_envs=2, target_sync=5, log_every=60)
    logs = [[], []]
    a = train_softq(env, cfg, 7, log=logs[0].append)
    b = train_softq(env, cfg, 7, log=logs[1].append)
    for k, v in a.values().items():
        np.testing.assert_array_equal(v, b.values()[k])
        assert np.all(np.isfinite(v))
    assert [l["loss"] for l in logs[0]] == [l["loss"] for l in logs[1]]
    acfg = A2CConfig(total_steps=64, n_envs=2, n_steps=4, log_every=32)
    t1 = train_a2c(exp_env, acfg, 3)
    t2 = train_a2c(exp_env, acfg, 3)
    for k, v in t1.values().items():
        np.testing.assert_array_equal(v, t2.values()[k])


def test_bc_pipeline_runs(catalog, exp_env):
    teacher = exploration_model(len(catalog.objects), 1)
    data = collect_bc_dataset(teacher, exp_env, 40, 0)
    assert len(data) == 40
    for s in data:
        assert s.action[0] in s.obs.node_ids
        assert s.mask.allows(*s.action)
    student = exploration_model(len(catalog.objects), 2, value_head=False)
    before = agreement(student, data)
    distill(student, data, BCConfig(epochs=15, batch_size=8, lr=3e-3), 0)
    assert agreement(student, data) >= before
    policy = ExplorePolicy(student, STUDENT)
    _, state = run_episode(exp_env, policy, 0)
    assert state.done
