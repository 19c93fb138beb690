import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clutterscene.neural import (
    MPNN, SGD, Adam, MPNNConfig, StepDecay, batch_graphs, clip_by_global_norm, load_checkpoint,
    make_optimizer, masked_softmax, save_checkpoint,
)
from clutterscene.neural import autodiff as ad
from clutterscene.scenegraph import FeatureGraph

from .oracles.mpnn_reference import reference_forward


def numeric_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        up = f(x)
        x[i] = old - h
        down = f(x)
        x[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def check_op(build, *shapes, seed=0, tol=1e-6):
    """``build(*tensors)`` -> tensor; compares tape gradients of a random projection with FD."""
    rng = np.random.default_rng(seed)
    xs = [rng.normal(size=s) for s in shapes]
    w = None

    def loss_value(*vals):
        nonlocal w
        out = build(*[ad.constant(v) for v in vals]).value
        if w is None:
            w = np.random.default_rng(seed + 1).normal(size=out.shape)
        return float((out * w).sum())

    loss_value(*xs)
    params = [ad.parameter(x.copy()) for x in xs]
    out = build(*params)
    ad.tsum(out * ad.constant(w)).backward()
    for i, p in enumerate(params):
        def f(v, i=i):
            vals = list(xs)
            vals[i] = v
            return loss_value(*vals)
        np.testing.assert_allclose(p.grad, numeric_grad(f, xs[i].copy()), rtol=tol, atol=tol)


def test_elementwise_ops():
    check_op(lambda a, b: a * b + a - b, (3, 4), (3, 4))
    check_op(lambda a: ad.exp(a), (5,))
    check_op(lambda a: ad.log(ad.exp(a) + 1.0), (5,))
    check_op(lambda a: ad.square(a), (2, 3))
    check_op(lambda a: ad.leaky_relu(a, 0.1), (20,))
    check_op(lambda a, b: a + b, (3, 4), (4,))  # broadcasting


def test_structural_ops():
    check_op(lambda a, b: ad.matmul(a, b), (3, 4), (4, 2))
    check_op(lambda a, b: ad.concat([a, b], axis=1), (3, 2), (3, 5))
    check_op(lambda a: ad.take(a, np.array([0, 2, 2, 1])), (3, 2))
    check_op(lambda a: ad.reshape(a, (-1,)), (3, 2))
    check_op(lambda a: ad.tsum(a, axis=0), (3, 2))
    check_op(lambda a: ad.mean(a), (3, 2))
    check_op(lambda a: ad.where(np.array([True, False, True]), a, 0.0), (3,))


def test_segment_ops():
    segs = np.array([0, 0, 1, 2, 2, 2])
    check_op(lambda a: ad.segment_sum(a, segs, 4), (6, 2))
    check_op(lambda a: ad.segment_max(a, segs, 4), (6, 2))
    check_op(lambda a: ad.segment_softmax(a, segs, 3), (6, 1))
    mask = np.array([True, True, False, True, True, False])
    check_op(lambda a: ad.where(mask, ad.segment_log_softmax(a, segs, 3, mask), 0.0), (6,))
    check_op(lambda a: ad.log_softmax(a), (5,))
    check_op(lambda a: ad.logsumexp(a), (2, 5))


def test_segment_max_tie_goes_to_lowest_index():
    a = ad.parameter(np.array([[1.0], [3.0], [3.0], [0.5]]))
    out = ad.segment_max(a, np.array([0, 0, 0, 1]), 3)
    np.testing.assert_array_equal(out.value[:, 0], [3.0, 0.5, 0.0])  # empty segment -> 0
    ad.tsum(out).backward()
    np.testing.assert_array_equal(a.grad[:, 0], [0.0, 1.0, 0.0, 1.0])


def test_gradient_accumulates_over_reuse():
    x = ad.parameter(np.array([2.0]))
    (x * x + x).backward()
    assert x.grad[0] == pytest.approx(5.0)


def random_graph(rng, n, node_in, edge_in, m=None):
    m = int(rng.integers(1, 3 * n)) if m is None else m
    s, r = rng.integers(0, n, m), rng.integers(0, n, m)
    keep = s != r
    return FeatureGraph(rng.normal(size=(n, node_in)), rng.normal(size=(int(keep.sum()), edge_in)),
                        s[keep], r[keep], tuple(range(n)))


CFG = MPNNConfig(node_in=6, edge_in=3, n_rules=5, node_heads=True, value_head=True)


def test_forward_matches_reference():
    rng = np.random.default_rng(0)
    model = MPNN(CFG, seed=3)
    graphs = [random_graph(rng, n, 6, 3) for n in (1, 4, 7)]
    batch = batch_graphs(graphs)
    out = model(batch)
    params = {k: v[None] for k, v in model.values().items()}
    ref = reference_forward(params, batch.nodes, batch.edges, batch.senders, batch.receivers,
                            batch.node_graph, batch.n_graphs, CFG)
    for k in ["nodes", "global", "q", "pick", "place", "floor", "value"]:
        np.testing.assert_allclose(out[k].value, ref[k][0], rtol=1e-12, atol=1e-12)


def test_batching_equals_separate_calls():
    rng = np.random.default_rng(1)
    model = MPNN(CFG, seed=0)
    graphs = [random_graph(rng, n, 6, 3) for n in (3, 5)]
    joint = model(graphs)
    for b, g in enumerate(graphs):
        single = model([g])
        np.testing.assert_allclose(joint["q"].value[b], single["q"].value[0], atol=1e-12)
        lo, hi = sum(x.n_nodes for x in graphs[:b]), sum(x.n_nodes for x in graphs[:b + 1])
        np.testing.assert_allclose(joint["pick"].value[lo:hi], single["pick"].value, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 8))
def test_permutation_equivariance(seed, n):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, 6, 3)
    perm = rng.permutation(n)
    inv = np.argsort(perm)
    pg = FeatureGraph(g.nodes[perm], g.edges, inv[g.senders], inv[g.receivers], tuple(range(n)))
    model = MPNN(CFG, seed=seed)
    a, b = model([g]), model([pg])
    np.testing.assert_allclose(b["pick"].value, a["pick"].value[perm], atol=1e-10)
    np.testing.assert_allclose(b["q"].value, a["q"].value, atol=1e-10)
    np.testing.assert_allclose(b["value"].value, a["value"].value, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 9))
def test_attention_is_a_simplex(seed, n):
    rng = np.random.default_rng(seed)
    model = MPNN(CFG, seed=seed)
    for att in model([random_graph(rng, n, 6, 3)])["attention"]:
        assert np.all(att.value >= 0)
        assert abs(att.value.sum() - 1.0) <= 1e-12


def test_forward_deterministic_and_width_checked():
    rng = np.random.default_rng(2)
    g = random_graph(rng, 4, 6, 3)
    model = MPNN(CFG, seed=1)
    np.testing.assert_array_equal(model([g])["q"].value, model([g])["q"].value)
    with pytest.raises(ValueError):
        model([random_graph(rng, 4, 5, 3)])


def test_masked_softmax():
    p = masked_softmax(np.array([1.0, 2.0, 100.0]), np.array([True, True, False]))
    assert p[2] == 0.0
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert p[1] / p[0] == pytest.approx(np.e)


def test_checkpoint_round_trip(tmp_path):
    model = MPNN(CFG, seed=4)
    save_checkpoint(model, tmp_path / "m.npz", {"note": "x"})
    again, extra = load_checkpoint(tmp_path / "m.npz")
    assert extra == {"note": "x"} and again.cfg == CFG
    for k, v in model.values().items():
        np.testing.assert_array_equal(again.values()[k], v)


def test_parameter_mismatch_rejected():
    params = MPNN(CFG).values()
    params.pop("head_q.W")
    with pytest.raises(ValueError):
        MPNN(CFG, params)


def test_step_decay():
    s = StepDecay(1e-3, 10, 0.5)
    assert s(0) == s(9) == 1e-3
    assert s(10) == 5e-4 and s(25) == 2.5e-4


def test_sgd_and_adam_minimise_quadratic():
    target = np.array([1.0, -2.0])
    for opt in (SGD(StepDecay(0.1, 10**9)), SGD(StepDecay(0.05, 10**9), momentum=0.9), Adam(StepDecay(0.05, 10**9))):
        p = {"x": np.zeros(2)}
        for _ in range(2000):
            p = opt.step(p, {"x": 2 * (p["x"] - target)})
        np.testing.assert_allclose(p["x"], target, atol=1e-4)


def test_adam_first_step_is_lr_sized():
    p = Adam(StepDecay(0.01, 10**9)).step({"x": np.zeros(3)}, {"x": np.array([1e-3, -5.0, 2.0])})
    np.testing.assert_allclose(np.abs(p["x"]), 0.01, rtol=1e-4)


def test_non_finite_gradient_raises():
    with pytest.raises(FloatingPointError):
        SGD().step({"x": np.zeros(1)}, {"x": np.array([np.nan])})
    with pytest.raises(ValueError):
        make_optimizer("rmsprop", StepDecay())


def test_clip_by_global_norm():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    c = clip_by_global_norm(g, 1.0)
    assert np.sqrt(c["a"] ** 2 + c["b"] ** 2)[0] == pytest.approx(1.0)
    assert clip_by_global_norm(g, 10.0) is g
