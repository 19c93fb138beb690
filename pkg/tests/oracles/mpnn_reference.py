"""Independent straight-line forward pass of the message-passing network.

Written directly in numpy (no tape) and vectorised over a leading axis of
parameter sets, so finite differences for thousands of perturbed
parameters run in one call. Only used as a test oracle.
"""

import numpy as np


def _lrelu(x, slope):
    return np.where(x > 0, x, slope * x)


def _lin(x, params, name):
    w, b = params[name + ".W"], params[name + ".b"]
    if w.shape[0] == 1:
        # shared weights: one flat GEMM over every parameter set
        y = (x.reshape(-1, x.shape[-1]) @ w[0]).reshape(x.shape[:-1] + (w.shape[-1],))
    else:
        y = np.matmul(x, w)
    return y + b[:, None, :]


def reference_forward(params, nodes, edges, senders, receivers, node_graph, n_graphs, cfg):
    """``params[k]`` has shape ``(P,) + shape_k`` (P may be 1 and broadcasts)."""
    s = cfg.slope
    n = nodes.shape[0]
    h = _lrelu(_lin(nodes[None], params, "embed_node"), s)
    e = _lrelu(_lin(edges[None], params, "embed_edge"), s)
    P = max(v.shape[0] for v in params.values())
    h = np.broadcast_to(h, (P,) + h.shape[1:])
    e = np.broadcast_to(e, (P,) + e.shape[1:])
    g = np.zeros((P, n_graphs, cfg.global_dim))
    for t in range(cfg.mp_steps):
        pre = f"step{t}."
        msg = _lrelu(_lin(np.concatenate([e, h[:, senders]], axis=-1), params, pre + "msg"), s)
        m = np.zeros((P, n, cfg.node_dim))
        for v in range(n):
            rows = np.flatnonzero(receivers == v)
            if len(rows):
                m[:, v] = msg[:, rows].max(axis=1)
        upd = _lrelu(_lin(np.concatenate([h, m, g[:, node_graph]], axis=-1), params, pre + "agg"), s)
        h = h + upd
        logits = _lin(h, params, pre + "att")[..., 0]
        att = np.zeros_like(logits)
        for b in range(n_graphs):
            rows = np.flatnonzero(node_graph == b)
            z = np.exp(logits[:, rows] - logits[:, rows].max(axis=1, keepdims=True))
            att[:, rows] = z / z.sum(axis=1, keepdims=True)
        feat = _lrelu(_lin(h, params, pre + "feat"), s)
        readout = np.zeros((P, n_graphs, cfg.global_dim))
        for b in range(n_graphs):
            rows = np.flatnonzero(node_graph == b)
            readout[:, b] = (att[:, rows, None] * feat[:, rows]).sum(axis=1)
        g = g + _lrelu(_lin(np.concatenate([g, readout], axis=-1), params, pre + "glb"), s)
    out = {"nodes": h, "global": g}
    if cfg.n_rules:
        out["q"] = _lin(g, params, "head_q")
    if cfg.node_heads:
        out["pick"] = _lin(h, params, "head_pick")[..., 0]
        out["place"] = _lin(h, params, "head_place")[..., 0]
        out["floor"] = _lin(g, params, "head_floor")[..., 0]
    if cfg.value_head:
        out["value"] = _lin(g, params, "head_value")[..., 0]
    return out


def reference_loss(params, batch, cfg, coeffs):
    """Fixed random linear functional of every head output; shape ``(P,)``."""
    out = reference_forward(params, batch.nodes, batch.edges, batch.senders, batch.receivers,
                            batch.node_graph, batch.n_graphs, cfg)
    total = 0.0
    for k, c in coeffs.items():
        total = total + (out[k] * c[None]).reshape(out[k].shape[0], -1).sum(axis=1)
    return total


def finite_difference_grads(values, batch, cfg, coeffs, h=1e-6, chunk=1024):
    """Central differences for every scalar parameter."""
    base = {k: v[None] for k, v in values.items()}
    grads = {}
    for name, v in values.items():
        flat = v.size
        g = np.empty(flat)
        for lo in range(0, flat, chunk):
            idx = np.arange(lo, min(flat, lo + chunk))
            k = len(idx)
            pert = np.repeat(v.reshape(1, -1), 2 * k, axis=0)
            pert[np.arange(k), idx] += h
            pert[k + np.arange(k), idx] -= h
            params = dict(base)
            params[name] = pert.reshape((2 * k,) + v.shape)
            loss = reference_loss(params, batch, cfg, coeffs)
            g[idx] = (loss[:k] - loss[k:]) / (2 * h)
        grads[name] = g.reshape(v.shape)
    return grads
