"""Slow, loop-based model definitions used as test oracles.

Written directly from the per-node formulas, sharing no code with the
package's batched kernels.
"""

import math

import numpy as np


def act(name, x):
    x = np.asarray(x, dtype=float)
    if name == "sigmoid":
        return np.array([1.0 / (1.0 + math.exp(-t)) for t in x])
    if name == "tanh":
        return np.tanh(x)
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "relu_normalize":
        r = np.maximum(x, 0.0)
        nrm = math.sqrt(float(np.sum(r * r)))
        return r / nrm if nrm > 0 else r
    if name == "linear":
        return x.copy()
    raise ValueError(name)


def leaky(x):
    return x if x > 0 else 0.2 * x


def node_layer(variant, activation, W, a, b, z, nbrs, deg, v):
    """Layer output for node ``v`` given previous embeddings ``z`` (dict or array)."""
    N = nbrs[v]
    if variant == "sage_gcn":
        h = sum(z[u] / deg[v] for u in N)
        return act(activation, W @ h)
    if variant == "sage_mean":
        h = sum(z[u] / deg[v] for u in N)
        return act(activation, W @ np.concatenate([z[v], h]))
    if variant == "gcn":
        h = sum(z[u] / math.sqrt(deg[v] * deg[u]) for u in N)
        return act(activation, W @ h)
    if variant == "gat":
        d = W.shape[0]
        scores = [leaky(float(a[:d] @ (W @ z[v]) + a[d:] @ (W @ z[u]))) for u in N]
        m = max(scores)
        w = [math.exp(s - m) for s in scores]
        tot = sum(w)
        h = sum((wi / tot) * z[u] for wi, u in zip(w, N))
        return act(activation, W @ h)
    if variant == "sage_pool":
        return np.max([act(activation, W @ z[u] + b) for u in N], axis=0)
    raise ValueError(variant)


def embed_all(nbrs, X, variant, activation, weights, attention=None, pool_bias=None):
    """Every node's final embedding, layer by layer over all nodes."""
    n = len(nbrs)
    deg = [len(N) for N in nbrs]
    z = [np.asarray(X[v], dtype=float) for v in range(n)]
    for l, W in enumerate(weights):
        a = None if attention is None else attention[l]
        b = None if pool_bias is None else pool_bias[l]
        z = [node_layer(variant, activation, W, a, b, z, nbrs, deg, v) for v in range(n)]
    return np.array(z)


def neighbor_lists(g):
    return [list(map(int, g.neighbors(v))) for v in range(g.n_nodes)]


def central_difference(f, params, step=1e-5):
    """Jacobian of ``f(params) -> vector`` by central differences, shape ``(d_out, n_params)``."""
    flat = params.ravel()
    cols = []
    for i in range(len(flat)):
        up, dn = flat.copy(), flat.copy()
        up[i] += step
        dn[i] -= step
        cols.append((f(params.with_flat(up)) - f(params.with_flat(dn))) / (2 * step))
    return np.column_stack(cols)
