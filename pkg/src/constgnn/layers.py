"""Batched layer kernels shared by the exact and the sampling engines.

A layer maps the previous embeddings ``z_prev`` (one row per source slot) to
new embeddings for a batch of target rows. How targets see their sources is
carried by an aggregator from :mod:`constgnn.graph`:

* the exact engine passes the receptive-field adjacency, weighted by the
  model's message normalization;
* the sampling engine passes the sampled multiset of each call, weighted by
  ``deg(v) / r`` times the message normalization.

``center[i]`` is the slot in ``z_prev`` holding target ``i``'s own
``z^(l-1)``; only GraphSAGE-mean and GAT read it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import DegenerateGraphError
from .graph import SparseAggregator
from .models import (
    LEAKY_SLOPE,
    GradTensor,
    ModelSpec,
    Params,
    Variant,
    activation_apply,
    activation_vjp,
)

__all__ = ["LayerCache", "layer_forward", "layer_backward", "backprop_jacobian"]


@dataclass
class LayerCache:
    l: int
    z_prev: np.ndarray
    center: np.ndarray | None
    agg: object
    pre: np.ndarray
    out: np.ndarray
    extra: dict


def _segments(row: np.ndarray, n_rows: int) -> np.ndarray:
    """Start offsets of each row's run of edges; every row must own one."""
    counts = np.bincount(row, minlength=n_rows)
    if np.any(counts == 0):
        raise DegenerateGraphError("a target node has no neighbors to aggregate")
    if len(row) > 1 and np.any(np.diff(row) < 0):
        raise ValueError("edges must be grouped by target row")
    return np.concatenate([[0], np.cumsum(counts)[:-1]])


def _matvec(X, W):
    """``X @ W.T`` with each output row computed independently of the batch size.

    BLAS may pick different kernels for different row counts, which would make
    a node's embedding depend on how many other nodes share its batch.
    """
    X = np.asarray(X, dtype=np.float64)
    out = np.empty((X.shape[0], W.shape[0]))
    step = max(1, (1 << 22) // max(W.size, 1))
    for start in range(0, X.shape[0], step):
        out[start:start + step] = (X[start:start + step, None, :] * W[None, :, :]).sum(axis=2)
    return out


def layer_forward(spec: ModelSpec, params: Params, l: int, z_prev, center, agg):
    """Return ``(z, cache)`` for layer ``l``."""
    W = params.weights[l - 1]
    act = spec.activation
    variant = spec.variant
    extra = {}

    if variant in (Variant.SAGE_GCN, Variant.GCN):
        h = agg.sum(z_prev)
        pre = _matvec(h, W)
        extra["h"] = h
    elif variant is Variant.SAGE_MEAN:
        h = agg.sum(z_prev)
        cat = np.hstack([z_prev[center], h])
        pre = _matvec(cat, W)
        extra["cat"] = cat
    elif variant is Variant.GAT:
        row, col = agg.edges()
        starts = _segments(row, agg.n_rows)
        a = params.attention[l - 1]
        d = W.shape[0]
        t_all = _matvec(z_prev, W)
        s = _matvec(t_all[center], a[None, :d])[:, 0]
        t = _matvec(t_all, a[None, d:])[:, 0]
        e = s[row] + t[col]
        lk = np.where(e > 0, e, LEAKY_SLOPE * e)
        ex = np.exp(lk - np.maximum.reduceat(lk, starts)[row])
        mult = getattr(agg, "weight", None)
        if mult is not None:
            # repeated draws of one node enter the softmax with their multiplicity
            ex = ex * mult
        alpha = ex / np.add.reduceat(ex, starts)[row]
        att = SparseAggregator(row, col, alpha, agg.n_rows, len(z_prev))
        h = att.sum(z_prev)
        pre = _matvec(h, W)
        extra.update(row=row, col=col, starts=starts, e=e, alpha=alpha, att=att, h=h, t_all=t_all)
    elif variant is Variant.SAGE_POOL:
        row, col = agg.edges()
        starts = _segments(row, agg.n_rows)
        b = params.pool_bias[l - 1]
        pre = _matvec(z_prev, W) + b
        act_src = activation_apply(act, pre)
        vals = act_src[col]
        out = np.maximum.reduceat(vals, starts, axis=0)
        # ties go to the first edge in the row, i.e. the lowest index
        cand = np.where(vals == out[row], np.arange(len(col))[:, None], len(col))
        first = np.minimum.reduceat(cand, starts, axis=0)
        extra.update(col=col, first=first, act_src=act_src)
        return out, LayerCache(l, z_prev, center, agg, pre, out, extra)
    else:  # pragma: no cover
        raise ValueError(variant)

    out = activation_apply(act, pre)
    return out, LayerCache(l, z_prev, center, agg, pre, out, extra)


def layer_backward(spec: ModelSpec, params: Params, cache: LayerCache, grad_out):
    """Return ``(grad_z_prev, grads)`` with ``grads`` keyed ``"W"``, ``"a"``, ``"b"``."""
    l = cache.l
    W = params.weights[l - 1]
    act = spec.activation
    variant = spec.variant
    z_prev, agg, x = cache.z_prev, cache.agg, cache.extra
    grads = {}

    if variant is Variant.SAGE_POOL:
        col, first = x["col"], x["first"]
        n_out = grad_out.shape[1]
        g_src = np.zeros_like(x["act_src"])
        dims = np.broadcast_to(np.arange(n_out), first.shape)
        np.add.at(g_src, (col[first], dims), grad_out)
        g_pre = activation_vjp(act, cache.pre, x["act_src"], g_src)
        grads["W"] = g_pre.T @ z_prev
        grads["b"] = g_pre.sum(axis=0)
        return g_pre @ W, grads

    g_pre = activation_vjp(act, cache.pre, cache.out, grad_out)

    if variant in (Variant.SAGE_GCN, Variant.GCN):
        grads["W"] = g_pre.T @ x["h"]
        return agg.sum_T(g_pre @ W), grads

    if variant is Variant.SAGE_MEAN:
        grads["W"] = g_pre.T @ x["cat"]
        g_cat = g_pre @ W
        d_in = z_prev.shape[1]
        g_prev = agg.sum_T(g_cat[:, d_in:])
        np.add.at(g_prev, cache.center, g_cat[:, :d_in])
        return g_prev, grads

    # GAT
    row, col, starts = x["row"], x["col"], x["starts"]
    alpha, att, t_all = x["alpha"], x["att"], x["t_all"]
    a = params.attention[l - 1]
    d = W.shape[0]
    grads["W"] = g_pre.T @ x["h"]
    g_h = g_pre @ W
    g_prev = att.sum_T(g_h)
    g_alpha = np.sum(g_h[row] * z_prev[col], axis=1)
    g_lk = alpha * (g_alpha - np.add.reduceat(alpha * g_alpha, starts)[row])
    g_e = g_lk * np.where(x["e"] > 0, 1.0, LEAKY_SLOPE)
    g_s = np.add.reduceat(g_e, starts)
    g_t = np.bincount(col, weights=g_e, minlength=len(z_prev))
    grads["a"] = np.concatenate([g_s @ t_all[cache.center], g_t @ t_all])
    g_tall = np.outer(g_t, a[d:])
    np.add.at(g_tall, cache.center, np.outer(g_s, a[:d]))
    grads["W"] += g_tall.T @ z_prev
    g_prev += g_tall @ W
    return g_prev, grads


def backprop_jacobian(spec: ModelSpec, params: Params, caches: list[LayerCache]):
    """Jacobian of the single output row of ``caches[-1]`` w.r.t. all parameters.

    One reverse sweep per output coordinate.
    """
    out = caches[-1].out
    if out.shape[0] != 1:
        raise ValueError("the last layer must produce exactly one row")
    n_out = out.shape[1]
    jac = {name: [np.zeros((n_out,) + x.shape) for x in getattr(params, attr)]
           for name, attr in (("W", "weights"), ("a", "attention"), ("b", "pool_bias"))
           if getattr(params, attr) is not None}
    for k in range(n_out):
        g = np.zeros_like(out)
        g[0, k] = 1.0
        for cache in reversed(caches):
            g, grads = layer_backward(spec, params, cache, g)
            for name, block in grads.items():
                jac[name][cache.l - 1][k] += block
    return GradTensor(
        tuple(jac["W"]),
        tuple(jac["a"]) if "a" in jac else None,
        tuple(jac["b"]) if "b" in jac else None,
    )
