"""Exact embeddings and their parameter Jacobians.

The exact computation only visits the receptive field of the target:
``B_L = {v}`` and ``B_{l-1}`` is the union of the neighbor lists of ``B_l``
(plus ``B_l`` itself for models that read the center embedding). Each layer
reads the degrees and full neighbor lists of its rows through the oracles,
so the query log of a 2-layer model on ``K_n`` grows as ``n^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import DegenerateGraphError, check_node
from .graph import (
    AdjacencyBlock,
    BaseGraph,
    QueryLog,
    oracle_degrees,
    oracle_features,
    oracle_neighbor_block,
)
from .layers import LayerCache, backprop_jacobian, layer_forward
from .models import GradTensor, ModelSpec, Params, Variant

__all__ = [
    "ReceptiveField",
    "EmbedResult",
    "GradTensor",
    "receptive_field",
    "exact_embed",
    "exact_embed_all",
    "exact_gradient",
]


@dataclass
class ReceptiveField:
    """Node sets ``layers[l] = B_l`` for ``l = 0..L`` (sorted, deduplicated)."""

    layers: list
    blocks: list = field(repr=False)
    degrees: list = field(repr=False)

    @property
    def size(self) -> int:
        return int(sum(len(b) for b in self.layers))


@dataclass
class EmbedResult:
    embedding: np.ndarray
    queries: QueryLog


def receptive_field(g: BaseGraph, spec: ModelSpec, v, log: QueryLog | None = None) -> ReceptiveField:
    """Expand ``{v}`` layer by layer down to the input layer."""
    log = QueryLog() if log is None else log
    v = check_node(v, g.n_nodes)
    return _expand(g, spec, np.array([v], dtype=np.int64), log)


def _expand(g, spec, top, log) -> ReceptiveField:
    L = spec.layers
    layers = [None] * (L + 1)
    blocks: list[AdjacencyBlock | None] = [None] * (L + 1)
    degrees = [None] * (L + 1)
    layers[L] = top
    for l in range(L, 0, -1):
        rows = layers[l]
        deg = oracle_degrees(g, rows, log)
        if len(deg) and deg.min() == 0:
            bad = int(rows[np.argmin(deg)])
            raise DegenerateGraphError(f"node {bad} has degree 0")
        blocks[l] = oracle_neighbor_block(g, rows, log)
        degrees[l] = deg
        below = blocks[l].columns()
        if spec.variant.uses_center:
            below = np.union1d(below, rows)
        layers[l - 1] = below
    return ReceptiveField(layers, blocks, degrees)


def _forward(g, spec, params, rf: ReceptiveField, log) -> list[LayerCache]:
    params.check(spec)
    if g.feature_dim != spec.dims[0]:
        raise ValueError(f"graph features have width {g.feature_dim}, model expects {spec.dims[0]}")
    z = oracle_features(g, rf.layers[0], log)
    caches = []
    for l in range(1, spec.layers + 1):
        rows, cols = rf.layers[l], rf.layers[l - 1]
        deg = rf.degrees[l].astype(np.float64)
        if spec.variant is Variant.GCN:
            col_deg = oracle_degrees(g, cols, log).astype(np.float64)
            row_w, col_w = 1.0 / np.sqrt(deg), 1.0 / np.sqrt(col_deg)
        elif spec.variant in (Variant.SAGE_GCN, Variant.SAGE_MEAN):
            row_w, col_w = 1.0 / deg, np.ones(len(cols))
        else:
            row_w, col_w = np.ones(len(rows)), np.ones(len(cols))
        agg = rf.blocks[l].aggregator(cols, row_w, col_w)
        center = np.searchsorted(cols, rows) if spec.variant.uses_center else None
        z, cache = layer_forward(spec, params, l, z, center, agg)
        caches.append(cache)
    return caches


def exact_embed(g: BaseGraph, spec: ModelSpec, params: Params, v) -> EmbedResult:
    """Exact ``z_v^(L)`` computed over the receptive field of ``v``.

    GraphSAGE models expect ``g`` to already contain self-loops
    (see :func:`constgnn.graph.with_self_loops`).
    """
    log = QueryLog()
    rf = receptive_field(g, spec, v, log)
    caches = _forward(g, spec, params, rf, log)
    return EmbedResult(caches[-1].out[0].copy(), log)


def exact_embed_all(g: BaseGraph, spec: ModelSpec, params: Params) -> np.ndarray:
    """Exact embeddings of every node, sharing intermediate layers; shape ``(n, d_L)``."""
    log = QueryLog()
    rf = _expand(g, spec, np.arange(g.n_nodes), log)
    return _forward(g, spec, params, rf, log)[-1].out


def exact_gradient(g: BaseGraph, spec: ModelSpec, params: Params, v) -> GradTensor:
    """Jacobian of the exact ``z_v^(L)`` with respect to every parameter block."""
    log = QueryLog()
    rf = receptive_field(g, spec, v, log)
    caches = _forward(g, spec, params, rf, log)
    return backprop_jacobian(spec, params, caches)
