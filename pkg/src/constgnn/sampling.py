"""Constant-query neighbor-sampling estimator.

``sampled_embed`` estimates ``z_v^(L)`` by recursion: a call at layer ``l``
reads ``deg(v)``, draws ``r^(l)`` neighbor indices uniformly with
replacement, and combines fresh recursive estimates of layer ``l - 1`` for
``v`` itself and for every sampled neighbor::

    h_hat = deg(v) / r * sum_{u in S} M(z_hat_v, z_hat_u)
    z_hat = U(z_hat_v, h_hat)

GAT instead normalizes its attention over the sampled multiset and
GraphSAGE-pool takes the maximum over it; neither is rescaled.

Every call owns a random stream derived from the root seed and the call's
path in the recursion tree, so estimates replay exactly and the gradient of
a fixed-seed estimate can be taken by reverse mode over the same tree. The
number of oracle queries depends only on the schedule and the model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import DegenerateGraphError, check_node, check_positive_int
from .exact import EmbedResult
from .graph import (
    BaseGraph,
    QueryLog,
    SparseAggregator,
    oracle_degrees,
    oracle_features,
    oracle_neighbors_at,
)
from .layers import backprop_jacobian, layer_forward
from .models import GradTensor, ModelSpec, Params, Variant

__all__ = [
    "SampleSchedule",
    "ToleranceSpec",
    "required_samples",
    "default_schedule",
    "sampled_embed",
    "sampled_gradient",
    "sampled_graph_embed",
    "uniform_sampler",
]


@dataclass(frozen=True)
class SampleSchedule:
    """Per-layer sample counts; ``counts[l - 1]`` is ``r^(l)``."""

    counts: tuple

    def __post_init__(self):
        counts = tuple(check_positive_int(int(r) if isinstance(r, np.integer) else r, "sample count") for r in self.counts)
        if not counts:
            raise ValueError("a schedule needs at least one layer")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def uniform(cls, r: int, layers: int) -> "SampleSchedule":
        return cls((r,) * layers)

    @property
    def layers(self) -> int:
        return len(self.counts)

    def __getitem__(self, l: int) -> int:
        if not 1 <= l <= len(self.counts):
            raise IndexError(f"layer {l} outside 1..{len(self.counts)}")
        return self.counts[l - 1]


@dataclass(frozen=True)
class ToleranceSpec:
    """Target accuracy: ``P[|error| >= epsilon] <= delta`` for summands of norm <= B in R^d."""

    epsilon: float
    delta: float
    bound_B: float = 1.0
    dim_d: int = 1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.bound_B > 0:
            raise ValueError(f"bound_B must be > 0, got {self.bound_B}")
        check_positive_int(self.dim_d, "dim_d")


def required_samples(t: ToleranceSpec) -> int:
    """Smallest ``r`` with ``2 d exp(-r eps^2 / (2 B^2 d)) <= delta``.

    That is ``ceil(2 B^2 d / eps^2 * ln(2 d / delta))``, corrected for
    rounding so the returned ``r`` is the first one satisfying the bound as
    evaluated in floating point.
    """
    eps, delta, B, d = t.epsilon, t.delta, t.bound_B, t.dim_d
    scale = eps * eps / (2.0 * B * B * d)

    def ok(r):
        return 2 * d * math.exp(-r * scale) <= delta

    r = max(1, math.ceil(math.log(2 * d / delta) / scale))
    while r > 1 and ok(r - 1):
        r -= 1
    while not ok(r):
        r += 1
    return r


def default_schedule(L: int, t: ToleranceSpec) -> SampleSchedule:
    """Layer counts meeting ``t`` for an ``L``-layer model.

    The top layer gets ``(eps/2, delta/2)``. Each lower layer must hold for
    every one of the ``r^(l+1)`` calls above it, so it gets tolerance
    ``eps / (2 L)`` at confidence ``delta / (4 r^(l+1))``.
    """
    L = check_positive_int(L, "L")
    counts = [0] * (L + 1)
    counts[L] = required_samples(ToleranceSpec(t.epsilon / 2, t.delta / 2, t.bound_B, t.dim_d))
    for l in range(L - 1, 0, -1):
        inner = ToleranceSpec(t.epsilon / (2 * L), t.delta / (4 * counts[l + 1]), t.bound_B, t.dim_d)
        counts[l] = required_samples(inner)
    return SampleSchedule(tuple(counts[1:]))


def uniform_sampler(rng: np.random.Generator, deg: int, r: int) -> np.ndarray:
    """``r`` neighbor indices drawn uniformly with replacement from ``[0, deg)``."""
    return rng.integers(0, deg, size=r)


@dataclass
class _Level:
    nodes: np.ndarray  # one entry per call at this layer
    deg: np.ndarray
    nbrs: np.ndarray  # (calls, r)
    nbr_deg: np.ndarray | None  # degrees of sampled neighbors (GCN only)


def _draw(g, spec, v, schedule, seed, log, sampler):
    """Sample the whole recursion tree; returns per-layer levels and leaf features."""
    if schedule.layers != spec.layers:
        raise ValueError(f"schedule has {schedule.layers} layers, model has {spec.layers}")
    entropy = np.random.SeedSequence(seed).entropy
    levels = {}
    nodes = np.array([v], dtype=np.int64)
    paths = [()]
    for l in range(spec.layers, 0, -1):
        r = schedule[l]
        deg = oracle_degrees(g, nodes, log)
        if deg.min() == 0:
            raise DegenerateGraphError(f"node {int(nodes[np.argmin(deg)])} has degree 0")
        idx = np.empty((len(nodes), r), dtype=np.int64)
        for c, path in enumerate(paths):
            rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy, spawn_key=path)))
            idx[c] = sampler(rng, int(deg[c]), r)
        nbrs = oracle_neighbors_at(g, np.repeat(nodes, r), idx.ravel(), log).reshape(len(nodes), r)
        nbr_deg = None
        if spec.variant is Variant.GCN:
            nbr_deg = oracle_degrees(g, nbrs.ravel(), log).reshape(nbrs.shape)
        levels[l] = _Level(nodes, deg, nbrs, nbr_deg)
        nodes = np.column_stack([nodes, nbrs]).ravel()
        if l > 1:
            paths = [p + (k,) for p in paths for k in range(r + 1)]
    leaves = oracle_features(g, nodes, log)
    return levels, leaves


def _aggregator(spec, level: _Level, l: int):
    """Sampled edges of every call at one layer.

    Slot ``c * (r + 1)`` holds call ``c``'s own estimate and slots
    ``c * (r + 1) + 1 .. c * (r + 1) + r`` its sampled neighbors. At the input
    layer repeated draws of a node read the same feature vector, so they are
    merged into one edge carrying the multiplicity.
    """
    calls, r = level.nbrs.shape
    row = np.repeat(np.arange(calls), r)
    col = (np.arange(calls)[:, None] * (r + 1) + 1 + np.arange(r)).ravel()
    count = np.ones(calls * r)
    deg = np.repeat(level.deg, r).astype(np.float64)
    nbr_deg = None if level.nbr_deg is None else level.nbr_deg.ravel().astype(np.float64)
    if l == 1:
        key = row * (int(level.nbrs.max()) + 1) + level.nbrs.ravel()
        _, first, counts = np.unique(key, return_index=True, return_counts=True)
        row, col, count, deg = row[first], col[first], counts.astype(np.float64), deg[first]
        if nbr_deg is not None:
            nbr_deg = nbr_deg[first]
    scale = count * deg / r
    if spec.variant in (Variant.SAGE_GCN, Variant.SAGE_MEAN):
        weight = scale * (1.0 / deg)
    elif spec.variant is Variant.GCN:
        weight = scale * (1.0 / np.sqrt(deg * nbr_deg))
    else:
        # attention weighs each distinct draw by its multiplicity; max-pooling ignores it
        weight = count
    return SparseAggregator(row, col, weight, calls, calls * (r + 1)), np.arange(calls) * (r + 1)


def _forward(spec, params, levels, leaves):
    params.check(spec)
    z = leaves
    caches = []
    for l in range(1, spec.layers + 1):
        agg, center = _aggregator(spec, levels[l], l)
        z, cache = layer_forward(spec, params, l, z, center, agg)
        caches.append(cache)
    return caches


def _run(g, spec, params, v, schedule, seed, sampler):
    v = check_node(v, g.n_nodes)
    if g.feature_dim != spec.dims[0]:
        raise ValueError(f"graph features have width {g.feature_dim}, model expects {spec.dims[0]}")
    log = QueryLog()
    levels, leaves = _draw(g, spec, v, schedule, seed, log, sampler or uniform_sampler)
    return _forward(spec, params, levels, leaves), log


def sampled_embed(g: BaseGraph, spec: ModelSpec, params: Params, v, schedule: SampleSchedule,
                  seed=None, sampler=None) -> EmbedResult:
    """Estimate ``z_v^(L)`` with ``schedule[l]`` sampled neighbors per call at layer ``l``.

    ``sampler(rng, deg, r)`` may replace the uniform draw, e.g. to enumerate
    every possible sample in tests. GraphSAGE-pool is supported but carries no
    accuracy guarantee.
    """
    caches, log = _run(g, spec, params, v, schedule, seed, sampler)
    return EmbedResult(caches[-1].out[0].copy(), log)


def sampled_gradient(g: BaseGraph, spec: ModelSpec, params: Params, v, schedule: SampleSchedule,
                     seed=None, sampler=None) -> GradTensor:
    """Jacobian of the estimate returned by :func:`sampled_embed` with the same seed."""
    caches, _ = _run(g, spec, params, v, schedule, seed, sampler)
    return backprop_jacobian(spec, params, caches)


def sampled_graph_embed(g: BaseGraph, spec: ModelSpec, params: Params, node_samples: int,
                        schedule: SampleSchedule, seed=None) -> EmbedResult:
    """Mean of per-node estimates over ``node_samples`` nodes drawn uniformly with replacement."""
    node_samples = check_positive_int(node_samples, "node_samples")
    if g.n_nodes == 0:
        raise ValueError("cannot embed an empty graph")
    words = np.random.SeedSequence(seed).generate_state(node_samples + 1)
    nodes = np.random.default_rng(words[0]).integers(0, g.n_nodes, size=node_samples)
    total = None
    log = QueryLog()
    for node, sub in zip(nodes, words[1:]):
        res = sampled_embed(g, spec, params, int(node), schedule, int(sub))
        total = res.embedding if total is None else total + res.embedding
        log = log + res.queries
    return EmbedResult(total / node_samples, log)
