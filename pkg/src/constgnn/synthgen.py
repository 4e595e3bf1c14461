"""Seeded graph generators and the adversarial fixtures of the inapproximability results."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive_int, check_probability
from .graph import BaseGraph, CompleteGraph, Graph, with_self_loops
from .models import ModelSpec, Params

__all__ = [
    "gen_clique",
    "gen_star",
    "gen_ba",
    "gen_er",
    "Fixture",
    "FIXTURE_IDS",
    "counterexample",
]


def _features(n, features, seed, dim):
    if features is None:
        return np.random.default_rng(seed).standard_normal((n, dim))
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[:, None]
    if features.shape[0] != n:
        raise ValueError(f"expected {n} feature rows, got {features.shape[0]}")
    return features


def gen_clique(n: int, features=None, seed_features=None, dim: int = 10, self_loops: bool = False) -> CompleteGraph:
    """Complete graph ``K_n``; features default to i.i.d. standard normal rows of width ``dim``."""
    n = check_positive_int(n, "n")
    return CompleteGraph(_features(n, features, seed_features, dim), self_loops=self_loops)


def gen_star(n: int, features=None) -> Graph:
    """Star on ``n`` nodes with center 0; features default to zeros of width 1."""
    n = check_positive_int(n, "n", minimum=2)
    feats = np.zeros((n, 1)) if features is None else _features(n, features, None, 1)
    leaves = np.arange(1, n)
    return Graph.from_edges(n, np.column_stack([np.zeros(n - 1, dtype=np.int64), leaves]), feats)


def gen_ba(n: int, attach: int, seed=None, features=None, dim: int = 10) -> Graph:
    """Barabasi-Albert preferential attachment.

    Starts from a clique on ``attach + 1`` nodes; each later node links to
    ``attach`` distinct earlier nodes picked with probability proportional to
    their current degree.
    """
    attach = check_positive_int(attach, "attach")
    n = check_positive_int(n, "n")
    if n <= attach:
        raise ValueError(f"n must exceed attach, got n={n}, attach={attach}")
    rng = np.random.default_rng(seed)
    m0 = attach + 1
    iu, ju = np.triu_indices(m0, k=1)
    edges = [np.column_stack([iu, ju])]
    # every endpoint appears once per incident edge, so a uniform pick is degree-proportional
    ends = np.empty(2 * (len(iu) + attach * (n - m0)), dtype=np.int64)
    ends[: 2 * len(iu)] = np.concatenate([iu, ju])
    fill = 2 * len(iu)
    for v in range(m0, n):
        chosen = set()
        while len(chosen) < attach:
            chosen.add(int(ends[rng.integers(0, fill)]))
        targets = np.fromiter(sorted(chosen), dtype=np.int64, count=attach)
        edges.append(np.column_stack([np.full(attach, v), targets]))
        ends[fill: fill + attach] = targets
        ends[fill + attach: fill + 2 * attach] = v
        fill += 2 * attach
    feats = _features(n, features, rng, dim)
    return Graph.from_edges(n, np.concatenate(edges), feats)


def gen_er(n: int, p: float, seed=None, features=None, dim: int = 10) -> Graph:
    """Erdos-Renyi ``G(n, p)``: every unordered pair is an edge independently with probability ``p``."""
    n = check_positive_int(n, "n")
    p = check_probability(p, "p")
    rng = np.random.default_rng(seed)
    edges = []
    for i in range(n - 1):
        hit = np.flatnonzero(rng.random(n - i - 1) < p)
        if len(hit):
            edges.append(np.column_stack([np.full(len(hit), i), hit + i + 1]))
    edges = np.concatenate(edges) if edges else np.empty((0, 2), dtype=np.int64)
    feats = _features(n, features, rng, dim)
    return Graph.from_edges(n, edges, feats)


@dataclass
class Fixture:
    """One side of an adversarial pair, ready for the engines.

    ``expected`` holds the exact values at ``target_node`` that the
    construction predicts (``"embedding"`` and/or ``"gradient_W"``) plus a
    ``"description"`` of why constant-query methods fail on it.
    """

    graph: BaseGraph
    spec: ModelSpec
    params: Params
    target_node: int
    expected: dict = field(default_factory=dict)


FIXTURE_IDS = ("unbounded_feature", "normalization", "relu_gradient", "pool", "gcn_star")


def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def _one_hot_clique(n, special, other, self_loops=True):
    x = np.tile(np.asarray(other, dtype=np.float64), (n, 1))
    x[0] = special
    return CompleteGraph(x, self_loops=self_loops)


def counterexample(fixture_id: str, n: int = 10_000, variant: str = "A", activation=None) -> Fixture:
    """Adversarial input ``variant`` of construction ``fixture_id``.

    Variants ``"A"`` and ``"B"`` differ only at the special node 0, so an
    algorithm that never queries node 0 cannot tell them apart while their
    exact outputs differ by a constant. The ``normalization`` fixture also has
    variant ``"experiment"`` (special ``(1, 0)``, others ``(0, 1/n)``) used for
    the empirical study. ``activation`` overrides the default where the
    construction allows it (``relu_gradient`` with ``"sigmoid"``,
    ``normalization`` with ``"relu"``).
    """
    if fixture_id not in FIXTURE_IDS:
        raise ValueError(f"unknown fixture {fixture_id!r}; expected one of {FIXTURE_IDS}")
    n = check_positive_int(n, "n", minimum=2)
    variant = str(variant)
    allowed = ("A", "B", "experiment") if fixture_id == "normalization" else ("A", "B")
    if variant not in allowed:
        raise ValueError(f"fixture {fixture_id!r} has variants {allowed}, got {variant!r}")
    one = Params((np.array([[1.0]]),))

    if fixture_id == "unbounded_feature":
        # mean over the self-looped clique turns x_0 = a n into h = a with a = 1
        act = activation or "sigmoid"
        spec = ModelSpec("sage_gcn", act, (1, 1))
        special = float(n) if variant == "B" else 0.0
        g = _one_hot_clique(n, [special], [0.0])
        z = _sigmoid(1.0 if variant == "B" else 0.0)
        desc = "feature norm grows with n; a miss of node 0 reads sigma(0)"
        return Fixture(g, spec, one, 1, {"embedding": np.array([z]), "description": desc})

    if fixture_id == "normalization":
        act = activation or "relu_normalize"
        spec = ModelSpec("sage_gcn", act, (2, 2))
        params = Params((np.eye(2),))
        if variant == "experiment":
            g = _one_hot_clique(n, [1.0, 0.0], [0.0, 1.0 / n])
            h = np.array([1.0 / n, (n - 1) / n**2])
            z = h / np.linalg.norm(h) if spec.activation.value == "relu_normalize" else np.maximum(h, 0)
            desc = "sampled estimate that misses node 0 normalizes to (0, 1)"
            return Fixture(g, spec, params, 1, {"embedding": z, "description": desc})
        special = [1.0, 0.0] if variant == "A" else [0.0, 1.0]
        g = _one_hot_clique(n, special, [0.0, 0.0])
        z = np.array(special) if spec.activation.value == "relu_normalize" else np.array(special) / n
        desc = "exact output is a unit vector set entirely by node 0"
        return Fixture(g, spec, params, 1, {"embedding": z, "description": desc})

    if fixture_id == "relu_gradient":
        act = activation or "relu"
        spec = ModelSpec("sage_gcn", act, (2, 1))
        params = Params((np.array([[-1.0, 1.0]]),))
        special = [1.0, 2.0] if variant == "A" else [1.0, 0.0]
        g = _one_hot_clique(n, special, [1.0, 1.0])
        mean = np.array([1.0, 1.0 + (1.0 if variant == "A" else -1.0) / n])
        pre = float((params.weights[0] @ mean)[0])
        if spec.activation.value == "relu":
            z, slope = max(pre, 0.0), float(pre > 0)
        else:
            z = _sigmoid(pre)
            slope = z * (1 - z)
        desc = "pre-activation is +-1/n, so the ReLU gradient flips with node 0"
        exp = {"embedding": np.array([z]), "gradient_W": (slope * mean)[None, None, :], "description": desc}
        return Fixture(g, spec, params, 0, exp)

    if fixture_id == "pool":
        act = activation or "sigmoid"
        spec = ModelSpec("sage_pool", act, (1, 1))
        params = Params((np.array([[1.0]]),), pool_bias=(np.zeros(1),))
        special = 1.0 if variant == "B" else 0.0
        g = _one_hot_clique(n, [special], [0.0], self_loops=False)
        z = _sigmoid(special) if spec.activation.value == "sigmoid" else None
        desc = "max over neighbors is decided by node 0 alone"
        exp = {"embedding": np.array([z]) if z is not None else None, "description": desc}
        return Fixture(g, spec, params, 1, exp)

    # gcn_star: floor(sqrt(2n)) unit leaves; with self-loops the center has degree n
    # and each leaf degree 2, so the center aggregates k / sqrt(2n) ~ 1
    act = activation or "sigmoid"
    spec = ModelSpec("gcn", act, (1, 1))
    k = math.isqrt(2 * n)
    x = np.zeros((n, 1))
    if variant == "B":
        x[1: k + 1] = 1.0
    g = with_self_loops(gen_star(n, x))
    s = k / math.sqrt(2.0 * n) if variant == "B" else 0.0
    desc = "center aggregates a vanishing fraction of heavy leaves"
    exp = {"embedding": np.array([_sigmoid(s)]) if spec.activation.value == "sigmoid" else None,
           "description": desc, "leaves": k}
    return Fixture(g, spec, one, 0, exp)
