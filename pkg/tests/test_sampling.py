import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from constgnn import (
    CompleteGraph,
    DegenerateGraphError,
    Graph,
    ModelSpec,
    Params,
    SampleSchedule,
    ToleranceSpec,
    default_schedule,
    exact_embed,
    exact_embed_all,
    exact_gradient,
    init_params,
    required_samples,
    sampled_embed,
    sampled_gradient,
    sampled_graph_embed,
    with_self_loops,
)
from constgnn.models import gat_attention
from constgnn.synthgen import counterexample, gen_er

from reference import central_difference

VARIANTS = ["sage_gcn", "sage_mean", "sage_pool", "gcn", "gat"]


def fixed_sampler(choices):
    """Sampler that returns the given indices regardless of the generator."""
    it = iter(choices)
    return lambda rng, deg, r: np.array(next(it), dtype=np.int64)


class TestRequiredSamples:
    def test_closed_form(self):
        assert required_samples(ToleranceSpec(0.1, 0.05, 1.0, 2)) == math.ceil(400 * math.log(80)) == 1753

    def test_boundary(self):
        assert required_samples(ToleranceSpec(1.0, 2 * math.exp(-1), 1.0, 1)) == 2

    @pytest.mark.parametrize("eps,delta", [(0.1, 1.0), (0.1, 1.5), (0.1, 0.0), (0.0, 0.1), (-1.0, 0.1)])
    def test_invalid(self, eps, delta):
        with pytest.raises(ValueError):
            required_samples(ToleranceSpec(eps, delta))

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.01, 2.0), st.floats(1e-4, 0.99), st.floats(0.1, 3.0), st.integers(1, 5))
    def test_smallest_satisfying(self, eps, delta, B, d):
        r = required_samples(ToleranceSpec(eps, delta, B, d))

        def bound(k):
            return 2 * d * math.exp(-k * eps * eps / (2 * B * B * d))

        assert bound(r) <= delta
        assert r == 1 or bound(r - 1) > delta


class TestSchedule:
    def test_single_layer(self):
        t = ToleranceSpec(0.2, 0.1, 1.0, 2)
        assert default_schedule(1, t).counts == (required_samples(ToleranceSpec(0.1, 0.05, 1.0, 2)),)

    def test_inner_exceeds_plain_confidence(self):
        t = ToleranceSpec(0.2, 0.1, 1.0, 2)
        sched = default_schedule(2, t)
        plain = required_samples(ToleranceSpec(0.2 / 4, 0.1 / 2, 1.0, 2))
        assert sched[1] > plain
        assert sched[2] == required_samples(ToleranceSpec(0.1, 0.05, 1.0, 2))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 3), st.floats(0.05, 1.0), st.floats(1.01, 3.0), st.floats(0.01, 0.5))
    def test_monotone_in_eps(self, L, eps, factor, delta):
        small = default_schedule(L, ToleranceSpec(eps, delta))
        large = default_schedule(L, ToleranceSpec(eps * factor, delta))
        assert all(a >= b for a, b in zip(small.counts, large.counts))

    def test_invalid_counts(self):
        with pytest.raises(ValueError):
            SampleSchedule((3, 0))
        with pytest.raises(ValueError):
            SampleSchedule(())

    def test_layer_mismatch(self):
        spec = ModelSpec("sage_gcn", "relu", (1, 1))
        g = with_self_loops(Graph.from_edges(2, [(0, 1)], np.ones((2, 1))))
        with pytest.raises(ValueError):
            sampled_embed(g, spec, init_params(spec, 0), 0, SampleSchedule((2, 2)), 0)


class TestTrivialCases:
    @pytest.mark.parametrize("variant", VARIANTS)
    @pytest.mark.parametrize("r", [1, 3, 7, 50])
    def test_singleton_neighbor_bit_exact(self, variant, r):
        g = Graph.from_edges(2, [(0, 1)], np.array([[0.3, 0.7], [0.1, -0.9]]))
        spec = ModelSpec.uniform(variant, "sigmoid", 1, 3, 2)
        p = init_params(spec, 2)
        sched = SampleSchedule((r,))
        assert np.array_equal(sampled_embed(g, spec, p, 0, sched, 5).embedding, exact_embed(g, spec, p, 0).embedding)
        assert np.array_equal(sampled_gradient(g, spec, p, 0, sched, 5).ravel(), exact_gradient(g, spec, p, 0).ravel())

    def test_three_clique_enumeration(self):
        g = CompleteGraph(np.array([[0.0], [3.0], [6.0]]), self_loops=True)
        spec = ModelSpec("sage_gcn", "linear", (1, 1))
        p = Params((np.array([[1.0]]),))
        outcomes = [sampled_embed(g, spec, p, 0, SampleSchedule((1,)), 0, sampler=fixed_sampler([[i]])).embedding[0]
                    for i in range(3)]
        assert outcomes == [0.0, 3.0, 6.0]
        assert np.mean(outcomes) == exact_embed(g, spec, p, 0).embedding[0] == 3.0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31), st.sampled_from(["sage_gcn", "gcn", "sage_mean"]))
    def test_identical_features(self, seed, variant):
        g = CompleteGraph(np.tile([0.4, -1.3], (9, 1)), self_loops=True)
        spec = ModelSpec.uniform(variant, "sigmoid", 2, 3, 2)
        p = init_params(spec, 1)
        est = sampled_embed(g, spec, p, 2, SampleSchedule((4, 5)), seed).embedding
        assert np.allclose(est, exact_embed(g, spec, p, 2).embedding, rtol=1e-12, atol=1e-14)


class TestUnbiased:
    @pytest.mark.parametrize("variant", ["sage_gcn", "gcn"])
    @pytest.mark.parametrize("deg", [1, 2, 3, 4])
    @pytest.mark.parametrize("r", [1, 2, 3])
    def test_exhaustive_mean(self, variant, deg, r):
        rng = np.random.default_rng(deg * 10 + r)
        # star center 0 with `deg` leaves; leaves get an extra edge so GCN degrees vary
        edges = [(0, i) for i in range(1, deg + 1)] + [(i, deg + i) for i in range(1, deg + 1)]
        n = 2 * deg + 1
        g = Graph.from_edges(n, edges, rng.standard_normal((n, 2)))
        spec = ModelSpec(variant, "linear", (2, 2))
        p = Params((rng.standard_normal((2, 2)),))
        total = np.zeros(2)
        tuples = list(itertools.product(range(deg), repeat=r))
        for tup in tuples:
            total += sampled_embed(g, spec, p, 0, SampleSchedule((r,)), 0, sampler=fixed_sampler([tup])).embedding
        assert np.allclose(total / len(tuples), exact_embed(g, spec, p, 0).embedding, rtol=0, atol=1e-12)


class TestQueries:
    @pytest.mark.parametrize("variant", VARIANTS)
    def test_count_formula(self, variant):
        g = CompleteGraph(np.zeros((30, 2)), self_loops=True)
        spec = ModelSpec.uniform(variant, "tanh", 2, 3, 2)
        r1, r2 = 4, 6
        log = sampled_embed(g, spec, init_params(spec, 0), 0, SampleSchedule((r1, r2)), 1).queries
        calls1 = r2 + 1
        deg = 1 + calls1
        if variant == "gcn":
            deg += r2 + calls1 * r1
        assert log.as_tuple() == (deg, r2 + calls1 * r1, calls1 * (r1 + 1))

    def test_independent_of_graph_size(self):
        spec = ModelSpec.uniform("sage_gcn", "sigmoid", 2, 4, 3)
        p = init_params(spec, 0)
        sched = SampleSchedule((10, 10))
        logs = [sampled_embed(CompleteGraph(np.zeros((n, 3)), self_loops=True), spec, p, 0, sched, 3).queries
                for n in (100, 100_000)]
        assert logs[0] == logs[1]


class TestDeterminism:
    @pytest.mark.parametrize("variant", VARIANTS)
    def test_same_seed(self, variant):
        g = with_self_loops(gen_er(25, 0.3, seed=1, dim=2))
        spec = ModelSpec.uniform(variant, "sigmoid", 2, 3, 2)
        p = init_params(spec, 0)
        sched = SampleSchedule((5, 4))
        a, b = sampled_embed(g, spec, p, 3, sched, 42), sampled_embed(g, spec, p, 3, sched, 42)
        assert np.array_equal(a.embedding, b.embedding) and a.queries == b.queries
        ga, gb = sampled_gradient(g, spec, p, 3, sched, 42), sampled_gradient(g, spec, p, 3, sched, 42)
        assert np.array_equal(ga.ravel(), gb.ravel())

    def test_different_seeds_differ(self):
        g = CompleteGraph(np.random.default_rng(0).standard_normal((200, 2)), self_loops=True)
        spec = ModelSpec("sage_gcn", "sigmoid", (2, 2))
        p = init_params(spec, 0)
        vals = {tuple(sampled_embed(g, spec, p, 0, SampleSchedule((5,)), s).embedding) for s in range(10)}
        assert len(vals) > 1


class TestGradient:
    @pytest.mark.parametrize("variant", VARIANTS)
    @pytest.mark.parametrize("activation", ["sigmoid", "tanh"])
    def test_central_differences_fixed_seed(self, variant, activation):
        g = with_self_loops(gen_er(10, 0.4, seed=4, dim=2))
        spec = ModelSpec.uniform(variant, activation, 2, 3, 2)
        p = init_params(spec, 6, scale=0.7)
        sched = SampleSchedule((3, 4))
        grad = sampled_gradient(g, spec, p, 2, sched, 99).ravel()
        fd = central_difference(lambda q: sampled_embed(g, spec, q, 2, sched, 99).embedding, p)
        assert np.max(np.abs(grad - fd) / (1 + np.abs(grad))) <= 1e-4

    def test_relu_miss_gives_zero_gradient(self):
        fx = counterexample("relu_gradient", n=50)
        # index 0 of node 0's self-looped list is node 0 itself, the only informative node
        sched = SampleSchedule((5,))
        grad = sampled_gradient(fx.graph, fx.spec, fx.params, 0, sched, 0,
                                sampler=lambda rng, deg, r: rng.integers(1, deg, size=r))
        assert not np.any(grad.weights[0])
        exact = exact_gradient(fx.graph, fx.spec, fx.params, 0)
        assert np.allclose(exact.weights[0][0, 0], [1.0, 1.0 + 1 / 50])


class TestGat:
    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 12))
    def test_sampled_weights_sum_to_one(self, seed, r):
        rng = np.random.default_rng(seed)
        p = Params((rng.standard_normal((3, 2)),), attention=(rng.standard_normal(6),))
        nbrs = rng.standard_normal((20, 2))
        sample = nbrs[rng.integers(0, 20, size=r)]
        w = gat_attention(p, 1, rng.standard_normal(2), sample)
        assert abs(w.sum() - 1.0) < 1e-12

    def test_large_r_converges(self):
        g = CompleteGraph(np.random.default_rng(1).standard_normal((50, 2)), self_loops=True)
        spec = ModelSpec("gat", "tanh", (2, 2))
        p = init_params(spec, 2, scale=0.5)
        exact = exact_embed(g, spec, p, 0).embedding
        err = [np.linalg.norm(sampled_embed(g, spec, p, 0, SampleSchedule((r,)), 3).embedding - exact)
               for r in (5, 5000)]
        assert err[1] < 0.05


class TestGraphEmbed:
    def test_single_node(self):
        g = with_self_loops(Graph.from_edges(1, [], np.array([[0.2, 0.4]])))
        spec = ModelSpec("sage_gcn", "sigmoid", (2, 2))
        p = init_params(spec, 0)
        res = sampled_graph_embed(g, spec, p, 3, SampleSchedule((2,)), 1)
        assert np.allclose(res.embedding, sampled_embed(g, spec, p, 0, SampleSchedule((2,)), 5).embedding)
        assert res.queries.as_tuple() == (3, 6, 9)

    def test_symmetric_clique(self):
        g = CompleteGraph(np.tile([1.0, -1.0], (12, 1)), self_loops=True)
        spec = ModelSpec.uniform("sage_gcn", "sigmoid", 2, 3, 2)
        p = init_params(spec, 0)
        res = sampled_graph_embed(g, spec, p, 7, SampleSchedule((3, 3)), 0)
        assert np.allclose(res.embedding, exact_embed_all(g, spec, p).mean(axis=0), rtol=1e-12)

    def test_monte_carlo_mean(self):
        # linear one-layer estimator is unbiased, so the mean converges to the mean exact embedding
        g = with_self_loops(Graph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)],
                                             np.random.default_rng(3).standard_normal((5, 2))))
        spec = ModelSpec("sage_gcn", "linear", (2, 2))
        p = init_params(spec, 1)
        draws = 100_000
        res = sampled_graph_embed(g, spec, p, draws, SampleSchedule((2,)), 8)
        target = exact_embed_all(g, spec, p).mean(axis=0)
        # per-draw spread is bounded by the feature scale, so 4 sigma is under 4 * 3 / sqrt(draws)
        assert np.all(np.abs(res.embedding - target) < 4 * 3 / math.sqrt(draws))

    def test_empty_graph(self):
        g = Graph(np.array([0]), np.array([], dtype=np.int64), np.zeros((0, 1)))
        spec = ModelSpec("sage_gcn", "sigmoid", (1, 1))
        with pytest.raises(ValueError):
            sampled_graph_embed(g, spec, init_params(spec, 0), 2, SampleSchedule((1,)), 0)


class TestErrors:
    def test_degree_zero(self):
        g = Graph.from_edges(3, [(0, 1)], np.zeros((3, 1)))
        spec = ModelSpec("sage_gcn", "relu", (1, 1))
        with pytest.raises(DegenerateGraphError):
            sampled_embed(g, spec, init_params(spec, 0), 2, SampleSchedule((3,)), 0)

    def test_degree_zero_below_target(self):
        # node 1 has no neighbors once reached at the lower layer... here via a path
        g = Graph.from_edges(3, [(0, 1)], np.zeros((3, 1)))
        spec = ModelSpec.uniform("sage_gcn", "relu", 2, 1, 1)
        res = sampled_embed(g, spec, init_params(spec, 0), 0, SampleSchedule((2, 2)), 0)
        assert np.all(np.isfinite(res.embedding))
