import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from constgnn import exact_embed, exact_gradient
from constgnn.synthgen import FIXTURE_IDS, counterexample, gen_ba, gen_clique, gen_er, gen_star


def symmetric(g):
    A = g.to_scipy()
    return (A != A.T).nnz == 0


class TestClique:
    def test_degrees(self):
        g = gen_clique(3, seed_features=0)
        assert all(g.degree(v) == 2 for v in range(3))

    def test_single_node(self):
        g = gen_clique(1, seed_features=0)
        assert g.degree(0) == 0 and len(g.neighbors(0)) == 0

    def test_seeded_features(self):
        assert np.array_equal(gen_clique(5, seed_features=3).features, gen_clique(5, seed_features=3).features)
        assert gen_clique(5, seed_features=3).features.shape == (5, 10)

    def test_explicit_features(self):
        g = gen_clique(2, features=[1.0, 3.0])
        assert np.array_equal(g.features, [[1.0], [3.0]])


class TestStar:
    def test_degrees(self):
        g = gen_star(5)
        assert g.degree(0) == 4
        assert all(g.degree(v) == 1 for v in range(1, 5))
        assert symmetric(g)

    def test_too_small(self):
        with pytest.raises(ValueError):
            gen_star(1)


class TestBA:
    def test_edge_count(self):
        # clique on attach+1 nodes, then attach new edges per remaining node
        g = gen_ba(100, 2, seed=0)
        assert g.n_edges == math.comb(3, 2) + 2 * (100 - 3) == 197

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 4), st.integers(0, 50), st.integers(0, 2**31))
    def test_invariants(self, attach, extra, seed):
        n = attach + 1 + extra
        g = gen_ba(n, attach, seed=seed, dim=2)
        assert symmetric(g)
        assert g.n_edges == math.comb(attach + 1, 2) + attach * extra
        assert np.all(g.degrees() >= attach)

    def test_deterministic(self):
        a, b = gen_ba(60, 3, seed=7), gen_ba(60, 3, seed=7)
        assert np.array_equal(a.indices, b.indices) and np.array_equal(a.features, b.features)

    def test_heavy_tail(self):
        g = gen_ba(3000, 2, seed=1, dim=1)
        assert g.degrees().max() > 10 * np.median(g.degrees())

    @pytest.mark.parametrize("n,attach", [(2, 2), (5, 0)])
    def test_bad_arguments(self, n, attach):
        with pytest.raises(ValueError):
            gen_ba(n, attach, seed=0)


class TestER:
    def test_extremes(self):
        assert gen_er(20, 0.0, seed=0).n_edges == 0
        assert gen_er(20, 1.0, seed=0).n_edges == 190

    def test_mean_degree(self):
        # 2 E / n with E ~ Binomial(C(n, 2), p)
        n, p = 1000, 0.01
        mean = 2 * math.comb(n, 2) * p / n
        sd = 2 * math.sqrt(math.comb(n, 2) * p * (1 - p)) / n
        for seed in range(5):
            g = gen_er(n, p, seed=seed, dim=1)
            assert abs(2 * g.n_edges / n - mean) < 3 * sd
            assert symmetric(g)

    def test_bad_probability(self):
        with pytest.raises(ValueError):
            gen_er(10, 1.5, seed=0)


class TestCounterexamples:
    def test_unknown(self):
        with pytest.raises(ValueError):
            counterexample("nope")

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            counterexample("pool", variant="C")

    @pytest.mark.parametrize("fid", FIXTURE_IDS)
    @pytest.mark.parametrize("variant", ["A", "B"])
    def test_expected_embedding_matches_exact(self, fid, variant):
        fx = counterexample(fid, n=500, variant=variant)
        got = exact_embed(fx.graph, fx.spec, fx.params, fx.target_node).embedding
        assert np.allclose(got, fx.expected["embedding"], rtol=0, atol=1e-12)

    def test_normalization_variant_a(self):
        fx = counterexample("normalization", n=1000, variant="A")
        for v in (1, 2, 999):
            assert np.allclose(exact_embed(fx.graph, fx.spec, fx.params, v).embedding, [1.0, 0.0], atol=1e-12)

    def test_normalization_experiment(self):
        fx = counterexample("normalization", n=1000, variant="experiment")
        got = exact_embed(fx.graph, fx.spec, fx.params, 1).embedding
        assert np.allclose(got, fx.expected["embedding"], atol=1e-12)
        assert got[0] > 0.7

    @pytest.mark.parametrize("n", [10, 1000])
    def test_relu_gradient(self, n):
        fx = counterexample("relu_gradient", n=n, variant="A")
        grad = exact_gradient(fx.graph, fx.spec, fx.params, 0).weights[0]
        assert np.allclose(grad[0, 0], [1.0, 1.0 + 1.0 / n], rtol=0, atol=1e-12)
        assert np.allclose(grad, fx.expected["gradient_W"], atol=1e-12)

    def test_relu_gradient_variant_b_vanishes(self):
        fx = counterexample("relu_gradient", n=100, variant="B")
        assert not np.any(exact_gradient(fx.graph, fx.spec, fx.params, 0).weights[0])

    def test_pool_values(self):
        a = counterexample("pool", n=100, variant="A")
        b = counterexample("pool", n=100, variant="B")
        za = exact_embed(a.graph, a.spec, a.params, 1).embedding[0]
        zb = exact_embed(b.graph, b.spec, b.params, 1).embedding[0]
        assert za == 0.5
        assert zb == pytest.approx(1 / (1 + math.exp(-1)), abs=1e-15)

    def test_gcn_star_gap_persists(self):
        for n in (100, 10_000):
            a = counterexample("gcn_star", n=n, variant="A")
            b = counterexample("gcn_star", n=n, variant="B")
            gap = abs(exact_embed(b.graph, b.spec, b.params, 0).embedding[0]
                      - exact_embed(a.graph, a.spec, a.params, 0).embedding[0])
            assert gap > 0.2
            assert b.expected["leaves"] == math.isqrt(2 * n)

    def test_variants_differ_only_at_node_zero(self):
        for fid in FIXTURE_IDS:
            a, b = counterexample(fid, n=50, variant="A"), counterexample(fid, n=50, variant="B")
            diff = np.flatnonzero(np.any(a.graph.features != b.graph.features, axis=1))
            if fid == "gcn_star":
                assert set(diff) <= set(range(1, math.isqrt(100) + 1))
            else:
                assert list(diff) == [0]
