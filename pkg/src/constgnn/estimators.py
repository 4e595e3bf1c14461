"""scikit-learn style wrappers around the two engines.

``fit`` takes a graph and prepares the model; ``transform`` maps node ids
(or the fitted graph itself, meaning every node) to embedding rows::

    emb = SampledEmbedder(r=50, random_state=0).fit(g).transform([0, 4, 7])
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_nodes
from .exact import exact_embed, exact_embed_all
from .graph import BaseGraph, QueryLog, with_self_loops
from .models import ModelSpec, init_params
from .sampling import SampleSchedule, sampled_embed

__all__ = ["ExactEmbedder", "SampledEmbedder"]


class _EmbedderBase(TransformerMixin, BaseEstimator):
    def _fit(self, X):
        if not isinstance(X, BaseGraph):
            raise TypeError(f"fit expects a graph, got {type(X).__name__}")
        g = with_self_loops(X) if self.self_loops else X
        hidden = tuple(int(d) for d in np.atleast_1d(self.dims))
        spec = ModelSpec(self.model, self.activation, (g.feature_dim,) + hidden)
        params = self.params if self.params is not None else init_params(spec, self.random_state, self.scale)
        params.check(spec)
        self.graph_, self.spec_, self.params_ = g, spec, params
        self.n_features_in_ = g.feature_dim
        return self

    def _nodes(self, X):
        check_is_fitted(self, "spec_")
        if isinstance(X, BaseGraph):
            return np.arange(self.graph_.n_nodes)
        return check_nodes(np.atleast_1d(X), self.graph_.n_nodes)


class ExactEmbedder(_EmbedderBase):
    """Exact embeddings over each target's receptive field."""

    def __init__(self, model="sage_gcn", activation="sigmoid", dims=(10,), self_loops=True,
                 params=None, scale=1.0, random_state=None):
        self.model = model
        self.activation = activation
        self.dims = dims
        self.self_loops = self_loops
        self.params = params
        self.scale = scale
        self.random_state = random_state

    def fit(self, X, y=None):
        return self._fit(X)

    def transform(self, X):
        nodes = self._nodes(X)
        if isinstance(X, BaseGraph):
            return exact_embed_all(self.graph_, self.spec_, self.params_)
        return np.vstack([exact_embed(self.graph_, self.spec_, self.params_, int(v)).embedding for v in nodes])


class SampledEmbedder(_EmbedderBase):
    """Constant-query estimates with ``r`` samples per layer (int or per-layer tuple).

    Node ``v`` is estimated with seed ``(random_state, v)``, so repeated calls
    agree. ``queries_`` accumulates the oracle cost of the last ``transform``.
    """

    def __init__(self, model="sage_gcn", activation="sigmoid", dims=(10,), r=100, self_loops=True,
                 params=None, scale=1.0, random_state=None):
        self.model = model
        self.activation = activation
        self.dims = dims
        self.r = r
        self.self_loops = self_loops
        self.params = params
        self.scale = scale
        self.random_state = random_state

    def fit(self, X, y=None):
        self._fit(X)
        r = np.atleast_1d(self.r)
        counts = tuple(int(x) for x in r) if len(r) > 1 else (int(r[0]),) * self.spec_.layers
        self.schedule_ = SampleSchedule(counts)
        return self

    def transform(self, X):
        nodes = self._nodes(X)
        base = 0 if self.random_state is None else int(self.random_state)
        log = QueryLog()
        rows = []
        for v in nodes:
            seed = np.random.SeedSequence(base, spawn_key=(int(v),))
            res = sampled_embed(self.graph_, self.spec_, self.params_, int(v), self.schedule_,
                                int(seed.generate_state(1)[0]))
            rows.append(res.embedding)
            log = log + res.queries
        self.queries_ = log
        return np.vstack(rows)
