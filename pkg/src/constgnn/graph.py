"""Graph storage and the counted oracle interface.

Algorithms never index a graph directly. They go through the three oracles
(degree, i-th neighbor, feature) and every successful call is tallied in a
:class:`QueryLog`. Bulk helpers such as :func:`oracle_neighbor_block` are
shorthand for the equivalent sequence of single queries and are charged
accordingly.

Two storages are provided: :class:`Graph` keeps sorted neighbor lists in
compressed sparse rows, :class:`CompleteGraph` answers queries about
``K_n`` arithmetically so that cliques with 10^5 nodes fit in memory.
"""

from __future__ import annotations

import abc
import csv
import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._validation import (
    DegenerateGraphError,
    MalformedInputError,
    check_node,
    check_nodes,
)

__all__ = [
    "QueryLog",
    "BaseGraph",
    "Graph",
    "CompleteGraph",
    "AdjacencyBlock",
    "SparseAggregator",
    "DenseAggregator",
    "oracle_degree",
    "oracle_neighbor",
    "oracle_feature",
    "oracle_degrees",
    "oracle_neighbors_at",
    "oracle_features",
    "oracle_neighbor_block",
    "with_self_loops",
    "degree_ratio",
    "load_graph",
    "read_graph",
    "format_edge_list",
    "format_features",
]


@dataclass
class QueryLog:
    degree_queries: int = 0
    neighbor_queries: int = 0
    feature_queries: int = 0

    @property
    def total(self) -> int:
        return self.degree_queries + self.neighbor_queries + self.feature_queries

    def __add__(self, other: "QueryLog") -> "QueryLog":
        return QueryLog(
            self.degree_queries + other.degree_queries,
            self.neighbor_queries + other.neighbor_queries,
            self.feature_queries + other.feature_queries,
        )

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.degree_queries, self.neighbor_queries, self.feature_queries)


# ---------------------------------------------------------------------------
# aggregation operators
# ---------------------------------------------------------------------------


class SparseAggregator:
    """Weighted edge list ``(row, col, weight)`` acting as a linear map.

    ``sum(X)[i] = sum_e weight[e] * X[col[e]]`` over edges with ``row[e] == i``.
    Edges are expected grouped by row; within a row the stored order is the
    summation order.
    """

    def __init__(self, row, col, weight, n_rows: int, n_cols: int):
        self.row = np.asarray(row, dtype=np.int64)
        self.col = np.asarray(col, dtype=np.int64)
        self.weight = np.asarray(weight, dtype=np.float64)
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self._matrix = None

    @property
    def matrix(self) -> sp.csr_matrix:
        if self._matrix is None:
            counts = np.bincount(self.row, minlength=self.n_rows)
            indptr = np.concatenate([[0], np.cumsum(counts)])
            order = np.argsort(self.row, kind="stable")
            self._matrix = sp.csr_matrix(
                (self.weight[order], self.col[order], indptr),
                shape=(self.n_rows, self.n_cols),
            )
        return self._matrix

    def sum(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.matrix @ X)

    def sum_T(self, G: np.ndarray) -> np.ndarray:
        return np.asarray(self.matrix.T @ G)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        return self.row, self.col


class DenseAggregator:
    """Adjacency block of a complete graph, weighted ``w_ij = a_i * b_j``.

    The block is materialized a few rows at a time, so the work is
    proportional to the number of edges it represents, as it would be for an
    explicitly stored dense graph.
    """

    max_chunk_entries = 1 << 22

    def __init__(self, row_nodes, col_nodes, self_loops: bool, row_weight, col_weight):
        self.row_nodes = np.asarray(row_nodes, dtype=np.int64)
        self.col_nodes = np.asarray(col_nodes, dtype=np.int64)
        self.self_loops = self_loops
        self.row_weight = np.asarray(row_weight, dtype=np.float64)
        self.col_weight = np.asarray(col_weight, dtype=np.float64)
        self.n_rows = len(self.row_nodes)
        self.n_cols = len(self.col_nodes)
        if self.n_cols:
            pos = np.minimum(np.searchsorted(self.col_nodes, self.row_nodes), self.n_cols - 1)
            hit = self.col_nodes[pos] == self.row_nodes
        else:
            pos = np.zeros(self.n_rows, dtype=np.int64)
            hit = np.zeros(self.n_rows, dtype=bool)
        # column holding each row's own node; -1 when absent or when loops are kept
        self._self_col = np.where(hit & (not self_loops), pos, -1)

    def _chunks(self):
        step = max(1, self.max_chunk_entries // max(self.n_cols, 1))
        for start in range(0, self.n_rows, step):
            stop = min(start + step, self.n_rows)
            block = np.outer(self.row_weight[start:stop], self.col_weight)
            sc = self._self_col[start:stop]
            mask = sc >= 0
            block[np.nonzero(mask)[0], sc[mask]] = 0.0
            yield start, stop, block

    def sum(self, X: np.ndarray) -> np.ndarray:
        out = np.empty((self.n_rows, X.shape[1]))
        for start, stop, block in self._chunks():
            out[start:stop] = block @ X
        return out

    def sum_T(self, G: np.ndarray) -> np.ndarray:
        out = np.zeros((self.n_cols, G.shape[1]))
        for start, stop, block in self._chunks():
            out += block.T @ G[start:stop]
        return out

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        size = self.n_rows * self.n_cols
        if size > 50_000_000:
            raise MemoryError(
                f"refusing to list {size} edges of a dense block; "
                "use a model with linear aggregation on graphs this large"
            )
        row = np.repeat(np.arange(self.n_rows), self.n_cols)
        col = np.tile(np.arange(self.n_cols), self.n_rows)
        sc = np.repeat(self._self_col, self.n_cols)
        keep = sc != col
        return row[keep], col[keep]


# ---------------------------------------------------------------------------
# adjacency blocks
# ---------------------------------------------------------------------------


class AdjacencyBlock(abc.ABC):
    """Neighbor lists of a set of row nodes, already paid for in queries."""

    rows: np.ndarray
    degrees: np.ndarray

    @abc.abstractmethod
    def columns(self) -> np.ndarray:
        """Sorted union of the neighbor lists."""

    @abc.abstractmethod
    def aggregator(self, cols: np.ndarray, row_weight, col_weight):
        """Linear operator from embeddings of ``cols`` to the rows."""


class _CSRBlock(AdjacencyBlock):
    def __init__(self, rows, indptr, indices):
        self.rows = rows
        self.indptr = indptr
        self.indices = indices
        self.degrees = np.diff(indptr)

    def columns(self) -> np.ndarray:
        return np.unique(self.indices)

    def aggregator(self, cols, row_weight, col_weight):
        cols = np.asarray(cols)
        col_pos = np.searchsorted(cols, self.indices)
        if len(self.indices):
            clipped = np.minimum(col_pos, len(cols) - 1)
            if not len(cols) or not np.array_equal(cols[clipped], self.indices):
                raise ValueError("column set does not cover the neighbor lists")
        row = np.repeat(np.arange(len(self.rows)), self.degrees)
        w = np.asarray(row_weight, dtype=np.float64)[row] * np.asarray(col_weight, dtype=np.float64)[col_pos]
        return SparseAggregator(row, col_pos, w, len(self.rows), len(cols))


class _CliqueBlock(AdjacencyBlock):
    def __init__(self, n, rows, self_loops):
        self.n = n
        self.rows = rows
        self.self_loops = self_loops
        self.degrees = np.full(len(rows), n if self_loops else n - 1, dtype=np.int64)

    def columns(self) -> np.ndarray:
        if self.n <= 1 and not self.self_loops:
            return np.empty(0, dtype=np.int64)
        if len(self.rows) == 1 and not self.self_loops:
            return np.delete(np.arange(self.n), self.rows[0])
        if len(self.rows) == 0:
            return np.empty(0, dtype=np.int64)
        return np.arange(self.n)

    def aggregator(self, cols, row_weight, col_weight):
        return DenseAggregator(self.rows, cols, self.self_loops, row_weight, col_weight)


# ---------------------------------------------------------------------------
# graphs
# ---------------------------------------------------------------------------


class BaseGraph(abc.ABC):
    """Undirected graph with one feature row per node."""

    features: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @abc.abstractmethod
    def degrees(self, nodes=None) -> np.ndarray:
        """Raw degrees, no query accounting."""

    @abc.abstractmethod
    def neighbors(self, v: int) -> np.ndarray:
        """Raw sorted neighbor list, no query accounting."""

    @abc.abstractmethod
    def _neighbors_at(self, nodes: np.ndarray, idx: np.ndarray) -> np.ndarray:
        ...

    @abc.abstractmethod
    def _block(self, rows: np.ndarray) -> AdjacencyBlock:
        ...

    def degree(self, v: int) -> int:
        return int(self.degrees(np.array([check_node(v, self.n_nodes)]))[0])


class Graph(BaseGraph):
    """Undirected graph in compressed sparse row layout.

    Parameters
    ----------
    indptr, indices : array-like
        CSR adjacency. Each row must be sorted and free of duplicates and the
        adjacency must be symmetric.
    features : array-like of shape (n_nodes, d0)
    edge_features : array-like of shape (nnz, k), optional
        Per directed edge slot, aligned with ``indices``.
    """

    def __init__(self, indptr, indices, features, edge_features=None, *, validate=True):
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.features = np.asarray(features, dtype=np.float64)
        if edge_features is None:
            edge_features = np.empty((len(self.indices), 0))
        self.edge_features = np.asarray(edge_features, dtype=np.float64)
        if validate:
            self._validate()

    def _validate(self):
        n = self.features.shape[0] if self.features.ndim == 2 else -1
        if self.features.ndim != 2:
            raise MalformedInputError("features must be a 2-d array")
        if len(self.indptr) != n + 1 or self.indptr[0] != 0 or self.indptr[-1] != len(self.indices):
            raise MalformedInputError("indptr does not match the feature row count")
        if np.any(np.diff(self.indptr) < 0):
            raise MalformedInputError("indptr must be non-decreasing")
        if len(self.indices) and (self.indices.min() < 0 or self.indices.max() >= n):
            raise MalformedInputError("neighbor id out of range")
        if self.edge_features.shape[0] != len(self.indices):
            raise MalformedInputError("edge_features must have one row per adjacency entry")
        adj = self.to_scipy()
        if (adj != adj.T).nnz:
            raise MalformedInputError("adjacency is not symmetric")
        row = np.repeat(np.arange(n), np.diff(self.indptr))
        same_row = row[1:] == row[:-1]
        if np.any(self.indices[1:][same_row] <= self.indices[:-1][same_row]):
            raise MalformedInputError("neighbor lists must be sorted without duplicates")

    @classmethod
    def from_edges(cls, n_nodes: int, edges, features) -> "Graph":
        """Build a graph from undirected ``(u, v)`` pairs, symmetrized and deduplicated."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(edges) and (edges.min() < 0 or edges.max() >= n_nodes):
            raise MalformedInputError(f"edge endpoint out of range [0, {n_nodes})")
        both = np.concatenate([edges, edges[:, ::-1]])
        key = np.unique(both[:, 0] * n_nodes + both[:, 1])
        src, dst = np.divmod(key, n_nodes) if n_nodes else (key, key)
        indptr = np.concatenate([[0], np.cumsum(np.bincount(src, minlength=n_nodes))])
        return cls(indptr, dst, features, validate=False)

    def to_scipy(self) -> sp.csr_matrix:
        n = self.n_nodes
        data = np.ones(len(self.indices), dtype=np.int8)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(n, n))

    def edge_list(self) -> np.ndarray:
        """Undirected edges as ``(u, v)`` rows with ``u <= v``."""
        src = np.repeat(np.arange(self.n_nodes), np.diff(self.indptr))
        keep = src <= self.indices
        return np.column_stack([src[keep], self.indices[keep]])

    @property
    def n_edges(self) -> int:
        return len(self.edge_list())

    def degrees(self, nodes=None) -> np.ndarray:
        deg = np.diff(self.indptr)
        return deg if nodes is None else deg[nodes]

    def neighbors(self, v: int) -> np.ndarray:
        v = check_node(v, self.n_nodes)
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def _neighbors_at(self, nodes, idx):
        return self.indices[self.indptr[nodes] + idx]

    def _block(self, rows):
        starts, stops = self.indptr[rows], self.indptr[rows + 1]
        lengths = stops - starts
        indptr = np.concatenate([[0], np.cumsum(lengths)])
        if len(rows):
            offsets = np.repeat(starts - indptr[:-1], lengths)
            indices = self.indices[np.arange(indptr[-1]) + offsets]
        else:
            indices = np.empty(0, dtype=np.int64)
        return _CSRBlock(rows, indptr, indices)

    def __repr__(self):
        return f"Graph(n_nodes={self.n_nodes}, n_edges={self.n_edges}, feature_dim={self.feature_dim})"


class CompleteGraph(BaseGraph):
    """The clique ``K_n`` held implicitly; only the features are stored."""

    def __init__(self, features, self_loops: bool = False):
        self.features = np.asarray(features, dtype=np.float64)
        if self.features.ndim != 2:
            raise MalformedInputError("features must be a 2-d array")
        self.self_loops = bool(self_loops)

    def degrees(self, nodes=None) -> np.ndarray:
        n = self.n_nodes
        d = n if self.self_loops else n - 1
        size = n if nodes is None else len(nodes)
        return np.full(size, d, dtype=np.int64)

    def neighbors(self, v: int) -> np.ndarray:
        v = check_node(v, self.n_nodes)
        nbrs = np.arange(self.n_nodes)
        return nbrs if self.self_loops else np.delete(nbrs, v)

    def _neighbors_at(self, nodes, idx):
        if self.self_loops:
            return idx.copy()
        return idx + (idx >= nodes)

    def _block(self, rows):
        return _CliqueBlock(self.n_nodes, rows, self.self_loops)

    def to_graph(self) -> Graph:
        """Explicit CSR copy; only sensible for small ``n``."""
        n = self.n_nodes
        iu = np.triu_indices(n, 0 if self.self_loops else 1)
        return Graph.from_edges(n, np.column_stack(iu), self.features)

    def __repr__(self):
        return f"CompleteGraph(n_nodes={self.n_nodes}, self_loops={self.self_loops})"


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------


def oracle_degree(g: BaseGraph, v, log: QueryLog) -> int:
    v = check_node(v, g.n_nodes)
    d = int(g.degrees(np.array([v]))[0])
    log.degree_queries += 1
    return d


def oracle_neighbor(g: BaseGraph, v, i, log: QueryLog) -> int:
    v = check_node(v, g.n_nodes)
    d = int(g.degrees(np.array([v]))[0])
    if not 0 <= int(i) < d:
        raise IndexError(f"neighbor index {i} out of range for node {v} of degree {d}")
    u = int(g._neighbors_at(np.array([v]), np.array([int(i)]))[0])
    log.neighbor_queries += 1
    return u


def oracle_feature(g: BaseGraph, v, log: QueryLog) -> np.ndarray:
    v = check_node(v, g.n_nodes)
    log.feature_queries += 1
    return g.features[v].copy()


def oracle_degrees(g: BaseGraph, nodes, log: QueryLog) -> np.ndarray:
    """``len(nodes)`` degree queries."""
    nodes = check_nodes(nodes, g.n_nodes)
    out = np.asarray(g.degrees(nodes), dtype=np.int64)
    log.degree_queries += len(nodes)
    return out


def oracle_neighbors_at(g: BaseGraph, nodes, idx, log: QueryLog) -> np.ndarray:
    """One neighbor query per ``(nodes[k], idx[k])`` pair."""
    nodes = check_nodes(nodes, g.n_nodes)
    idx = np.asarray(idx, dtype=np.int64).reshape(-1)
    if idx.shape != nodes.shape:
        raise ValueError("nodes and idx must have equal length")
    deg = g.degrees(nodes)
    if np.any(idx < 0) or np.any(idx >= deg):
        raise IndexError("neighbor index out of range")
    out = g._neighbors_at(nodes, idx)
    log.neighbor_queries += len(nodes)
    return out


def oracle_features(g: BaseGraph, nodes, log: QueryLog) -> np.ndarray:
    """``len(nodes)`` feature queries."""
    nodes = check_nodes(nodes, g.n_nodes)
    log.feature_queries += len(nodes)
    return g.features[nodes]


def oracle_neighbor_block(g: BaseGraph, rows, log: QueryLog) -> AdjacencyBlock:
    """Full neighbor lists of ``rows``: ``sum(deg(rows))`` neighbor queries."""
    rows = check_nodes(rows, g.n_nodes)
    block = g._block(rows)
    log.neighbor_queries += int(block.degrees.sum())
    return block


# ---------------------------------------------------------------------------
# transforms and loaders
# ---------------------------------------------------------------------------


def with_self_loops(g: BaseGraph) -> BaseGraph:
    """Return ``g`` with every node listed once in its own neighbor list."""
    if isinstance(g, CompleteGraph):
        return g if g.self_loops else CompleteGraph(g.features, self_loops=True)
    n = g.n_nodes
    loops = np.column_stack([np.arange(n), np.arange(n)])
    return Graph.from_edges(n, np.concatenate([g.edge_list(), loops]), g.features)


def degree_ratio(g: BaseGraph) -> float:
    """``max deg / min deg``, the constant bounding degree skew."""
    deg = g.degrees()
    if len(deg) == 0 or deg.min() == 0:
        raise DegenerateGraphError("degree ratio is undefined with a degree-0 node")
    return float(deg.max() / deg.min())


def _parse_features(feature_csv_text: str) -> np.ndarray:
    rows = [r for r in csv.reader(io.StringIO(feature_csv_text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise MalformedInputError("feature CSV is empty")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise MalformedInputError("ragged feature rows")
    try:
        return np.array([[float(c) for c in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise MalformedInputError(f"non-numeric feature value: {exc}") from None


def _parse_edges(edge_list_text: str) -> np.ndarray:
    pairs = []
    for lineno, line in enumerate(edge_list_text.splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 2:
            raise MalformedInputError(f"line {lineno}: expected 'u v', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise MalformedInputError(f"line {lineno}: node ids must be integers") from None
        pairs.append((u, v))
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def load_graph(edge_list_text: str, feature_csv_text: str) -> Graph:
    """Parse an edge list and a feature CSV into a :class:`Graph`.

    The node count is the number of feature rows. Edges are symmetrized and
    duplicates collapsed.
    """
    features = _parse_features(feature_csv_text)
    edges = _parse_edges(edge_list_text)
    return Graph.from_edges(features.shape[0], edges, features)


def read_graph(edge_path, feature_path) -> Graph:
    with open(edge_path, encoding="utf-8") as fe, open(feature_path, encoding="utf-8") as ff:
        return load_graph(fe.read(), ff.read())


def format_edge_list(g: BaseGraph) -> str:
    if isinstance(g, CompleteGraph):
        g = g.to_graph()
    return "".join(f"{u} {v}\n" for u, v in g.edge_list())


def format_features(g: BaseGraph) -> str:
    return "".join(",".join(f"{x:.17g}" for x in row) + "\n" for row in g.features)
