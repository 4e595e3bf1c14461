"""Input validation helpers shared across the package."""

from __future__ import annotations

import numbers

import numpy as np


class MalformedInputError(ValueError):
    """Raised when an input file or array does not follow the expected format."""


class DegenerateGraphError(ValueError):
    """Raised when a computation hits a zero degree or an empty neighbor set."""


class ShapeError(ValueError):
    """Raised when parameter or vector shapes do not line up."""


def check_node(v, n_nodes: int) -> int:
    if isinstance(v, (bool, np.bool_)) or not isinstance(v, numbers.Integral):
        raise TypeError(f"node id must be an integer, got {type(v).__name__}")
    v = int(v)
    if not 0 <= v < n_nodes:
        raise IndexError(f"node {v} out of range [0, {n_nodes})")
    return v


def check_nodes(nodes, n_nodes: int) -> np.ndarray:
    nodes = np.asarray(nodes)
    if nodes.size and not np.issubdtype(nodes.dtype, np.integer):
        raise TypeError("node ids must be integers")
    nodes = nodes.astype(np.int64, copy=False).reshape(-1)
    if nodes.size and (nodes.min() < 0 or nodes.max() >= n_nodes):
        raise IndexError(f"node ids out of range [0, {n_nodes})")
    return nodes


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, (bool, np.bool_)) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_probability(p, name: str = "p", *, open_interval: bool = False) -> float:
    p = float(p)
    if open_interval:
        if not 0.0 < p < 1.0:
            raise ValueError(f"{name} must lie in (0, 1), got {p}")
    elif not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")
    return p


def check_finite_matrix(a, name: str, ndim: int = 2) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a
