"""Model variants, activations and parameters.

The single-node functions here (:func:`message`, :func:`update`,
:func:`pool_aggregate`, :func:`gat_attention`) define each model. The engines
use batched equivalents from :mod:`constgnn.layers`; the test-suite checks the
two against each other.

Layers are numbered from 1 as in ``z^(1), ..., z^(L)``; ``params.weights[l - 1]``
holds ``W^(l)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ._validation import DegenerateGraphError, ShapeError

__all__ = [
    "Variant",
    "Activation",
    "ModelSpec",
    "Params",
    "GradTensor",
    "LEAKY_SLOPE",
    "activation_apply",
    "activation_vjp",
    "message",
    "update",
    "pool_aggregate",
    "gat_attention",
    "init_params",
    "format_params",
    "parse_params",
    "save_params",
    "load_params",
]

LEAKY_SLOPE = 0.2


class Variant(str, enum.Enum):
    SAGE_GCN = "sage_gcn"
    SAGE_MEAN = "sage_mean"
    SAGE_POOL = "sage_pool"
    GCN = "gcn"
    GAT = "gat"

    @property
    def uses_center(self) -> bool:
        """Whether layer ``l`` reads the center node's own ``z^(l-1)``."""
        return self in (Variant.SAGE_MEAN, Variant.GAT)

    @property
    def is_linear_aggregation(self) -> bool:
        return self in (Variant.SAGE_GCN, Variant.SAGE_MEAN, Variant.GCN)


class Activation(str, enum.Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"
    RELU = "relu"
    RELU_NORMALIZE = "relu_normalize"
    LINEAR = "linear"


def _as_variant(v) -> Variant:
    try:
        return v if isinstance(v, Variant) else Variant(str(v).lower())
    except ValueError:
        raise ValueError(f"unknown model variant {v!r}; choose from {[x.value for x in Variant]}") from None


def _as_activation(a) -> Activation:
    try:
        return a if isinstance(a, Activation) else Activation(str(a).lower())
    except ValueError:
        raise ValueError(f"unknown activation {a!r}; choose from {[x.value for x in Activation]}") from None


@dataclass(frozen=True)
class ModelSpec:
    """Model structure: variant, activation and widths ``[d0, d1, ..., dL]``."""

    variant: Variant
    activation: Activation
    dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "variant", _as_variant(self.variant))
        object.__setattr__(self, "activation", _as_activation(self.activation))
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 2:
            raise ValueError("dims must list at least [d0, d1] (one layer)")
        if min(dims) < 1:
            raise ValueError("all widths must be >= 1")
        object.__setattr__(self, "dims", dims)

    @classmethod
    def uniform(cls, variant, activation, layers: int, width: int, in_dim: int | None = None):
        """``layers`` layers of equal width, input width ``in_dim`` (default ``width``)."""
        if layers < 1:
            raise ValueError("layers must be >= 1")
        return cls(variant, activation, (in_dim or width,) + (width,) * layers)

    @property
    def layers(self) -> int:
        return len(self.dims) - 1

    def weight_shape(self, l: int) -> tuple[int, int]:
        d_in = self.dims[l - 1]
        if self.variant is Variant.SAGE_MEAN:
            d_in *= 2
        return (self.dims[l], d_in)


@dataclass(frozen=True)
class Params:
    """Model parameters: one block per weight, attention vector and bias."""

    weights: tuple
    attention: tuple | None = None
    pool_bias: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(np.asarray(w, dtype=np.float64) for w in self.weights))
        for name in ("attention", "pool_bias"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, tuple(np.asarray(x, dtype=np.float64) for x in val))

    def blocks(self) -> list[tuple[str, int, np.ndarray]]:
        out = [("W", l + 1, w) for l, w in enumerate(self.weights)]
        if self.attention is not None:
            out += [("a", l + 1, a) for l, a in enumerate(self.attention)]
        if self.pool_bias is not None:
            out += [("b", l + 1, b) for l, b in enumerate(self.pool_bias)]
        return out

    @property
    def size(self) -> int:
        return sum(x.size for _, _, x in self.blocks())

    def ravel(self) -> np.ndarray:
        return np.concatenate([x.ravel() for _, _, x in self.blocks()])

    def with_flat(self, flat) -> "Params":
        """Same structure, entries replaced by ``flat`` (in :meth:`ravel` order)."""
        flat = np.asarray(flat, dtype=np.float64)
        it = iter(_split(flat, [x.shape for _, _, x in self.blocks()]))
        weights = tuple(next(it) for _ in self.weights)
        attention = tuple(next(it) for _ in self.attention) if self.attention is not None else None
        pool_bias = tuple(next(it) for _ in self.pool_bias) if self.pool_bias is not None else None
        return Params(weights, attention, pool_bias)

    def check(self, spec: ModelSpec) -> "Params":
        if len(self.weights) != spec.layers:
            raise ShapeError(f"expected {spec.layers} weight matrices, got {len(self.weights)}")
        for l, w in enumerate(self.weights, 1):
            if w.shape != spec.weight_shape(l):
                raise ShapeError(f"W^({l}) has shape {w.shape}, expected {spec.weight_shape(l)}")
        if spec.variant is Variant.GAT:
            if self.attention is None or len(self.attention) != spec.layers:
                raise ShapeError("GAT needs one attention vector per layer")
            for l, a in enumerate(self.attention, 1):
                if a.shape != (2 * spec.dims[l],):
                    raise ShapeError(f"a^({l}) has shape {a.shape}, expected {(2 * spec.dims[l],)}")
        if spec.variant is Variant.SAGE_POOL:
            if self.pool_bias is None or len(self.pool_bias) != spec.layers:
                raise ShapeError("GraphSAGE-pool needs one bias vector per layer")
            for l, b in enumerate(self.pool_bias, 1):
                if b.shape != (spec.dims[l],):
                    raise ShapeError(f"b^({l}) has shape {b.shape}, expected {(spec.dims[l],)}")
        for _, _, x in self.blocks():
            if not np.all(np.isfinite(x)):
                raise ValueError("parameters contain non-finite entries")
        return self


def _split(flat, shapes):
    out, pos = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        out.append(flat[pos:pos + size].reshape(shape))
        pos += size
    if pos != flat.size:
        raise ShapeError(f"flat vector has {flat.size} entries, expected {pos}")
    return out


@dataclass(frozen=True)
class GradTensor:
    """Jacobian ``d z_v / d theta`` laid out per parameter block.

    Each block has a leading axis over the output coordinates of ``z_v`` and
    then the shape of the matching block in :class:`Params`; so
    ``weights[l][i, j, k] = d z_v[i] / d W^(l+1)[j, k]``.
    """

    weights: tuple
    attention: tuple | None = None
    pool_bias: tuple | None = None

    def blocks(self) -> list[tuple[str, int, np.ndarray]]:
        return Params.blocks(self)  # same layout

    def ravel(self) -> np.ndarray:
        """Matrix of shape ``(d_L, n_params)``."""
        parts = [x.reshape(x.shape[0], -1) for _, _, x in self.blocks()]
        return np.concatenate(parts, axis=1)

    def frobenius(self) -> float:
        return float(np.sqrt(sum(np.sum(x * x) for _, _, x in self.blocks())))

    def __sub__(self, other: "GradTensor") -> "GradTensor":
        def sub(a, b):
            return None if a is None else tuple(x - y for x, y in zip(a, b))

        return GradTensor(
            sub(self.weights, other.weights),
            sub(self.attention, other.attention),
            sub(self.pool_bias, other.pool_bias),
        )


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------


def _row_norm(r):
    # rescale by the largest entry so tiny rows do not underflow to norm 0
    top = r.max(axis=-1, keepdims=True) if r.size else np.zeros(r.shape[:-1] + (1,))
    safe = np.where(top > 0, top, 1.0)
    return np.linalg.norm(r / safe, axis=-1, keepdims=True) * top


def activation_apply(tag, x) -> np.ndarray:
    """Apply an activation to a vector, or row-wise to a matrix.

    ``relu_normalize`` divides the ReLU output by its Euclidean norm; rows
    whose ReLU output is all zero map to the zero vector.
    """
    tag = _as_activation(tag)
    x = np.asarray(x, dtype=np.float64)
    if tag is Activation.SIGMOID:
        return expit(x)
    if tag is Activation.TANH:
        return np.tanh(x)
    if tag is Activation.RELU:
        return np.maximum(x, 0.0)
    if tag is Activation.LINEAR:
        return x.copy()
    r = np.maximum(x, 0.0)
    norm = _row_norm(r)
    return np.divide(r, norm, out=np.zeros_like(r), where=norm > 0)


def activation_vjp(tag, pre: np.ndarray, out: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Pull ``grad`` (w.r.t. the output) back to the pre-activation.

    ReLU has derivative 0 at exactly 0.
    """
    tag = _as_activation(tag)
    if tag is Activation.SIGMOID:
        return grad * out * (1.0 - out)
    if tag is Activation.TANH:
        return grad * (1.0 - out * out)
    if tag is Activation.RELU:
        return grad * (pre > 0)
    if tag is Activation.LINEAR:
        return grad
    norm = _row_norm(np.maximum(pre, 0.0))
    proj = grad - out * np.sum(out * grad, axis=-1, keepdims=True)
    g_r = np.divide(proj, norm, out=np.zeros_like(proj), where=norm > 0)
    return g_r * (pre > 0)


# ---------------------------------------------------------------------------
# single-node model functions
# ---------------------------------------------------------------------------


def message(spec: ModelSpec, params: Params, l: int, v, u, z_v, z_u, deg_v, deg_u, e_vu=None) -> np.ndarray:
    """Message from ``u`` to ``v`` at layer ``l``.

    GraphSAGE-GCN and GraphSAGE-mean send ``z_u / deg(v)``, GCN sends
    ``z_u / sqrt(deg(v) deg(u))``. GAT and GraphSAGE-pool do not aggregate by
    summing messages; use :func:`gat_attention` and :func:`pool_aggregate`.
    """
    z_u = np.asarray(z_u, dtype=np.float64)
    if deg_v < 1:
        raise DegenerateGraphError(f"node {v} has degree {deg_v}")
    if spec.variant in (Variant.SAGE_GCN, Variant.SAGE_MEAN):
        return z_u / deg_v
    if spec.variant is Variant.GCN:
        if deg_u < 1:
            raise DegenerateGraphError(f"node {u} has degree {deg_u}")
        return z_u / np.sqrt(deg_v * deg_u)
    raise ValueError(f"{spec.variant.value} does not aggregate through summed messages")


def update(spec: ModelSpec, params: Params, l: int, z_v, h_v) -> np.ndarray:
    """``sigma(W h)``; GraphSAGE-mean uses ``sigma(W [z_v, h])``."""
    w = params.weights[l - 1]
    h_v = np.asarray(h_v, dtype=np.float64)
    if spec.variant is Variant.SAGE_MEAN:
        h_v = np.concatenate([np.asarray(z_v, dtype=np.float64), h_v])
    if w.ndim != 2 or w.shape[1] != h_v.shape[-1]:
        raise ShapeError(f"W^({l}) of shape {w.shape} cannot act on a vector of width {h_v.shape[-1]}")
    return activation_apply(spec.activation, w @ h_v)


def pool_aggregate(spec: ModelSpec, params: Params, l: int, neighbor_embeddings) -> np.ndarray:
    """Elementwise maximum of ``sigma(W z_u + b)`` over the given neighbors."""
    z = np.asarray(neighbor_embeddings, dtype=np.float64)
    if z.ndim != 2 or len(z) == 0:
        raise DegenerateGraphError("pooling over an empty neighbor set")
    w, b = params.weights[l - 1], params.pool_bias[l - 1]
    return activation_apply(spec.activation, z @ w.T + b).max(axis=0)


def gat_attention(params: Params, l: int, z_v, z_u_list) -> np.ndarray:
    """Attention weights of ``z_v`` over ``z_u_list`` (softmax of LeakyReLU scores)."""
    z_u = np.asarray(z_u_list, dtype=np.float64)
    if z_u.ndim != 2 or len(z_u) == 0:
        raise DegenerateGraphError("attention over an empty neighbor set")
    w, a = params.weights[l - 1], params.attention[l - 1]
    d = w.shape[0]
    score = a[:d] @ (w @ np.asarray(z_v, dtype=np.float64)) + (z_u @ w.T) @ a[d:]
    score = np.where(score > 0, score, LEAKY_SLOPE * score)
    e = np.exp(score - score.max())
    return e / e.sum()


# ---------------------------------------------------------------------------
# initialization and serialization
# ---------------------------------------------------------------------------


def init_params(spec: ModelSpec, seed=None, scale: float = 1.0) -> Params:
    """Draw every parameter entry i.i.d. from ``N(0, scale^2)``."""
    if not scale > 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    rng = np.random.default_rng(seed)
    weights = tuple(rng.normal(0.0, scale, spec.weight_shape(l)) for l in range(1, spec.layers + 1))
    attention = pool_bias = None
    if spec.variant is Variant.GAT:
        attention = tuple(rng.normal(0.0, scale, 2 * spec.dims[l]) for l in range(1, spec.layers + 1))
    if spec.variant is Variant.SAGE_POOL:
        pool_bias = tuple(rng.normal(0.0, scale, spec.dims[l]) for l in range(1, spec.layers + 1))
    return Params(weights, attention, pool_bias)


def format_params(params: Params) -> str:
    lines = []
    for name, l, x in params.blocks():
        if name == "W":
            lines.append(f"W {l} {x.shape[0]} {x.shape[1]}")
            lines.extend(" ".join(f"{v:.17g}" for v in row) for row in x)
        else:
            lines.append(f"{name} {l} {x.shape[0]}")
            lines.append(" ".join(f"{v:.17g}" for v in x))
    return "\n".join(lines) + "\n"


def parse_params(text: str) -> Params:
    lines = [ln.split() for ln in text.splitlines() if ln.strip()]
    blocks: dict[str, dict[int, np.ndarray]] = {"W": {}, "a": {}, "b": {}}
    i = 0
    while i < len(lines):
        head = lines[i]
        name = head[0]
        try:
            if name == "W" and len(head) == 4:
                l, rows, cols = map(int, head[1:])
                mat = np.array([[float(v) for v in ln] for ln in lines[i + 1:i + 1 + rows]])
                if mat.shape != (rows, cols):
                    raise ValueError(f"W {l}: expected {rows}x{cols} values")
                blocks["W"][l] = mat
                i += 1 + rows
            elif name in ("a", "b") and len(head) == 3:
                l, size = int(head[1]), int(head[2])
                vec = np.array([float(v) for v in lines[i + 1]]) if size else np.empty(0)
                if vec.shape != (size,):
                    raise ValueError(f"{name} {l}: expected {size} values")
                blocks[name][l] = vec
                i += 2
            else:
                raise ValueError(f"unrecognized header {' '.join(head)!r}")
        except (IndexError, ValueError) as exc:
            raise ValueError(f"malformed parameter file: {exc}") from None

    def ordered(d):
        if not d:
            return None
        if sorted(d) != list(range(1, len(d) + 1)):
            raise ValueError("parameter layers must be numbered 1..L without gaps")
        return tuple(d[k] for k in sorted(d))

    if not blocks["W"]:
        raise ValueError("malformed parameter file: no weight matrices")
    return Params(ordered(blocks["W"]), ordered(blocks["a"]), ordered(blocks["b"]))


def save_params(params: Params, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_params(params))


def load_params(path) -> Params:
    with open(path, encoding="utf-8") as f:
        return parse_params(f.read())
