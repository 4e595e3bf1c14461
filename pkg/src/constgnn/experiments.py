"""Experiment drivers producing per-trial CSV records.

Every driver takes an :class:`ExperimentConfig` and returns an
:class:`ExperimentResult`: the raw :class:`TrialRecord` rows (what goes into
the CSV) plus a ``summary`` dict of derived statistics. Trial seeds are
derived from ``config.seed`` and the row coordinates, so a rerun with the same
config reproduces the CSV byte for byte. Wall time is only recorded by the
speed experiment; elsewhere the column is 0.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from ._validation import check_positive_int
from .exact import exact_embed, exact_gradient
from .graph import CompleteGraph, QueryLog, read_graph, with_self_loops
from .models import ModelSpec, Params, init_params, load_params
from .sampling import SampleSchedule, sampled_embed, sampled_gradient
from .synthgen import counterexample, gen_ba, gen_er

__all__ = [
    "CSV_COLUMNS",
    "TrialRecord",
    "ExperimentConfig",
    "ExperimentResult",
    "percentile",
    "loglog_slope",
    "write_csv",
    "format_csv",
    "run_speed",
    "run_error_vs_samples",
    "run_rate",
    "run_on_loaded_graph",
    "run_experiment",
]

CSV_COLUMNS = ("experiment", "n", "r", "trial", "seed", "error", "wall_time_ns", "q_deg", "q_nbr", "q_feat")


@dataclass(frozen=True)
class TrialRecord:
    experiment: str
    n: int
    r: int
    trial: int
    seed: int
    error: float
    wall_time_ns: int = 0
    q_deg: int = 0
    q_nbr: int = 0
    q_feat: int = 0

    def __post_init__(self):
        if not self.error >= 0:
            raise ValueError(f"error must be non-negative, got {self.error}")

    @classmethod
    def make(cls, experiment, n, r, trial, seed, error, log: QueryLog, wall_time_ns=0):
        return cls(experiment, int(n), int(r), int(trial), int(seed), float(error), int(wall_time_ns),
                   *log.as_tuple())


@dataclass
class ExperimentConfig:
    """Parameters for one experiment run.

    ``experiment`` is one of ``speed``, ``error``, ``rate``, ``real``.
    For ``error`` either ``fixture`` names a counterexample or ``generator``
    is ``ba``/``er``; ``quantity`` selects embedding or gradient error.
    """

    experiment: str = "error"
    r_values: tuple = (5, 30, 100)
    trials: int = 100
    seed: int = 0
    model: str = "sage_gcn"
    activation: str | None = None
    layers: int = 1
    width: int = 10
    n: int = 10_000
    sizes: tuple = (128, 256, 512)
    fixture: str | None = None
    variant: str = "A"
    generator: str | None = None
    graphs: int = 1
    attach: int = 2
    p: float = 0.5
    quantity: str = "embedding"
    self_loops: bool = True
    graph_path: str | None = None
    features_path: str | None = None
    params_path: str | None = None
    test_nodes: int = 20
    scale: float = 1.0
    out: str | None = None

    def __post_init__(self):
        self.r_values = tuple(int(r) for r in self.r_values)
        self.sizes = tuple(int(s) for s in self.sizes)
        if not self.r_values:
            raise ValueError("r_values must not be empty")
        for r in self.r_values:
            check_positive_int(r, "r")
        check_positive_int(self.trials, "trials")
        if self.quantity not in ("embedding", "gradient"):
            raise ValueError(f"quantity must be 'embedding' or 'gradient', got {self.quantity!r}")

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        """Build from string-valued ``key = value`` pairs, converting by field type."""
        kwargs = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            if not isinstance(raw, str):
                kwargs[key] = raw
                continue
            kind = types[key]
            if kind == "tuple":
                kwargs[key] = tuple(int(x) for x in raw.replace(",", " ").split())
            elif kind == "int":
                kwargs[key] = int(raw)
            elif kind == "float":
                kwargs[key] = float(raw)
            elif kind == "bool":
                kwargs[key] = raw.strip().lower() in ("1", "true", "yes", "on")
            else:
                kwargs[key] = raw
        return cls(**kwargs)


@dataclass
class ExperimentResult:
    records: list
    summary: dict = field(default_factory=dict)

    def errors(self, r: int, experiment: str | None = None) -> np.ndarray:
        return np.array([rec.error for rec in self.records
                         if rec.r == r and (experiment is None or rec.experiment == experiment)])


def percentile(values, p: float) -> float:
    """Nearest-rank percentile: the ``ceil(p/100 * N)``-th smallest value."""
    x = np.sort(np.asarray(values, dtype=np.float64))
    if len(x) == 0:
        raise ValueError("percentile of an empty sample")
    if not 0 < p <= 100:
        raise ValueError(f"p must lie in (0, 100], got {p}")
    return float(x[max(1, math.ceil(p / 100 * len(x))) - 1])


def loglog_slope(r_values, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(r)``."""
    return float(np.polyfit(np.log(np.asarray(r_values, float)), np.log(np.asarray(errors, float)), 1)[0])


def format_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        row = dataclasses.astuple(rec)
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def write_csv(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_csv(records))


def _seed(base: int, *keys: int) -> int:
    """Deterministic 63-bit seed for the row at ``keys``."""
    state = np.random.SeedSequence(base, spawn_key=tuple(int(k) for k in keys)).generate_state(2, np.uint32)
    return int(state[0]) << 31 | int(state[1]) >> 1


def _spec(config: ExperimentConfig, in_dim: int) -> ModelSpec:
    dims = (in_dim,) + (config.width,) * config.layers
    return ModelSpec(config.model, config.activation or "sigmoid", dims)


def _error(config, g, spec, params, v, schedule, seed, truth):
    if config.quantity == "gradient":
        est = sampled_gradient(g, spec, params, v, schedule, seed)
        log = sampled_embed(g, spec, params, v, schedule, seed).queries
        return (est - truth).frobenius(), log
    res = sampled_embed(g, spec, params, v, schedule, seed)
    return float(np.linalg.norm(res.embedding - truth)), res.queries


def _truth(config, g, spec, params, v):
    if config.quantity == "gradient":
        return exact_gradient(g, spec, params, v)
    return exact_embed(g, spec, params, v).embedding


def _summarize(result: ExperimentResult, r_values, experiment=None) -> dict:
    rows = {}
    for r in r_values:
        e = result.errors(r, experiment)
        rows[r] = {"mean": float(e.mean()), "median": percentile(e, 50), "p99": percentile(e, 99)}
    return rows


def run_speed(config: ExperimentConfig) -> ExperimentResult:
    """Exact vs sampled inference time on cliques of each size in ``config.sizes``.

    Each of ``config.trials`` repetitions times one exact and one sampled call
    (same target node 0). Sampled rows carry the estimate's error.
    """
    records = []
    summary = {}
    r = config.r_values[0]
    for n in config.sizes:
        g = CompleteGraph(np.random.default_rng(_seed(config.seed, n, 0)).standard_normal((n, 10)),
                          self_loops=config.self_loops)
        spec = _spec(config, 10)
        params = init_params(spec, _seed(config.seed, n, 1))
        schedule = SampleSchedule.uniform(r, spec.layers)
        times = {"exact": [], "sampled": []}
        for t in range(config.trials):
            t0 = time.perf_counter_ns()
            exact = exact_embed(g, spec, params, 0)
            t1 = time.perf_counter_ns()
            seed = _seed(config.seed, n, 2, t)
            est = sampled_embed(g, spec, params, 0, schedule, seed)
            t2 = time.perf_counter_ns()
            times["exact"].append(t1 - t0)
            times["sampled"].append(t2 - t1)
            records.append(TrialRecord.make("speed-exact", n, 0, t, 0, 0.0, exact.queries, t1 - t0))
            err = np.linalg.norm(est.embedding - exact.embedding)
            records.append(TrialRecord.make("speed-sampled", n, r, t, seed, err, est.queries, t2 - t1))
        summary[n] = {
            method: {"median_ns": float(np.median(v)), "mean_ns": float(np.mean(v)), "std_ns": float(np.std(v))}
            for method, v in times.items()
        }
        summary[n]["exact_queries"] = exact.queries.total
        summary[n]["sampled_queries"] = est.queries.total
    return ExperimentResult(records, summary)


def _generated(config, r, k):
    if config.generator == "ba":
        n = r * r
        return gen_ba(n, config.attach, _seed(config.seed, r, k, 0))
    if config.generator == "er":
        n = int(math.floor(r ** 1.5))
        return gen_er(n, config.p, _seed(config.seed, r, k, 0))
    raise ValueError(f"unknown generator {config.generator!r}")


def run_error_vs_samples(config: ExperimentConfig) -> ExperimentResult:
    """Per-(r, trial) error of the sampled estimate against the exact value.

    With ``config.fixture`` the target is the fixture's node on a graph shared
    by all r. With ``config.generator`` every r gets ``config.graphs`` fresh
    graphs (``n = r^2`` for BA, ``floor(r^1.5)`` for ER) and the target is the
    node of maximum degree; ``trial`` then runs over graphs times trials.
    """
    records = []
    if config.fixture is not None:
        fx = counterexample(config.fixture, config.n, config.variant, config.activation)
        g, spec, params, v = fx.graph, fx.spec, fx.params, fx.target_node
        truth = _truth(config, g, spec, params, v)
        for r in config.r_values:
            schedule = SampleSchedule.uniform(r, spec.layers)
            for t in range(config.trials):
                seed = _seed(config.seed, r, t)
                err, log = _error(config, g, spec, params, v, schedule, seed, truth)
                records.append(TrialRecord.make(f"error-{config.fixture}", g.n_nodes, r, t, seed, err, log))
    elif config.generator is not None:
        for r in config.r_values:
            schedule = SampleSchedule.uniform(r, config.layers)
            for k in range(config.graphs):
                g = _generated(config, r, k)
                if config.self_loops:
                    g = with_self_loops(g)
                spec = _spec(config, g.feature_dim)
                params = init_params(spec, _seed(config.seed, k, 1), config.scale)
                v = int(np.argmax(g.degrees()))
                truth = _truth(config, g, spec, params, v)
                for t in range(config.trials):
                    seed = _seed(config.seed, r, k, 2, t)
                    err, log = _error(config, g, spec, params, v, schedule, seed, truth)
                    trial = k * config.trials + t
                    records.append(TrialRecord.make(f"error-{config.generator}", g.n_nodes, r, trial, seed, err, log))
    else:
        raise ValueError("error experiment needs a fixture or a generator")
    result = ExperimentResult(records)
    result.summary = _summarize(result, config.r_values)
    return result


def run_rate(config: ExperimentConfig) -> ExperimentResult:
    """Decay of the 99th-percentile error with r.

    One-layer SAGE-GCN with sigmoid on a self-looped clique of ``config.n``
    nodes, features uniform on ``{-1, 1}^2`` and a standard normal ``2 x 2``
    weight rescaled to unit operator norm. The summary holds the per-r
    percentile, the log-log slope and the Spearman correlation of the
    percentiles with r.
    """
    if len(config.r_values) < 3:
        raise ValueError("the rate fit needs at least 3 values of r")
    rng = np.random.default_rng(_seed(config.seed, 0))
    x = rng.choice([-1.0, 1.0], size=(config.n, 2))
    W = rng.standard_normal((2, 2))
    W /= np.linalg.norm(W, 2)
    g = CompleteGraph(x, self_loops=True)
    spec = ModelSpec("sage_gcn", "sigmoid", (2, 2))
    params = Params((W,))
    truth = exact_embed(g, spec, params, 0).embedding
    records = []
    for r in config.r_values:
        schedule = SampleSchedule((r,))
        for t in range(config.trials):
            seed = _seed(config.seed, r, t)
            res = sampled_embed(g, spec, params, 0, schedule, seed)
            err = np.linalg.norm(res.embedding - truth)
            records.append(TrialRecord.make("rate", config.n, r, t, seed, err, res.queries))
    result = ExperimentResult(records)
    p99 = [percentile(result.errors(r), 99) for r in config.r_values]
    result.summary = {
        "p99": dict(zip(config.r_values, p99)),
        "slope": loglog_slope(config.r_values, p99),
        "spearman": float(spearmanr(config.r_values, p99)[0]),
    }
    return result


def run_on_loaded_graph(config: ExperimentConfig) -> ExperimentResult:
    """Normalized 99th-percentile embedding and gradient errors on a graph read from disk.

    ``config.test_nodes`` targets are drawn uniformly without replacement;
    every (r, target) pair gets ``config.trials`` seeded estimates. Percentiles
    are divided by their value at r = 1, which is added to the r list if absent.
    """
    if not config.graph_path or not config.features_path:
        raise ValueError("the real-data experiment needs graph_path and features_path")
    g = read_graph(config.graph_path, config.features_path)
    if config.self_loops:
        g = with_self_loops(g)
    if config.params_path:
        params = load_params(config.params_path)
        dims = (params.weights[0].shape[1] // (2 if config.model == "sage_mean" else 1),)
        dims += tuple(w.shape[0] for w in params.weights)
        spec = ModelSpec(config.model, config.activation or "sigmoid", dims)
    else:
        spec = _spec(config, g.feature_dim)
        params = init_params(spec, _seed(config.seed, 0))
    r_values = config.r_values if 1 in config.r_values else (1,) + config.r_values
    rng = np.random.default_rng(_seed(config.seed, 1))
    targets = rng.choice(g.n_nodes, size=min(config.test_nodes, g.n_nodes), replace=False)
    truths = {int(v): (exact_embed(g, spec, params, int(v)).embedding, exact_gradient(g, spec, params, int(v)))
              for v in targets}
    records = []
    for r in r_values:
        schedule = SampleSchedule.uniform(r, spec.layers)
        trial = 0
        for v in targets:
            z, grad = truths[int(v)]
            for t in range(config.trials):
                seed = _seed(config.seed, r, int(v), t)
                est = sampled_embed(g, spec, params, int(v), schedule, seed)
                gest = sampled_gradient(g, spec, params, int(v), schedule, seed)
                records.append(TrialRecord.make("real-embedding", g.n_nodes, r, trial, seed,
                                                np.linalg.norm(est.embedding - z), est.queries))
                records.append(TrialRecord.make("real-gradient", g.n_nodes, r, trial, seed,
                                                (gest - grad).frobenius(), est.queries))
                trial += 1
    result = ExperimentResult(records)
    summary = {}
    for kind in ("real-embedding", "real-gradient"):
        p99 = np.array([percentile(result.errors(r, kind), 99) for r in r_values])
        base = p99[r_values.index(1)]
        base = base if base > 0 else 1.0
        summary[kind] = {"p99": dict(zip(r_values, p99.tolist())),
                         "normalized": dict(zip(r_values, (p99 / base).tolist())),
                         "spearman": float(spearmanr(r_values, p99)[0]) if len(r_values) > 1 else float("nan")}
    result.summary = summary
    return result


_DRIVERS = {"speed": run_speed, "error": run_error_vs_samples, "rate": run_rate, "real": run_on_loaded_graph}


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Dispatch on ``config.experiment`` and write the CSV to ``config.out`` if set."""
    try:
        driver = _DRIVERS[config.experiment]
    except KeyError:
        raise ValueError(f"unknown experiment {config.experiment!r}; expected one of {sorted(_DRIVERS)}") from None
    result = driver(config)
    if config.out:
        write_csv(result.records, config.out)
    return result
