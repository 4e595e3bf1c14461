"""Command-line entry point: ``constgnn <command> [options]``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .exact import exact_embed, exact_gradient
from .experiments import ExperimentConfig, run_experiment
from .graph import format_edge_list, format_features, read_graph, with_self_loops
from .models import ModelSpec, init_params, load_params, save_params
from .sampling import SampleSchedule, ToleranceSpec, default_schedule, required_samples, sampled_embed, sampled_gradient
from .synthgen import gen_ba, gen_clique, gen_er, gen_star


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def _ints(text):
    return tuple(int(x) for x in str(text).replace(",", " ").split())


def _add_model_flags(p):
    p.add_argument("--graph", help="edge-list file")
    p.add_argument("--features", help="feature CSV file")
    p.add_argument("--params", help="parameter file (random N(0,1) parameters if omitted)")
    p.add_argument("--model", help="sage_gcn, sage_mean, sage_pool, gcn or gat")
    p.add_argument("--activation", help="sigmoid, tanh, relu, relu_normalize or linear")
    p.add_argument("--layers", type=int, help="number of layers L")
    p.add_argument("--dims", help="hidden widths d1..dL, comma separated (d0 comes from the features)")
    p.add_argument("--node", type=int, help="target node")
    p.add_argument("--no-self-loops", action="store_true", help="do not add self-loops before embedding")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="write the result here instead of stdout")
    p.add_argument("--config", help="file of 'key = value' lines; flags override it")


def _add_sampling_flags(p):
    p.add_argument("--r", type=int, help="samples per layer, same at every layer")
    p.add_argument("--schedule", help="per-layer sample counts r1,..,rL")
    p.add_argument("--eps", type=float, help="error tolerance for the default schedule")
    p.add_argument("--delta", type=float, help="failure probability for the default schedule")
    p.add_argument("--B", dest="bound_B", type=float, help="norm bound on the summands")
    p.add_argument("--d", dest="dim_d", type=int, help="dimension used by the sample-size bound")


def _merged(args) -> dict:
    """Config file values overridden by every flag that was given."""
    values = read_config(args.config) if getattr(args, "config", None) else {}
    for key, value in vars(args).items():
        if key in ("config", "command", "func", "kind") or value is None or value is False:
            continue
        values[key] = value
    return values


def _model_inputs(opts):
    for key in ("graph", "features"):
        if key not in opts:
            raise SystemExit(f"error: --{key} is required")
    g = read_graph(opts["graph"], opts["features"])
    if not opts.get("no_self_loops"):
        g = with_self_loops(g)
    variant = opts.get("model", "sage_gcn")
    activation = opts.get("activation", "sigmoid")
    if "params" in opts:
        params = load_params(opts["params"])
        dims = (g.feature_dim,) + tuple(w.shape[0] for w in params.weights)
    else:
        layers = int(opts.get("layers", 2))
        hidden = _ints(opts["dims"]) if "dims" in opts else (10,) * layers
        if len(hidden) == 1:
            hidden = hidden * layers
        dims = (g.feature_dim,) + hidden
        params = None
    spec = ModelSpec(variant, activation, dims)
    if params is None:
        params = init_params(spec, int(opts.get("seed", 0)))
    return g, spec, params, int(opts.get("node", 0))


def _schedule(opts, layers) -> SampleSchedule:
    if "schedule" in opts:
        return SampleSchedule(_ints(opts["schedule"]))
    if "r" in opts:
        return SampleSchedule.uniform(int(opts["r"]), layers)
    if "eps" in opts and "delta" in opts:
        return default_schedule(layers, _tolerance(opts))
    raise SystemExit("error: give --r, --schedule, or --eps with --delta")


def _tolerance(opts) -> ToleranceSpec:
    return ToleranceSpec(float(opts["eps"]), float(opts["delta"]),
                         float(opts.get("bound_B", 1.0)), int(opts.get("dim_d", 1)))


def _emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _embedding_text(embedding, log):
    vals = ",".join(f"{x:.17g}" for x in embedding)
    return f"embedding {vals}\nqueries degree={log.degree_queries} neighbor={log.neighbor_queries} feature={log.feature_queries}\n"


def _gradient_text(grad):
    lines = []
    for name, l, block in grad.blocks():
        lines.append(f"{name} {l} " + " ".join(str(s) for s in block.shape))
        lines.extend(" ".join(f"{v:.17g}" for v in row) for row in block.reshape(block.shape[0], -1))
    return "\n".join(lines) + "\n"


def cmd_gen(args):
    opts = _merged(args)
    n = int(opts.get("n", 100))
    seed = opts.get("seed")
    seed = None if seed is None else int(seed)
    dim = int(opts.get("dim", 10))
    if args.kind == "clique":
        g = gen_clique(n, seed_features=seed, dim=dim)
    elif args.kind == "star":
        g = gen_star(n)
    elif args.kind == "ba":
        g = gen_ba(n, int(opts.get("attach", 2)), seed, dim=dim)
    else:
        g = gen_er(n, float(opts.get("p", 0.1)), seed, dim=dim)
    if "graph" not in opts or "features" not in opts:
        raise SystemExit("error: gen needs --graph and --features output paths")
    _emit(format_edge_list(g), opts["graph"])
    _emit(format_features(g), opts["features"])
    if "params_out" in opts:
        spec = ModelSpec(opts.get("model", "sage_gcn"), opts.get("activation", "sigmoid"),
                         (g.feature_dim,) + (int(opts.get("width", 10)),) * int(opts.get("layers", 2)))
        save_params(init_params(spec, seed), opts["params_out"])
    return 0


def cmd_embed(args):
    opts = _merged(args)
    g, spec, params, v = _model_inputs(opts)
    if args.command == "embed":
        res = exact_embed(g, spec, params, v)
        _emit(_embedding_text(res.embedding, res.queries), opts.get("out"))
    elif args.command == "grad":
        _emit(_gradient_text(exact_gradient(g, spec, params, v)), opts.get("out"))
    else:
        schedule = _schedule(opts, spec.layers)
        seed = int(opts.get("seed", 0))
        if args.command == "sample-embed":
            res = sampled_embed(g, spec, params, v, schedule, seed)
            _emit(_embedding_text(res.embedding, res.queries), opts.get("out"))
        else:
            _emit(_gradient_text(sampled_gradient(g, spec, params, v, schedule, seed)), opts.get("out"))
    return 0


_EXP_KEYS = {
    "r": "r_values", "graph": "graph_path", "features": "features_path", "params": "params_path",
}


def cmd_exp(args):
    opts = _merged(args)
    mapping = {"experiment": args.kind}
    for key, value in opts.items():
        key = _EXP_KEYS.get(key, key)
        if key == "dims":
            key, value = "width", _ints(value)[0]
        if key == "no_self_loops":
            key, value = "self_loops", not value
        mapping[key] = str(value) if isinstance(value, (int, float)) and not isinstance(value, bool) else value
    config = ExperimentConfig.from_mapping(mapping)
    result = run_experiment(config)
    if not config.out:
        from .experiments import format_csv
        sys.stdout.write(format_csv(result.records))
    sys.stderr.write(json.dumps(result.summary, default=str) + "\n")
    return 0


def cmd_schedule(args):
    opts = _merged(args)
    if "eps" not in opts or "delta" not in opts:
        raise SystemExit("error: schedule needs --eps and --delta")
    t = _tolerance(opts)
    layers = int(opts.get("layers", 1))
    sched = default_schedule(layers, t)
    text = f"required_samples {required_samples(t)}\nschedule {','.join(map(str, sched.counts))}\n"
    _emit(text, opts.get("out"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="constgnn", description="Exact and sampled GNN embeddings.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic graph as edge list + feature CSV")
    p.add_argument("kind", choices=["clique", "star", "ba", "er"])
    p.add_argument("--n", type=int)
    p.add_argument("--attach", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--dim", type=int, help="feature width")
    p.add_argument("--graph", help="output edge-list path")
    p.add_argument("--features", help="output feature CSV path")
    p.add_argument("--params-out", help="also write random parameters here")
    p.add_argument("--model")
    p.add_argument("--activation")
    p.add_argument("--layers", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_gen)

    for name, helptext in (("embed", "exact embedding"), ("grad", "exact parameter Jacobian"),
                           ("sample-embed", "sampled embedding"), ("sample-grad", "sampled parameter Jacobian")):
        p = sub.add_parser(name, help=helptext)
        _add_model_flags(p)
        if name.startswith("sample"):
            _add_sampling_flags(p)
        p.set_defaults(func=cmd_embed)

    p = sub.add_parser("exp", help="run an experiment and emit CSV")
    p.add_argument("kind", choices=["speed", "error", "rate", "real"])
    p.add_argument("--graph")
    p.add_argument("--features")
    p.add_argument("--params")
    p.add_argument("--model")
    p.add_argument("--activation")
    p.add_argument("--layers", type=int)
    p.add_argument("--dims", help="hidden width")
    p.add_argument("--r", help="sample counts, comma separated")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--config")
    p.add_argument("--n", type=int)
    p.add_argument("--sizes", help="clique sizes for the speed experiment")
    p.add_argument("--fixture")
    p.add_argument("--variant")
    p.add_argument("--generator", choices=["ba", "er"])
    p.add_argument("--graphs", type=int)
    p.add_argument("--attach", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--quantity", choices=["embedding", "gradient"])
    p.add_argument("--scale", type=float)
    p.add_argument("--test-nodes", type=int)
    p.add_argument("--no-self-loops", action="store_true")
    p.set_defaults(func=cmd_exp)

    p = sub.add_parser("schedule", help="print the Hoeffding sample sizes")
    p.add_argument("--eps", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--B", dest="bound_B", type=float)
    p.add_argument("--d", dest="dim_d", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--out")
    p.add_argument("--config")
    p.set_defaults(func=cmd_schedule)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, IndexError, TypeError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
