"""Command-line interface.

Exit status is 0 on success, 2 when a validation command finds the input
invalid, and 1 on any error (bad flags, unreadable or malformed files).
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .graph import MAX_ENUMERATION_ORDER, enumerate_decomposable, is_decomposable
from .io import (
    FormatError,
    RunManifest,
    graph_to_json,
    read_csv_matrix,
    read_graph,
    read_tree,
    smc_result_to_json,
    tree_to_json,
    write_csv_matrix,
    write_json,
)
from .junction_tree import diagnose, mu_factors
from .kernels import ExpanderParams
from .models import GGMModel, SyntheticGGMSpec, asymptotic_count, generate_synthetic_ggm, uniform_target
from .oracles import junction_trees_of, tree_space
from .smc import (
    SMCConfig,
    chain_frequencies,
    edge_probabilities,
    map_graph,
    posterior_summary,
    run_particle_gibbs,
    run_smc,
)

EXIT_OK, EXIT_ERROR, EXIT_INVALID = 0, 1, 2
MAX_TREE_ENUMERATION_ORDER = 5
_CHAIN_STRIDE = 1 << 32


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_ERROR)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _unit_open(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"expected a value strictly between 0 and 1, got {text}")
    return value


def _add_kernel_flags(sp) -> None:
    sp.add_argument("--alpha", type=_unit_open, default=0.5, help="subtree growth parameter (default 0.5)")
    sp.add_argument("--beta", type=_unit_open, default=0.5, help="probability of a non-empty subtree (default 0.5)")
    sp.add_argument("--seed", type=int, default=0)


def _flags(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "handler"}


# ---------------------------------------------------------------------------
# commands


def cmd_estimate_count(args) -> int:
    if args.N < 2:
        raise UsageError("--N must be at least 2")
    manifest = RunManifest("estimate-count", _flags(args), args.seed)
    params = ExpanderParams(args.alpha, args.beta)
    target = uniform_target(args.p)
    log_est, runtimes = [], []
    for r in range(args.reps):
        cfg = SMCConfig(p=args.p, n_particles=args.N, params=params, seed=args.seed, replicate=r)
        res = run_smc(target, cfg)
        log_est.append(res.log_Z)
        runtimes.append(res.runtime_s)
    # scale by the largest estimate so huge counts stay finite
    shift = max(log_est)
    scaled = np.exp(np.array(log_est) - shift)
    mean = float(scaled.mean())
    se = float(scaled.std(ddof=1) / math.sqrt(len(scaled))) if len(scaled) > 1 else 0.0
    log_mean = shift + math.log(mean)
    log_se = shift + math.log(se) if se > 0 else None
    log_all = args.p * (args.p - 1) / 2 * math.log(2.0)
    payload = {
        "p": args.p,
        "N": args.N,
        "reps": args.reps,
        "seed": args.seed,
        "alpha": args.alpha,
        "beta": args.beta,
        "estimates": [math.exp(x) for x in log_est],
        "log_estimates": log_est,
        "mean": math.exp(log_mean),
        "se": math.exp(log_se) if log_se is not None else 0.0,
        "log_mean": log_mean,
        "fraction": math.exp(log_mean - log_all),
        "fraction_se": math.exp(log_se - log_all) if log_se is not None else 0.0,
        "log_asymptotic_reference": asymptotic_count(args.p),
        "runtime_s": runtimes,
    }
    write_json(args.out, payload, manifest.finish())
    return EXIT_OK


def cmd_exact_count(args) -> int:
    if args.p > MAX_ENUMERATION_ORDER:
        raise UsageError(f"exact enumeration is limited to p <= {MAX_ENUMERATION_ORDER}")
    manifest = RunManifest("exact-count", _flags(args))
    count = len(enumerate_decomposable(args.p))
    payload = {"p": args.p, "count": count, "fraction": count / 2 ** (args.p * (args.p - 1) // 2)}
    write_json(args.out, payload, manifest.finish())
    return EXIT_OK


def cmd_validate(args) -> int:
    manifest = RunManifest("validate", _flags(args))
    t = read_tree(args.tree)
    reason = diagnose(t)
    write_json(args.out, {"valid": reason is None, "reason": reason}, manifest.finish())
    return EXIT_OK if reason is None else EXIT_INVALID


def cmd_mu(args) -> int:
    manifest = RunManifest("mu", _flags(args))
    t = read_tree(args.tree)
    reason = diagnose(t)
    if reason is not None:
        write_json(args.out, {"valid": False, "reason": reason}, manifest.finish())
        return EXIT_INVALID
    factors = mu_factors(t)
    payload = {
        "mu": factors.product,
        "factors": [{"separator": sorted(s), "count": c} for s, c in sorted(factors.factors.items(), key=lambda kv: (len(kv[0]), sorted(kv[0])))],
    }
    write_json(args.out, payload, manifest.finish())
    return EXIT_OK


def cmd_enumerate_trees(args) -> int:
    manifest = RunManifest("enumerate-trees", _flags(args))
    if args.graph is not None:
        g = read_graph(args.graph)
        if not is_decomposable(g):
            write_json(args.out, {"decomposable": False, "trees": []}, manifest.finish())
            return EXIT_INVALID
        p = g.order
        trees = junction_trees_of(g)
    else:
        if args.p is None:
            raise UsageError("give --p or --graph")
        if args.p > MAX_TREE_ENUMERATION_ORDER:
            raise UsageError(f"tree enumeration is limited to p <= {MAX_TREE_ENUMERATION_ORDER}")
        p = args.p
        trees = tree_space(p)
    payload = {"p": p, "count": len(trees), "trees": [tree_to_json(t, p) for t in trees]}
    write_json(args.out, payload, manifest.finish())
    return EXIT_OK


def _load_ggm(args) -> GGMModel:
    data = read_csv_matrix(args.data)
    if data.size == 0:
        raise UsageError(f"{args.data}: data file has no observations (n = 0)")
    scale = None
    if args.scale is not None:
        scale = read_csv_matrix(args.scale)
        if scale.shape != (data.shape[1], data.shape[1]):
            raise UsageError(
                f"scale matrix is {scale.shape[0]}x{scale.shape[1]} but the data has {data.shape[1]} columns"
            )
    return GGMModel(data, scale=scale, df=args.df)


def cmd_ggm_posterior(args) -> int:
    if args.burnin >= args.pg_iters and args.method == "pgibbs":
        raise UsageError("--burnin must be smaller than --pg-iters")
    manifest = RunManifest("ggm-posterior", _flags(args), args.seed)
    model = _load_ggm(args)
    params = ExpanderParams(args.alpha, args.beta)
    cfg = SMCConfig(p=model.p, n_particles=args.N, params=params, seed=args.seed)
    payload = {"p": model.p, "n": model.n, "method": args.method, "N": args.N, "seed": args.seed,
               "alpha": args.alpha, "beta": args.beta}
    if args.method == "smc":
        res = run_smc(model, cfg)
        weights, edges = posterior_summary(res)
        payload.update(smc_result_to_json(res, max_graphs=args.max_graphs))
    else:
        chain = []
        for c in range(args.chains):
            chain += run_particle_gibbs(model, replace(cfg, replicate=c * _CHAIN_STRIDE), args.pg_iters, args.burnin)
        weights = chain_frequencies(chain)
        edges = edge_probabilities(weights, model.p)
        ranked = sorted(weights.items(), key=lambda kv: (-kv[1], sorted(kv[0].edges)))[: args.max_graphs]
        payload.update(
            pg_iters=args.pg_iters,
            burnin=args.burnin,
            chains=args.chains,
            graphs=[{"edges": [list(e) for e in sorted(g.edges)], "weight": w} for g, w in ranked],
        )
    payload["map_graph"] = graph_to_json(map_graph(weights))
    payload["edge_probabilities"] = edges.tolist()
    manifest.finish()
    if args.heatmap:
        write_csv_matrix(args.heatmap, edges, manifest)
    write_json(args.out, payload, manifest)
    return EXIT_OK


def cmd_gen_data(args) -> int:
    manifest = RunManifest("gen-data", _flags(args), args.seed)
    g = read_graph(args.graph)
    if not is_decomposable(g):
        raise UsageError(f"{args.graph}: graph is not decomposable")
    spec = SyntheticGGMSpec(g, epsilon=args.epsilon, upsilon=args.upsilon, n=args.n, seed=args.seed)
    data, precision = generate_synthetic_ggm(spec)
    manifest.finish()
    write_csv_matrix(args.out, data, manifest)
    if args.precision:
        write_csv_matrix(args.precision, precision, manifest)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="junction-smc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("estimate-count", help="SMC estimate of the number of decomposable graphs")
    sp.add_argument("--p", type=_positive_int, required=True)
    sp.add_argument("--N", type=_positive_int, default=10000, help="particles (default 10000)")
    sp.add_argument("--reps", type=_positive_int, default=10, help="independent replicates (default 10)")
    _add_kernel_flags(sp)
    sp.add_argument("--out", default=None, help="output JSON (default stdout)")
    sp.set_defaults(handler=cmd_estimate_count)

    sp = sub.add_parser("exact-count", help="exact number of decomposable graphs by enumeration")
    sp.add_argument("--p", type=_positive_int, required=True)
    sp.add_argument("--out", default=None)
    sp.set_defaults(handler=cmd_exact_count)

    for name, handler, text in (
        ("mu", cmd_mu, "number of junction trees of the tree's underlying graph"),
        ("validate", cmd_validate, "check the junction property of a tree file"),
    ):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("tree", help="tree JSON file")
        sp.add_argument("--out", default=None)
        sp.set_defaults(handler=handler)

    sp = sub.add_parser("enumerate-trees", help="brute-force list of junction trees")
    group = sp.add_mutually_exclusive_group(required=True)
    group.add_argument("--p", type=_positive_int, help=f"all trees on vertices 1..p (p <= {MAX_TREE_ENUMERATION_ORDER})")
    group.add_argument("--graph", help="graph JSON or adjacency CSV")
    sp.add_argument("--out", default=None)
    sp.set_defaults(handler=cmd_enumerate_trees)

    sp = sub.add_parser("ggm-posterior", help="graph posterior for Gaussian data")
    sp.add_argument("--data", required=True, help="data CSV, n rows by p columns, no header")
    sp.add_argument("--scale", default=None, help="prior scale matrix CSV (default identity)")
    sp.add_argument("--df", type=float, default=None, help="prior degrees of freedom (default p)")
    sp.add_argument("--method", choices=("pgibbs", "smc"), default="pgibbs")
    sp.add_argument("--N", type=_positive_int, default=None,
                    help="particles (default 50 for pgibbs, 10000 for smc)")
    sp.add_argument("--pg-iters", type=_positive_int, default=1000)
    sp.add_argument("--burnin", type=int, default=300)
    sp.add_argument("--chains", type=_positive_int, default=1)
    sp.add_argument("--max-graphs", type=_positive_int, default=100, help="graphs listed in the output")
    _add_kernel_flags(sp)
    sp.add_argument("--out", default=None, help="posterior JSON (default stdout)")
    sp.add_argument("--heatmap", default=None, help="edge-probability CSV")
    sp.set_defaults(handler=cmd_ggm_posterior)

    sp = sub.add_parser("gen-data", help="synthetic Gaussian data from a decomposable graph")
    sp.add_argument("--graph", required=True, help="graph JSON or adjacency CSV")
    sp.add_argument("--n", type=_positive_int, required=True)
    sp.add_argument("--epsilon", type=float, default=1.0)
    sp.add_argument("--upsilon", type=float, default=0.5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="data CSV")
    sp.add_argument("--precision", default=None, help="precision matrix CSV")
    sp.set_defaults(handler=cmd_gen_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "N", 0) is None:
        args.N = 50 if args.method == "pgibbs" else 10000
    if getattr(args, "burnin", 0) < 0:
        parser.error("--burnin must be non-negative")
    try:
        return args.handler(args)
    except (UsageError, FormatError, ValueError) as exc:
        sys.stderr.write(f"junction-smc {args.command}: error: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
