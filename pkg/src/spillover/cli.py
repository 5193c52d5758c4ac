"""Command-line entry point: ``spillover <subcommand> ...``.

Every subcommand accepts ``--config FILE`` (a flat JSON object whose keys
are option names, e.g. ``{"alpha": 0.3, "n_max": 40000}``); explicit flags
override file values. Structured outputs echo the resolved configuration.

Exit codes: 0 success, 1 data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .clustering import (
    LouvainConfig,
    balanced_louvain,
    lpa_constrained,
    quality,
    read_partition,
    write_partition,
)
from .experiment import ARM_NAMES, assign, experiment_wgsr, graph_events, load_event_log, wgsr
from .graph import BehaviorWeights, GraphFormatError, build_multi_behavior, load_edge_list, watts_strogatz, write_edge_list
from .inference import ESTIMATORS, BucketTable, InferenceError, analyze, select_covariates
from .simulate import PAPER_NETWORKS, PAPER_R_GRID, PAPER_REPS, NetworkSpec, OutcomeModelConfig, run_sweep


class DataError(Exception):
    pass


def _int_list(text: str) -> list:
    if isinstance(text, list):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _str_list(text) -> list:
    if isinstance(text, list):
        return [str(v) for v in text]
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _behavior_weights(text) -> dict:
    if isinstance(text, dict):
        return {int(k): float(v) for k, v in text.items()}
    out = {}
    for part in str(text).split(","):
        if not part.strip():
            continue
        d, _, w = part.partition(":")
        out[int(d)] = float(w)
    return out


def _resolved(args) -> dict:
    skip = {"func", "config"}
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in skip:
            continue
        out[k] = v
    return out


def _emit_json(payload: dict, path) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _round(obj, ndigits=9):
    if isinstance(obj, float):
        return round(obj, ndigits)
    if isinstance(obj, dict):
        return {k: _round(v, ndigits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v, ndigits) for v in obj]
    return obj


# -- subcommands ----------------------------------------------------------------


def cmd_gen_graph(args, parser) -> int:
    if args.kind == "ws":
        if args.k % 2 != 0 or not 0 < args.k < args.n:
            parser.error(f"--k must be even with 0 < k < n (got k={args.k}, n={args.n})")
        if not 0.0 <= args.p <= 1.0:
            parser.error("--p must be in [0, 1]")
        g = watts_strogatz(args.n, args.k, args.p, seed=args.seed)
    else:
        if not args.input:
            parser.error("multibehavior needs --input")
        try:
            weights = BehaviorWeights(_behavior_weights(args.weights))
        except ValueError as exc:
            parser.error(str(exc))
        g = build_multi_behavior(args.input, weights)
    write_edge_list(g, args.out)
    _emit_json({"config": _resolved(args), "n": g.n, "edges": g.num_edges, "m": round(g.m, 9)}, args.report)
    return 0


def _load_graph(args):
    return load_edge_list(args.graph, directed_input=getattr(args, "directed", False))


def cmd_cluster(args, parser) -> int:
    g = _load_graph(args)
    algo = args.algorithm
    if algo == "lpa":
        if args.theta is None or args.theta < 1:
            parser.error("lpa needs --theta >= 1")
        part = lpa_constrained(g, args.theta, seed=args.seed, max_iters=args.max_iters)
        threshold = args.threshold if args.threshold is not None else args.theta
    else:
        alpha = args.alpha if algo == "balanced-louvain" else 0.0
        n_max = args.n_max if algo == "balanced-louvain" else -1
        try:
            cfg = LouvainConfig(alpha=alpha, n_max=n_max, gamma=args.gamma, seed=args.seed,
                                max_passes=args.max_passes)
        except ValueError as exc:
            parser.error(str(exc))
        part = balanced_louvain(g, cfg)
        threshold = args.threshold if args.threshold is not None else (n_max if n_max > 0 else None)
    if args.out:
        header = {"algorithm": algo, "alpha": args.alpha, "n_max": args.n_max, "gamma": args.gamma,
                  "theta": args.theta, "seed": args.seed}
        write_partition(g, part, args.out, header)
    payload = {"config": _resolved(args), "num_clusters": part.num_clusters}
    if g.m > 0:
        payload["quality"] = _round(quality(g, part, args.gamma, threshold, args.sigma_max).to_dict())
    _emit_json(payload, args.report)
    return 0


def cmd_metrics(args, parser) -> int:
    g = _load_graph(args)
    part = read_partition(g, args.partition)
    if g.m <= 0:
        raise DataError("graph has no edges; metrics undefined")
    rep = quality(g, part, args.gamma, args.threshold, args.sigma_max)
    _emit_json({"config": _resolved(args), "quality": _round(rep.to_dict())}, args.report)
    return 0


def cmd_assign(args, parser) -> int:
    g = _load_graph(args)
    part = read_partition(g, args.partition)
    try:
        a = assign(part, args.buckets, _int_list(args.treat), _int_list(args.ctrl), salt=args.salt)
    except ValueError as exc:
        parser.error(str(exc))
    events = load_event_log(g, args.events) if args.events else graph_events(g)
    payload = {
        "config": _resolved(args),
        "assignment": a.to_dict(partition_file=args.partition),
        "nodes_per_arm": {ARM_NAMES[k]: int(np.sum(a.node_arm == k)) for k in sorted(ARM_NAMES)},
        "wgsr_treatment": _round(wgsr(events, a)),
        "wgsr_experiment": _round(experiment_wgsr(events, a)),
    }
    if args.out_buckets:
        with open(args.out_buckets, "w", encoding="utf-8") as fh:
            fh.write("# node_id\tcluster_id\tbucket\tarm\n")
            for nid, c, b, arm in zip(g.node_ids.tolist(), a.unit.tolist(), a.node_bucket.tolist(), a.node_arm.tolist()):
                fh.write(f"{nid}\t{c}\t{b}\t{ARM_NAMES[arm]}\n")
    _emit_json(payload, args.out)
    return 0


def cmd_simulate(args, parser) -> int:
    if args.preset == "paper":
        networks, r_grid, reps = PAPER_NETWORKS, PAPER_R_GRID, PAPER_REPS
    else:
        ks = _int_list(args.k)
        if any(k % 2 for k in ks):
            parser.error("--k values must be even")
        networks = [NetworkSpec(f"k{k}", args.n, k, args.p) for k in ks]
        r_grid = tuple(np.linspace(0.0, 1.0, args.levels).tolist())
        reps = args.reps
    if reps < 2:
        parser.error("at least 2 replications required for CI")
    cfg = OutcomeModelConfig(tau=args.tau, delta=args.delta, s_prob=args.s_prob, noise_sd=args.noise_sd,
                             seed=args.seed)
    res = run_sweep(networks, r_grid, reps, cfg, seed=args.seed, num_buckets=args.buckets,
                    treat_buckets=_int_list(args.treat), ctrl_buckets=_int_list(args.ctrl))
    res.write_csv(args.out_csv)
    res.config["cli"] = _resolved(args)
    res.write_fit_json(args.out_json)
    summary = {name: {"r2": round(f.r2, 6), "extrapolated_ate": round(f.extrapolated_ate, 6),
                      "true_ate": round(f.true_ate, 6), "bias_reduction": round(f.bias_reduction, 6)}
               for name, f in res.fits.items()}
    _emit_json({"cells": len(res.records), "fits": summary}, None)
    return 0


def cmd_analyze(args, parser) -> int:
    table = BucketTable.from_csv(args.input)
    estimators = _str_list(args.estimators)
    for e in estimators:
        if e.lower() not in ESTIMATORS:
            parser.error(f"unknown estimator {e!r}; choose from {','.join(ESTIMATORS)}")
    covariates = _int_list(args.covariates) if args.covariates else None
    if args.select_threshold is not None:
        covariates = select_covariates(table.subset(~table.treated), args.select_threshold)
        if not covariates:
            raise DataError("no covariate passed the selection threshold")
    reports = analyze(table, estimators, k=args.k, seed=args.seed, cuped_covariate=args.cuped_covariate,
                      covariates=covariates)
    _emit_json({"config": _resolved(args), "reports": [r.to_dict() for r in reports]}, args.out)
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spillover", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with option defaults")
    common.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("gen-graph", parents=[common], help="generate or aggregate an edge list")
    p.add_argument("kind", choices=["ws", "multibehavior"])
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--p", type=float, default=0.1)
    p.add_argument("--input", help="behavior file: src dst behavior_id strength")
    p.add_argument("--weights", default="0:1.0", help="behavior weights, e.g. 0:1.0,1:0.25")
    p.add_argument("--out", required=True)
    p.add_argument("--report", default="-", help="summary JSON path ('-' = stdout)")
    p.set_defaults(func=cmd_gen_graph)

    p = sub.add_parser("cluster", parents=[common], help="cluster a graph")
    p.add_argument("algorithm", choices=["balanced-louvain", "louvain", "lpa"])
    p.add_argument("--graph", required=True)
    p.add_argument("--directed", action="store_true", help="edge list holds directed strengths")
    p.add_argument("--alpha", type=float, default=0.3)
    p.add_argument("--n-max", dest="n_max", type=int, default=-1)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--max-passes", dest="max_passes", type=int, default=50)
    p.add_argument("--theta", type=int, default=None, help="LPA large-cluster threshold")
    p.add_argument("--max-iters", dest="max_iters", type=int, default=100)
    p.add_argument("--threshold", type=int, default=None, help="size threshold for ctrl")
    p.add_argument("--sigma-max", dest="sigma_max", type=float, default=None)
    p.add_argument("--out", help="partition file")
    p.add_argument("--report", default="-")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("metrics", parents=[common], help="quality of an existing partition")
    p.add_argument("--graph", required=True)
    p.add_argument("--directed", action="store_true")
    p.add_argument("--partition", required=True)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--threshold", type=int, default=None)
    p.add_argument("--sigma-max", dest="sigma_max", type=float, default=None)
    p.add_argument("--report", default="-")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("assign", parents=[common], help="hash clusters into buckets and arms")
    p.add_argument("--graph", required=True)
    p.add_argument("--directed", action="store_true")
    p.add_argument("--partition", required=True)
    p.add_argument("--buckets", type=int, default=10)
    p.add_argument("--treat", default="0")
    p.add_argument("--ctrl", default="1")
    p.add_argument("--salt", type=int, default=0)
    p.add_argument("--events", help="share-event log: src dst [count]")
    p.add_argument("--out", default="-")
    p.add_argument("--out-buckets", dest="out_buckets")
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("simulate", parents=[common], help="WGSR vs ATE spillover sweep")
    p.add_argument("--preset", choices=["paper", "custom"], default="custom")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--k", default="4,10,20")
    p.add_argument("--p", type=float, default=0.1)
    p.add_argument("--levels", type=int, default=10)
    p.add_argument("--reps", type=int, default=30)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.2)
    p.add_argument("--s-prob", dest="s_prob", type=float, default=0.3)
    p.add_argument("--noise-sd", dest="noise_sd", type=float, default=0.1)
    p.add_argument("--buckets", type=int, default=10)
    p.add_argument("--treat", default="0,1,2,3,4")
    p.add_argument("--ctrl", default="5,6,7,8,9")
    p.add_argument("--out-csv", dest="out_csv", default="sweep.csv")
    p.add_argument("--out-json", dest="out_json", default="sweep_fit.json")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", parents=[common], help="bucket-level DIM / CUPED / CUPAC")
    p.add_argument("--input", required=True, help="CSV bucket_id,arm,y,n,x1,...")
    p.add_argument("--estimators", default="dim,cuped,cupac")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--cuped-covariate", dest="cuped_covariate", type=int, default=0)
    p.add_argument("--covariates", default=None, help="CUPAC covariate indices, e.g. 0,2")
    p.add_argument("--select-threshold", dest="select_threshold", type=float, default=None)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_analyze)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        with open(known.config, encoding="utf-8") as fh:
            values = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config {known.config}: {exc}")
    if not isinstance(values, dict):
        parser.error("config file must hold a JSON object")
    values = {k.replace("-", "_"): v for k, v in values.items()}
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            given = {k: v for k, v in values.items() if k not in ("func", "config", "command")}
            for a in sp._actions:
                # An option supplied by the file no longer has to appear on the command line.
                if a.dest in given and a.option_strings:
                    a.required = False
            dests = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in given.items() if k in dests})


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    _apply_config(parser, argv)
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    try:
        return args.func(args, sub)
    except (DataError, GraphFormatError, InferenceError, OSError, ValueError) as exc:
        print(f"spillover {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
