"""Command line entry point.

Subcommands: generate, design, solve, experiment {comparison|early-stop|
centrality}, validate.  Successful runs print a JSON summary on stdout and
exit 0; failures print {"error", "type"} JSON and exit 1.  The experiment
output directory can be overridden with SNLOC_OUTPUT_DIR.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import admm as admm_mod
from . import design as design_mod
from . import experiments as exp_mod
from . import problem as problem_mod
from . import splitting as split_mod
from .metrics import MetricRecord
from .splitting import EarlyStopOptions, InnerOptions, SolverOptions

OUTPUT_DIR_ENV = "SNLOC_OUTPUT_DIR"


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        summary = args.handler(args)
    except Exception as exc:
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}))
        return 1
    print(json.dumps(summary, default=str))
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="snloc",
        description="Decentralized sensor network localization solvers")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="draw a random connected instance")
    gen.add_argument("--n", type=int, default=30)
    gen.add_argument("--m", type=int, default=6)
    gen.add_argument("--d", type=int, default=2)
    gen.add_argument("--radius", type=float, default=0.7)
    gen.add_argument("--max-degree", type=int, default=7)
    gen.add_argument("--noise", type=float, default=0.05)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(handler=_cmd_generate)

    des = sub.add_parser("design", help="build and check matrix parameters")
    src = des.add_mutually_exclusive_group(required=True)
    src.add_argument("--adjacency", help="edge list file, one 0-based 'i j' per line")
    src.add_argument("--instance", help="instance JSON file")
    des.add_argument("--decentralized", action="store_true",
                     help="run the balancing as message rounds")
    des.add_argument("--tol", type=float, default=1e-10)
    des.add_argument("--out", required=True)
    des.set_defaults(handler=_cmd_design)

    sol = sub.add_parser("solve", help="run one solver on one instance")
    sol.add_argument("--instance", required=True)
    sol.add_argument("--method", choices=("splitting", "admm"),
                     default="splitting")
    sol.add_argument("--mode", choices=("serial", "decentralized"),
                     default="serial")
    sol.add_argument("--gamma", type=float, default=0.999)
    sol.add_argument("--alpha", type=float, default=None,
                     help="default 10 for splitting, 150 for admm")
    sol.add_argument("--max-iter", type=int, default=3000)
    sol.add_argument("--warm-start", default=None,
                     help="path to an n x d JSON array, or 'perturb:SD'")
    sol.add_argument("--early-stop", nargs="?", const=100, default=None,
                     type=int, metavar="PATIENCE")
    sol.add_argument("--seed", type=int, default=0)
    sol.add_argument("--fp-tol", type=float, default=1e-6)
    sol.add_argument("--trace", default=None, help="per-iteration CSV path")
    sol.set_defaults(handler=_cmd_solve)

    exp = sub.add_parser("experiment", help="run a batch study")
    exp.add_argument("kind", choices=("comparison", "early-stop", "centrality"))
    exp.add_argument("--config", default=None,
                     help="JSON file mirroring ExperimentConfig")
    exp.add_argument("--out-dir", default=None)
    exp.add_argument("--trials", type=int, default=None)
    exp.add_argument("--seed", type=int, default=None)
    exp.set_defaults(handler=_cmd_experiment)

    val = sub.add_parser("validate", help="check an instance or parameter file")
    val.add_argument("--instance", default=None)
    val.add_argument("--params", default=None,
                     help="parameter JSON; checked against --instance or --adjacency")
    val.add_argument("--adjacency", default=None)
    val.add_argument("--tol", type=float, default=1e-8)
    val.set_defaults(handler=_cmd_validate)
    return parser


def _cmd_generate(args) -> dict:
    inst = problem_mod.generate_instance(args.n, args.m, args.d, args.radius,
                                         args.max_degree, args.noise, args.seed)
    problem_mod.save_instance(inst, args.out)
    return {"out": args.out, "n": inst.n, "m": inst.m, "d": inst.d,
            "edges": int(problem_mod.build_adjacency(inst).sum() // 2)}


def _cmd_design(args) -> dict:
    if args.adjacency:
        A = design_mod.read_edge_list(args.adjacency)
    else:
        inst = problem_mod.load_instance(args.instance)
        A = problem_mod.build_adjacency(inst)
    params = design_mod.two_block_params(A, tol=args.tol,
                                         decentralized=args.decentralized)
    report = design_mod.validate_params(params, A)
    design_mod.save_params(params, args.out, report)
    return {"out": args.out, "n": params.block_size, "passed": report.passed,
            "checks": report.to_dict()}


def _parse_warm_start(spec, inst, seed):
    if spec is None:
        return None
    if spec.startswith("perturb:"):
        sd = float(spec.split(":", 1)[1])
        return split_mod.perturb_truth(inst, sd, seed)
    X = np.asarray(json.loads(Path(spec).read_text()), dtype=float)
    if X.shape != (inst.n, inst.d):
        raise ValueError(f"warm start shape {X.shape} != ({inst.n}, {inst.d})")
    return X


def _cmd_solve(args) -> dict:
    inst = problem_mod.load_instance(args.instance)
    A = problem_mod.build_adjacency(inst)
    params = design_mod.two_block_params(A)
    alpha = args.alpha if args.alpha is not None else \
        (10.0 if args.method == "splitting" else 150.0)
    early = EarlyStopOptions(args.early_stop) if args.early_stop else None
    options = SolverOptions(gamma=args.gamma, alpha=alpha,
                            max_iter=args.max_iter, early_stop=early,
                            mode=args.mode, seed=args.seed,
                            inner=InnerOptions(), fp_tol=args.fp_tol)
    X_tilde = _parse_warm_start(args.warm_start, inst, args.seed)
    if args.method == "splitting":
        initial = (split_mod.warm_start_v(inst, params, X_tilde, options)
                   if X_tilde is not None else None)
        trace = split_mod.run(inst, params, options, initial=initial)
    else:
        initial = (admm_mod.warm_start_admm(inst, X_tilde, options)
                   if X_tilde is not None else None)
        trace = admm_mod.run_admm(inst, options, initial=initial)
    if args.trace:
        _write_trace_csv(args.trace, trace)
    final = trace.records[-1]
    return {"method": args.method, "mode": args.mode,
            "termination": trace.termination,
            "iterations": final.iteration,
            "objective": final.objective,
            "rel_error": final.rel_error,
            "mean_distance": final.mean_distance,
            "consensus_residual": final.consensus_residual,
            "messages": trace.messages, "bytes": trace.bytes,
            "best_iteration": trace.best.iteration,
            "trace": args.trace}


def _write_trace_csv(path, trace):
    header = list(MetricRecord.CSV_FIELDS) + ["messages", "bytes"]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for rec, msgs, nbytes in zip(trace.records, trace.messages_history,
                                     trace.bytes_history):
            writer.writerow(rec.as_row() + [msgs, nbytes])


def _cmd_experiment(args) -> dict:
    if args.config:
        config = exp_mod.ExperimentConfig.load(args.config)
    else:
        config = exp_mod.ExperimentConfig()
    if args.trials is not None:
        config.trials = args.trials
    if args.seed is not None:
        config.base_seed = args.seed
    out_dir = args.out_dir or os.environ.get(OUTPUT_DIR_ENV)
    runner = {"comparison": exp_mod.run_comparison,
              "early-stop": exp_mod.run_early_termination_study,
              "centrality": exp_mod.run_centrality_trace}[args.kind]
    summary = runner(config, out_dir=out_dir)
    return {"kind": args.kind, "paths": summary["paths"],
            "trials_used": summary["trials_used"],
            "failures": summary["failures"]}


def _cmd_validate(args) -> dict:
    if args.instance is None and args.params is None:
        raise ValueError("nothing to validate: pass --instance and/or --params")
    out: dict = {}
    inst = None
    if args.instance:
        inst = problem_mod.load_instance(args.instance)  # loader validates
        out["instance"] = {"valid": True, "n": inst.n, "m": inst.m, "d": inst.d}
    if args.params:
        params = design_mod.load_params(args.params)
        if args.adjacency:
            A = design_mod.read_edge_list(args.adjacency)
        elif inst is not None:
            A = problem_mod.build_adjacency(inst)
        else:
            raise ValueError("--params needs --instance or --adjacency")
        report = design_mod.validate_params(params, A, tol=args.tol)
        out["params"] = {"passed": report.passed, "checks": report.to_dict()}
        if not report.passed:
            raise ValueError(f"parameter checks failed: "
                             f"{[k for k, c in report.checks.items() if not c.passed]}")
    return out


if __name__ == "__main__":
    sys.exit(main())
