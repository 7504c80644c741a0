"""Batch front end: run samplers, run optimizers on benchmark instances, and
emit reproducible CSV reports with figures rendered alongside.

Exit codes: 0 success, 2 usage error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import figures
from .baselines import BpConfig, GibbsConfig, bp_marginals, bp_sample, gibbs_sample
from .constraints import EqualityAffine, NonnegHalfspace
from .factor_graph import (
    DEFAULT_ENUMERATION_CAP,
    assignment_to_index,
    exact_probabilities,
    load_uai,
)
from .optimizers import (
    AlConfig,
    BpEstimator,
    ExactEstimator,
    GibbsEstimator,
    PenaltyConfig,
    PgdConfig,
    PiecewiseSchedule,
    SgdConfig,
    XorEstimator,
    primal_dual_al,
    xor_pgd,
    xor_sgd,
    xor_sgd_penalty,
)
from .problems import (
    NETWORK_KINDS,
    InventoryInstance,
    NetworkInstance,
    StochasticProblem,
    evaluate_objective_exact,
    gen_inventory,
    gen_network,
    inventory_constraint,
    inventory_problem,
    load_instance,
    network_constraint,
    network_problem,
)
from .xor_sampling import DiscretizationConfig, XorSampler, XorSamplerConfig

METHODS = ("xor-pgd", "ixor-pgd", "xor-sgd", "xor-sgd-penalty", "al-primal-dual")
ESTIMATORS = ("xor", "gibbs", "bp", "exact")
BENCH_METHODS = ("ixor-pgd", "xor-pgd", "xor-sgd-penalty", "gibbs-sgd", "bp-sgd")


class UsageError(Exception):
    pass


def _config_hash(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha1(canon.encode()).hexdigest()[:12]


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def _write_csv(path, header: list[str], rows: list[dict], config_hash: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"# config {config_hash}\n")
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(r[h]) for h in header) + "\n")


def _write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sampler_config(args) -> XorSamplerConfig:
    return XorSamplerConfig(
        discretization=DiscretizationConfig(b=args.b, epsilon=args.epsilon),
        pivot=args.pivot,
        quantization=args.quantization,
    )


def _build_estimator(kind: str, problem: StochasticProblem, args):
    if kind == "exact":
        return ExactEstimator(problem)
    if kind == "xor":
        return XorEstimator(problem, args.samples, _sampler_config(args))
    if kind == "gibbs":
        return GibbsEstimator(
            problem, args.samples, GibbsConfig(burn_in=args.burn_in, thin=args.thin)
        )
    if kind == "bp":
        return BpEstimator(problem, args.samples, BpConfig(max_iters=args.bp_iters))
    raise UsageError(f"unknown estimator {kind!r}; choose from {ESTIMATORS}")


# ---------------------------------------------------------------------------
# sample


def cmd_sample(args) -> int:
    with open(args.model) as fh:
        fg = load_uai(fh.read())
    if args.num < 1:
        raise UsageError("--samples must be >= 1")
    rng = np.random.default_rng(args.seed)
    os.makedirs(args.out, exist_ok=True)
    config = {
        "command": "sample",
        "model": os.path.basename(args.model),
        "sampler": args.sampler,
        "samples": args.num,
        "seed": args.seed,
        "pivot": args.pivot,
        "b": args.b,
        "epsilon": args.epsilon,
        "quantization": args.quantization,
        "burn_in": args.burn_in,
        "thin": args.thin,
        "bp_iters": args.bp_iters,
    }
    chash = _config_hash(config)
    stats = {}
    if args.sampler == "xor":
        sampler = XorSampler(fg, _sampler_config(args))
        samples, batch = sampler.sample_batch(args.num, rng)
        stats = {
            "total_attempts": batch.total_attempts,
            "success_rate": batch.success_rate,
            "oracle_calls": batch.oracle_calls,
            "constraint_count": sampler.num_constraints,
        }
    elif args.sampler == "gibbs":
        samples = gibbs_sample(fg, GibbsConfig(burn_in=args.burn_in, thin=args.thin),
                               args.num, rng)
    elif args.sampler == "bp":
        bp = bp_marginals(fg, BpConfig(max_iters=args.bp_iters))
        samples = bp_sample(bp.marginals, args.num, rng)
        stats = {"bp_converged": bp.converged, "bp_iterations": bp.iterations}
    else:
        raise UsageError(f"unknown sampler {args.sampler!r}")

    with open(os.path.join(args.out, "samples.txt"), "w") as fh:
        for row in samples:
            fh.write("".join(str(int(b)) for b in row) + "\n")

    freq_rows = []
    if fg.num_vars <= DEFAULT_ENUMERATION_CAP and fg.num_vars <= 16:
        probs = exact_probabilities(fg)
        counts = np.bincount(
            [assignment_to_index(r) for r in samples], minlength=probs.shape[0]
        )
        emp = counts / samples.shape[0]
        for i in range(probs.shape[0]):
            freq_rows.append({
                "assignment": format(i, f"0{fg.num_vars}b"),
                "exact_p": float(probs[i]),
                "empirical_p": float(emp[i]),
                "ratio": float(emp[i] / probs[i]) if probs[i] > 0 else float("nan"),
            })
        _write_csv(
            os.path.join(args.out, "frequencies.csv"),
            ["assignment", "exact_p", "empirical_p", "ratio"],
            freq_rows,
            chash,
        )
    _write_json(os.path.join(args.out, "summary.json"),
                {"config": config, "stats": stats})
    if not args.no_figures and freq_rows:
        figures.render_frequencies(freq_rows, os.path.join(args.out, "frequencies.png"))
    return 0


# ---------------------------------------------------------------------------
# optimize


def _load_problem(args):
    """Returns (problem, halfspace_or_None, equality_or_None, x0, instance)."""
    with open(args.instance) as fh:
        peek = json.load(fh)
    kind = peek.get("type")
    rng0 = np.random.default_rng(args.seed)
    if kind == "inventory":
        inst = load_instance(args.instance)
        problem = inventory_problem(inst)
        half = inventory_constraint(inst, args.storage_pct)
        x0 = np.abs(rng0.normal(5.0, 3.0, size=problem.dim))
        return problem, half, None, x0, inst
    if kind == "network":
        inst = load_instance(args.instance)
        problem = network_problem(inst)
        half = network_constraint(inst, args.budget_pct)
        x0 = np.abs(rng0.normal(0.0, 1.0, size=problem.dim))
        return problem, half, None, x0, inst
    if kind == "quadratic":
        dim = int(peek["dim"])
        a = np.array(peek["a"], dtype=float)
        b = np.array(peek["b"], dtype=float)
        placeholder = _uniform_model()
        problem = StochasticProblem(
            model=placeholder,
            dim=dim,
            objective=lambda x, bits: 0.5 * float(np.dot(x, x)),
            gradient=lambda x, bits: np.asarray(x, dtype=float),
            name="quadratic",
        )
        eq = EqualityAffine(a, b)
        return problem, None, eq, np.zeros(dim), None
    raise UsageError(f"unknown instance type {kind!r}")


def _uniform_model():
    from .factor_graph import Factor, FactorGraph

    return FactorGraph(1, (Factor((0,), np.array([1.0, 1.0])),))


def cmd_optimize(args) -> int:
    if args.method not in METHODS:
        raise UsageError(f"unknown method {args.method!r}; valid methods: {', '.join(METHODS)}")
    problem, half, eq, x0, inst = _load_problem(args)
    estimator = _build_estimator(args.estimator, problem, args)
    rng = np.random.default_rng(args.seed + 1 if args.seed is not None else None)
    deadline = time.perf_counter() + args.time_limit_s if args.time_limit_s else None
    config = {
        "command": "optimize",
        "instance": os.path.basename(args.instance),
        "method": args.method,
        "estimator": args.estimator,
        "iters": args.iters,
        "samples": args.samples,
        "seed": args.seed,
        "mu": args.mu,
        "mu_reg": args.mu_reg,
        "rho_kappa": args.rho_kappa,
        "pivot": args.pivot,
        "b": args.b,
        "epsilon": args.epsilon,
        "storage_pct": args.storage_pct,
        "budget_pct": args.budget_pct,
        "schedule_step0": args.step0,
    }
    chash = _config_hash(config)

    if args.method in ("xor-pgd", "ixor-pgd"):
        constraint = half if half is not None else eq
        if constraint is None:
            raise UsageError(f"{args.method} needs a constrained instance")
        schedule = "improved" if args.method == "ixor-pgd" else "plain"
        cfg = PgdConfig(
            iterations=args.iters,
            mu=args.mu,
            rho_kappa=args.rho_kappa,
            schedule=schedule,
            mu_reg=args.mu_reg,
        )
        x_out, trace = xor_pgd(problem, estimator, constraint, cfg, x0, rng,
                               deadline=deadline)
        final_violation = constraint.violation(x_out)
    elif args.method == "xor-sgd":
        cfg = SgdConfig(iterations=args.iters, step=args.step0,
                        rho_kappa=args.rho_kappa)
        x_out, trace = xor_sgd(problem, estimator, cfg, x0, rng, deadline=deadline)
        final_violation = half.violation(x_out) if half is not None else 0.0
    elif args.method == "xor-sgd-penalty":
        if half is None:
            raise UsageError("xor-sgd-penalty needs a budget-constrained instance")
        cfg = PenaltyConfig(
            iterations=args.iters,
            step=PiecewiseSchedule(args.step0, (50, 100)),
            eta=PiecewiseSchedule(args.eta0, (50, 100)),
        )
        x_out, trace = xor_sgd_penalty(problem, estimator, half, cfg, x0, rng,
                                       deadline=deadline)
        final_violation = half.violation(x_out)
    else:  # al-primal-dual
        if eq is None:
            raise UsageError(
                "al-primal-dual needs affine equality constraints; "
                "this instance only has inequality constraints"
            )
        cfg = AlConfig(iterations=args.iters, beta=args.beta, tau=1.0,
                       domain_diameter=args.domain_diameter,
                       grad_bound=args.grad_bound)
        x_out, trace = primal_dual_al(problem, eq, cfg, estimator, x0, rng,
                                      deadline=deadline)
        final_violation = eq.violation(x_out)

    os.makedirs(args.out, exist_ok=True)
    trace.write_csv(os.path.join(args.out, "trace.csv"), chash)
    summary = {"config": config, "run": trace.summary()}
    summary["run"]["final_violation_of_output"] = final_violation
    enumerable = problem.model.num_vars <= DEFAULT_ENUMERATION_CAP
    if enumerable:
        summary["objective_exact"] = evaluate_objective_exact(problem, x_out)
        if args.eval_every > 0:
            best_val, best_k = math.inf, None
            for rec in trace.records[:: args.eval_every]:
                val = evaluate_objective_exact(problem, rec.x)
                if val < best_val:
                    best_val, best_k = val, rec.k
            summary["best_iterate_objective"] = best_val
            summary["best_iterate_k"] = best_k
    if problem.notes:
        summary["notes"] = dict(problem.notes)
    _write_json(os.path.join(args.out, "summary.json"), summary)
    if not args.no_figures:
        recs = [
            {"k": r.k, "obj_estimate": r.obj_estimate, "feasibility_residual": r.violation}
            for r in trace.records
        ]
        figures.render_trace(recs, os.path.join(args.out, "trace.png"))
    return 0


# ---------------------------------------------------------------------------
# bench


def _bench_cell(suite, size, seed, args):
    if suite == "inventory":
        inst = gen_inventory(int(size), seed)
        problem = inventory_problem(inst)
        half = inventory_constraint(inst, args.storage_pct)
        rng0 = np.random.default_rng(seed)
        x0 = np.abs(rng0.normal(5.0, 3.0, size=problem.dim))
    else:
        inst = gen_network(size, seed)
        problem = network_problem(inst)
        half = network_constraint(inst, args.budget_pct)
        rng0 = np.random.default_rng(seed)
        x0 = np.abs(rng0.normal(0.0, 1.0, size=problem.dim))
    return problem, half, x0


def _bench_run(method, problem, half, x0, seed, args):
    rng = np.random.default_rng(seed + 10_000)
    if method in ("ixor-pgd", "xor-pgd"):
        estimator = _build_estimator("xor", problem, args)
        cfg = PgdConfig(
            iterations=args.iters,
            mu=args.mu,
            rho_kappa=args.rho_kappa,
            schedule="improved" if method == "ixor-pgd" else "plain",
            mu_reg=args.mu_reg,
        )
        x_out, trace = xor_pgd(problem, estimator, half, cfg, x0, rng)
        est_kind = "xor"
    elif method == "xor-sgd-penalty":
        estimator = _build_estimator("xor", problem, args)
        cfg = PenaltyConfig(args.iters, PiecewiseSchedule(args.step0, (50, 100)),
                            PiecewiseSchedule(args.eta0, (50, 100)))
        x_out, trace = xor_sgd_penalty(problem, estimator, half, cfg, x0, rng)
        est_kind = "xor"
    elif method in ("gibbs-sgd", "bp-sgd"):
        est_kind = "gibbs" if method == "gibbs-sgd" else "bp"
        baseline_args = argparse.Namespace(**vars(args))
        baseline_args.samples = args.samples * args.baseline_multiplier
        estimator = _build_estimator(est_kind, problem, baseline_args)
        cfg = PenaltyConfig(args.iters, PiecewiseSchedule(args.step0, (50, 100)),
                            PiecewiseSchedule(args.eta0, (50, 100)))
        x_out, trace = xor_sgd_penalty(problem, estimator, half, cfg, x0, rng)
    else:
        raise UsageError(f"unknown bench method {method!r}")
    return x_out, trace, est_kind


def cmd_bench(args) -> int:
    if args.suite == "inventory":
        sizes = [int(s) for s in args.sizes.split(",") if s]
    elif args.suite == "network":
        sizes = [s.strip() for s in args.sizes.split(",") if s.strip()]
        for s in sizes:
            if s not in NETWORK_KINDS:
                raise UsageError(f"unknown network kind {s!r}; choose from {NETWORK_KINDS}")
    else:
        raise UsageError(f"unknown suite {args.suite!r} (inventory or network)")
    seeds = list(range(args.seed, args.seed + args.num_seeds))
    config = {
        "command": "bench",
        "suite": args.suite,
        "sizes": args.sizes,
        "seeds": seeds,
        "iters": args.iters,
        "samples": args.samples,
        "baseline_multiplier": args.baseline_multiplier,
        "mu": args.mu,
        "mu_reg": args.mu_reg,
        "storage_pct": args.storage_pct,
        "budget_pct": args.budget_pct,
    }
    chash = _config_hash(config)
    rows = []
    for size in sizes:
        for seed in seeds:
            problem, half, x0 = _bench_cell(args.suite, size, seed, args)
            for method in BENCH_METHODS:
                x_out, trace, est_kind = _bench_run(method, problem, half, x0, seed, args)
                rows.append({
                    "suite": args.suite,
                    "size": size,
                    "seed": seed,
                    "method": method,
                    "estimator": est_kind,
                    "objective": evaluate_objective_exact(problem, x_out),
                    "satisfaction_rate": trace.satisfaction_rate(),
                    "output_violation": half.violation(x_out),
                    "attempts": trace.total_attempts,
                    "iterations": len(trace.records),
                })
    os.makedirs(args.out, exist_ok=True)
    _write_csv(
        os.path.join(args.out, "bench.csv"),
        ["suite", "size", "seed", "method", "estimator", "objective",
         "satisfaction_rate", "output_violation", "attempts", "iterations"],
        rows,
        chash,
    )
    reference = "ixor-pgd"
    savings_rows = []
    for size in sizes:
        for seed in seeds:
            ref = [r for r in rows if r["size"] == size and r["seed"] == seed
                   and r["method"] == reference][0]
            for method in BENCH_METHODS:
                if method == reference:
                    continue
                other = [r for r in rows if r["size"] == size and r["seed"] == seed
                         and r["method"] == method][0]
                savings = (
                    100.0 * (other["objective"] - ref["objective"]) / other["objective"]
                    if other["objective"] not in (0.0,) else 0.0
                )
                savings_rows.append({
                    "suite": args.suite, "size": size, "seed": seed,
                    "against": method, "savings_pct": savings,
                })
    _write_csv(
        os.path.join(args.out, "savings.csv"),
        ["suite", "size", "seed", "against", "savings_pct"],
        savings_rows,
        chash,
    )
    _write_json(os.path.join(args.out, "summary.json"),
                {"config": config, "cells": len(rows)})
    if not args.no_figures:
        figures.render_savings(rows, reference, os.path.join(args.out, "savings.png"))
        figures.render_objectives(rows, os.path.join(args.out, "objectives.png"))
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_sampler_flags(p):
    p.add_argument("--pivot", type=int, default=100, help="survivor cap P")
    p.add_argument("--b", type=int, default=7, help="discretization bit parameter")
    p.add_argument("--epsilon", type=float, default=0.01, help="discretization epsilon")
    p.add_argument("--quantization", type=int, default=8,
                   help="slice quantization bits for b > 1")
    p.add_argument("--burn-in", type=int, default=100, dest="burn_in",
                   help="Gibbs burn-in sweeps")
    p.add_argument("--thin", type=int, default=30, help="Gibbs steps between samples")
    p.add_argument("--bp-iters", type=int, default=20, dest="bp_iters",
                   help="belief propagation iterations")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xorpgd",
        description="Constrained stochastic optimization with XOR-sampled gradients",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    ps = sub.add_parser("sample", help="draw scenario samples from a UAI model")
    ps.add_argument("--model", required=True, help="UAI MARKOV model file")
    ps.add_argument("--sampler", choices=("xor", "gibbs", "bp"), default="xor")
    ps.add_argument("--samples", type=int, default=1000, dest="num")
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--out", default="out")
    ps.add_argument("--no-figures", action="store_true", dest="no_figures")
    _add_sampler_flags(ps)
    ps.set_defaults(func=cmd_sample)

    po = sub.add_parser("optimize", help="run one optimizer on an instance")
    po.add_argument("--instance", required=True, help="instance JSON file")
    po.add_argument("--method", required=True,
                    help=f"one of: {', '.join(METHODS)}")
    po.add_argument("--estimator", choices=ESTIMATORS, default="xor")
    po.add_argument("--iters", type=int, default=200)
    po.add_argument("--samples", type=int, default=10, help="gradient samples per iteration")
    po.add_argument("--seed", type=int, default=0)
    po.add_argument("--mu", type=float, default=0.05, help="declared strong convexity")
    po.add_argument("--mu-reg", type=float, default=1e-3, dest="mu_reg",
                    help="quadratic regularizer weight")
    po.add_argument("--rho-kappa", type=float, default=math.sqrt(2.0), dest="rho_kappa")
    po.add_argument("--storage-pct", type=float, default=100.0, dest="storage_pct")
    po.add_argument("--budget-pct", type=float, default=100.0, dest="budget_pct")
    po.add_argument("--time-limit-s", type=float, default=0.0, dest="time_limit_s")
    po.add_argument("--step0", type=float, default=0.1,
                    help="initial step for fixed/piecewise schedules")
    po.add_argument("--eta0", type=float, default=10.0,
                    help="initial dual-ascent rate for the penalty method")
    po.add_argument("--beta", type=float, default=1.0, help="augmented-Lagrangian penalty")
    po.add_argument("--domain-diameter", type=float, default=2.0, dest="domain_diameter")
    po.add_argument("--grad-bound", type=float, default=2.0, dest="grad_bound")
    po.add_argument("--eval-every", type=int, default=0, dest="eval_every",
                    help="exact-evaluate every Nth iterate and report the best")
    po.add_argument("--out", default="out")
    po.add_argument("--no-figures", action="store_true", dest="no_figures")
    _add_sampler_flags(po)
    po.set_defaults(func=cmd_optimize)

    pb = sub.add_parser("bench", help="compare methods across seeded instances")
    pb.add_argument("--suite", required=True, help="inventory or network")
    pb.add_argument("--sizes", default="6,8,10",
                    help="comma list: material counts, or network kinds")
    pb.add_argument("--seeds", type=int, default=5, dest="num_seeds")
    pb.add_argument("--seed", type=int, default=0, help="first seed")
    pb.add_argument("--iters", type=int, default=60)
    pb.add_argument("--samples", type=int, default=6)
    pb.add_argument("--baseline-multiplier", type=int, default=10,
                    dest="baseline_multiplier",
                    help="extra samples granted to Gibbs/BP baselines")
    pb.add_argument("--mu", type=float, default=0.05)
    pb.add_argument("--mu-reg", type=float, default=0.05, dest="mu_reg")
    pb.add_argument("--rho-kappa", type=float, default=math.sqrt(2.0), dest="rho_kappa")
    pb.add_argument("--storage-pct", type=float, default=100.0, dest="storage_pct")
    pb.add_argument("--budget-pct", type=float, default=100.0, dest="budget_pct")
    pb.add_argument("--step0", type=float, default=0.1)
    pb.add_argument("--eta0", type=float, default=10.0)
    pb.add_argument("--out", default="out")
    pb.add_argument("--no-figures", action="store_true", dest="no_figures")
    _add_sampler_flags(pb)
    pb.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
