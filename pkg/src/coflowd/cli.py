"""Command-line entry point: coflowd gen|order|lp|simulate|ub|experiment|report."""
from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .bounds import TABLE_FAMILIES, BoundInputs, ub_general_p, ub_table
from .distributions import ConfigError, SizeSpec
from .harness import ExperimentConfig, format_report, load_config, read_stats, run_experiment
from .lpbound import brute_force_lp, solve_lp
from .model import (ValidationError, aggregate_loads, load_instance, realization_from_json,
                    save_instance)
from .ordering import dual_objective, sincronia_order
from .simulator import (POLICY_NAMES, STREAM_RANDOM_ORDER, STREAM_VOLUMES, completion_times,
                        draw_volumes, estimate, make_policy, realization_rng, simulate)
from .workload import GenConfig, generate_instance


def _size_spec(args) -> SizeSpec:
    if args.dist == "fixed" or args.eta == 0:
        return SizeSpec.fixed(args.mean)
    return SizeSpec(args.dist, args.mean, args.eta)


def _add_size_args(p):
    p.add_argument("--dist", default="gamma", choices=["fixed", "gamma", "normal", "pareto"])
    p.add_argument("--mean", type=float, default=10.0)
    p.add_argument("--eta", type=float, default=0.5, help="coefficient of variation")


def _dump(obj):
    print(json.dumps(obj, indent=1))


def cmd_gen(args):
    cfg = GenConfig(args.L, args.n, _size_spec(args), args.seed, args.structure)
    inst = generate_instance(cfg)
    if args.out:
        save_instance(inst, args.out)
    else:
        from .model import instance_to_json
        _dump(instance_to_json(inst))


def _loads(inst, realization_path):
    if realization_path is None:
        return aggregate_loads(inst)
    with open(realization_path) as fh:
        return aggregate_loads(inst, realization_from_json(json.load(fh)))


def cmd_order(args):
    inst = load_instance(args.instance)
    order = sincronia_order(_loads(inst, args.realization), inst.weights)
    _dump({"pi": order.coflow_ids(), "primal_C": order.primal_C.tolist(),
           "primal_cost": order.primal_cost(), "dual_objective": dual_objective(order)})


def cmd_lp(args):
    inst = load_instance(args.instance)
    loads = aggregate_loads(inst)
    if args.brute:
        sol = brute_force_lp(loads, inst.weights)
    else:
        sol = solve_lp(loads, inst.weights, exhaustive=args.exhaustive)
    _dump({"clp": sol.objective, "C": sol.C.tolist(), "num_cuts": len(sol.cuts),
           "iterations": sol.iterations, "pivots": sol.pivots})


def _events_json(res) -> dict:
    return {"policy": res.policy, "order": None if res.order is None else list(res.order),
            "completion": res.completion.tolist(), "flow_completion": res.flow_completion.tolist(),
            "segments": [{"start": e.start, "end": e.end, "rates": e.rates.tolist()}
                         for e in res.events]}


def cmd_simulate(args):
    inst = load_instance(args.instance)
    policy = make_policy(args.policy, inst)
    if args.realization:
        with open(args.realization) as fh:
            real = realization_from_json(json.load(fh))
        vols = real.as_array(inst)[None, :]
        rngs = [np.random.default_rng(args.seed)]
    else:
        vols = np.array([draw_volumes(inst, realization_rng(args.seed, args.instance_id, r,
                                                            STREAM_VOLUMES))[0]
                         for r in range(args.realizations)])
        rngs = [realization_rng(args.seed, args.instance_id, r, STREAM_RANDOM_ORDER)
                for r in range(args.realizations)]
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["instance_id", "rep_id", "policy", "weighted_cct"])
        costs = []
        for r, (vol, rng) in enumerate(zip(vols, rngs)):
            if args.trace and r == 0:
                res = simulate(inst, vol, policy, rng)
                with open(args.trace, "w") as tf:
                    json.dump(_events_json(res), tf)
                cost = res.weighted_cct(inst.weights)
            else:
                cost = float(inst.weights @ completion_times(inst, vol, policy, rng))
            costs.append(cost)
            wr.writerow([args.instance_id, r, args.policy, repr(cost)])
    finally:
        if args.out:
            fh.close()
    est = estimate(costs)
    print(f"{args.policy}: mean {est.mean:.6g} se {est.se:.3g} over {len(costs)} realizations",
          file=sys.stderr)


def cmd_ub(args):
    if args.dist == "general" and args.mp is not None:
        if args.mumin is None:
            raise ConfigError("general mode needs --mumin")
        alpha = ub_general_p(BoundInputs(args.L, args.p, args.mp, mu_min=args.mumin))
    else:
        if args.eta is None:
            raise ConfigError("table mode needs --eta")
        alpha = ub_table(args.dist, args.L, args.eta)
    print(f"alpha_bound {alpha:.6f}")
    print(f"ratio_bound {4 * alpha:.6f}")


def _cells(text):
    out = []
    for tok in text.split(","):
        L, _, n = tok.strip().partition("x")
        out.append((int(L), int(n)))
    return tuple(out)


def cmd_experiment(args):
    over = {
        "num_instances": args.instances, "num_realizations": args.realizations,
        "policies": tuple(args.policies.split(",")) if args.policies else None,
        "reference": args.reference, "seed": args.seed, "structure": args.structure,
        "raw": True if args.raw else None,
    }
    if args.desk:
        over["num_instances"] = over["num_instances"] or 30
        over["num_realizations"] = over["num_realizations"] or 300
    if args.config:
        over["cells"] = _cells(args.cells) if args.cells else None
        cfg = load_config(args.config).with_overrides(**over)
    elif args.cells:
        cfg = ExperimentConfig(_cells(args.cells), _size_spec(args),
                               **{k: v for k, v in over.items() if v is not None})
    else:
        raise ConfigError("give --config or --cells")

    def progress(done, total):
        if not args.quiet:
            print(f"\r{done}/{total} instances", end="", file=sys.stderr, flush=True)

    res = run_experiment(cfg, args.out, workers=args.workers, progress=progress)
    if not args.quiet:
        print(file=sys.stderr)
    print(format_report(res.rows))


def cmd_report(args):
    print(format_report(read_stats(args.stats)))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coflowd", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen", help="generate a random instance")
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    _add_size_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--structure", default="synthetic", help="synthetic | trace:<path>")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("order", help="priority order from expected (or realized) loads")
    p.add_argument("instance")
    p.add_argument("--realization", help="realization JSON for a clairvoyant order")
    p.set_defaults(func=cmd_order)

    p = sub.add_parser("lp", help="LP lower bound on expected weighted CCT")
    p.add_argument("instance")
    p.add_argument("--brute", action="store_true", help="enumerate every constraint (n <= 12)")
    p.add_argument("--exhaustive", action="store_true",
                   help="confirm the optimum against every subset (n <= 12)")
    p.set_defaults(func=cmd_lp)

    p = sub.add_parser("simulate", help="simulate a policy")
    p.add_argument("instance")
    p.add_argument("--policy", choices=POLICY_NAMES, default="nc")
    p.add_argument("--realizations", type=int, default=1000)
    p.add_argument("--realization", help="simulate one given realization JSON instead")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instance-id", type=int, default=0, help="instance index in the seed tree")
    p.add_argument("--out", help="per-replication CSV (default stdout)")
    p.add_argument("--trace", help="write the first replication's rate segments as JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ub", help="closed-form bound on alpha")
    p.add_argument("--dist", choices=TABLE_FAMILIES, required=True)
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--eta", type=float)
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--mp", type=float, help="moment bound m_p (general mode)")
    p.add_argument("--mumin", type=float, help="smallest positive mean load (general mode)")
    p.set_defaults(func=cmd_ub)

    p = sub.add_parser("experiment", help="run an experiment grid")
    p.add_argument("--config", help="TOML or JSON experiment config")
    p.add_argument("--cells", help="e.g. 4x4,8x8,16x16")
    _add_size_args(p)
    p.add_argument("-I", "--instances", type=int)
    p.add_argument("-R", "--realizations", type=int)
    p.add_argument("--policies", help=f"comma list from {','.join(POLICY_NAMES)}")
    p.add_argument("--reference", choices=["lp", "cl"])
    p.add_argument("--seed", type=int)
    p.add_argument("--structure")
    p.add_argument("--desk", action="store_true", help="30 instances x 300 realizations")
    p.add_argument("--raw", action="store_true", help="also write per-replication costs")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="output directory")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="format a stats CSV")
    p.add_argument("stats")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ConfigError, ValidationError, FileNotFoundError) as err:
        print(f"coflowd: error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
