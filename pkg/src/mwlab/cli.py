"""Command-line front end: ``mwlab <command> <scenario> [options]``.

Scenarios are built-in names (``three-queue``, ``four-queue-timing``) or JSON
files with keys ``network`` ({ell, service_vectors}), ``lambda``, ``gamma``
(``"inf"`` allowed), ``epsilon``, ``queue`` (1-based), ``init``, ``t_end`` and
optionally ``arrivals`` (per-queue law descriptions).

Exit codes: 0 success / no violation found / check passed, 1 violation found
or check failed or inconclusive, 2 error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import scenarios as sc_mod
from .fluid import FluidError, integrate_fluid
from .network import InvalidNetwork

EXIT_OK, EXIT_VIOLATED, EXIT_ERROR = 0, 1, 2


def _floats(text: str) -> list:
    return [float(v) for v in text.split(",")]


def _scenario(args) -> dict:
    sc = sc_mod.load_scenario(args.scenario)
    if args.network:
        sc["network"] = json.loads(Path(args.network).read_text())
    if getattr(args, "case", None) is not None:
        if sc.get("name") != "three-queue":
            raise ValueError("--case applies to the three-queue scenario")
        sc.update({k: list(v) for k, v in sc_mod.THREE_QUEUE_CASES[args.case].items()})
        sc["case"] = args.case
    if args.gamma:
        sc["gamma"] = sc_mod.parse_gamma(args.gamma.split(","))
    if args.lam:
        sc["lambda"] = _floats(args.lam)
    if args.lambda3 is not None:
        sc["lambda"] = list(sc["lambda"])
        sc["lambda"][2] = args.lambda3
    if args.epsilon is not None:
        sc["epsilon"] = args.epsilon
    if args.queue is not None:
        sc["queue"] = args.queue
    sc["gamma"] = sc_mod.parse_gamma(sc.get("gamma", []))
    return sc


def _seed(args) -> int:
    if args.seed is not None:
        return int(args.seed)
    return int(np.random.SeedSequence().generate_state(1)[0])


def _emit(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _descriptor(command: str, sc: dict, seed=None, **extra) -> dict:
    d = {"command": command, "scenario": sc_mod.jsonable(sc)}
    if seed is not None:
        d["seed"] = seed
    d.update(extra)
    return d


def cmd_fluid(args) -> int:
    sc = _scenario(args)
    net = sc_mod.scenario_network(sc)
    init = _floats(args.init) if args.init else sc.get("init", [0.0] * net.ell)
    t_end = args.t_end if args.t_end is not None else float(sc.get("t_end", 10.0))
    traj = integrate_fluid(net, sc["lambda"], init, t_end)
    _emit(traj.to_csv(), args.out)
    return EXIT_OK


def _search_config(args, seed):
    from .jf import SearchConfig

    cfg = SearchConfig(seed=seed)
    if args.grid:
        cfg.time_grid = args.grid
    if args.budget_evals:
        cfg.budget_evals = args.budget_evals
    return cfg


def cmd_rjf_check(args) -> int:
    from .jf import check_rjf

    sc = _scenario(args)
    net = sc_mod.scenario_network(sc)
    seed = _seed(args)
    v = check_rjf(net, sc["lambda"], sc["gamma"], float(sc["epsilon"]), int(sc["queue"]) - 1,
                  _search_config(args, seed))
    report = {"status": v.status.value, "search_stats": v.search_stats,
              "witness": v.witness.to_dict() if v.witness else None,
              "replay": _descriptor("rjf-check", sc, seed, grid=args.grid, budget_evals=args.budget_evals)}
    if v.witness and args.witness_out:
        Path(args.witness_out).write_text(v.witness.to_json())
    _emit(json.dumps(report, indent=2), args.out)
    return EXIT_VIOLATED if v.violated else EXIT_OK


def cmd_simulate(args) -> int:
    from .stability import monte_carlo

    sc = _scenario(args)
    net = sc_mod.scenario_network(sc)
    seed = _seed(args)
    T = 2 ** args.horizon_exp
    plan = sc_mod.stationary_plan(sc, T)
    rep = monte_carlo(net, plan, R=args.replications, seed=seed, queue=int(sc["queue"]) - 1,
                      threads=args.threads)
    out = json.loads(rep.to_json(include_values=not args.compact))
    out["replay"] = _descriptor("simulate", sc, seed, horizon_exp=args.horizon_exp,
                                replications=args.replications, arrivals=plan.descriptor(seed))
    _emit(json.dumps(out, indent=2), args.out)
    return EXIT_OK


def _load_or_find_witness(args, sc, net, seed):
    from .jf import Witness, check_rjf

    if args.witness:
        return Witness.load(args.witness)
    v = check_rjf(net, sc["lambda"], sc["gamma"], float(sc["epsilon"]), int(sc["queue"]) - 1,
                  _search_config(args, seed))
    return v.witness


def cmd_witness(args) -> int:
    from .arrivals import build_episode_schedule
    from .stability import forced_jump_run, run_witness

    sc = _scenario(args)
    net = sc_mod.scenario_network(sc)
    seed = _seed(args)
    w = _load_or_find_witness(args, sc, net, seed)
    base = {"replay": _descriptor("witness", sc, seed, T=args.T, forced=args.forced,
                                  replications=args.replications)}
    if w is None:
        raise ValueError("no RJF violation found, so there is no witness to run")
    base["witness"] = w.to_dict()
    if args.forced:
        res = forced_jump_run(net, w, args.T, tol=args.tol)
        base.update({"mode": "forced", "status": res.status, "Q_m(T)": None if math.isnan(res.value) else res.value, "bound": res.bound,
                     "d": res.d, "pass": res.passed})
        if args.trace_out and res.trace is not None:
            Path(args.trace_out).write_text(res.trace.to_csv(stride=args.stride))
        _emit(json.dumps(base, indent=2), args.out)
        return EXIT_OK if res.passed else EXIT_VIOLATED
    ep = build_episode_schedule(w, args.T, 0)
    rep = run_witness(net, ep.plan, ep, R=args.replications, seed=seed)
    base.update({"mode": "stochastic", **rep.summary()})
    _emit(json.dumps(base, indent=2), args.out)
    return EXIT_OK


def cmd_lyapunov(args) -> int:
    from .lyapunov import build_distance_lyapunov, lattice_clouds, verify_special

    sc = _scenario(args)
    net = sc_mod.scenario_network(sc)
    seed = _seed(args)
    if args.heavy:
        heavy = [int(v) - 1 for v in args.heavy.split(",")]
    else:
        heavy = [j for j, g in enumerate(sc["gamma"]) if not math.isinf(g)]
    eps = float(sc["epsilon"])
    clouds = lattice_clouds(net, sc["lambda"], eps, heavy, args.cloud_samples, seed=seed, max_total=args.max_jumps)
    cand = build_distance_lyapunov(clouds, heavy, eps, heavy_closure=args.closure)
    rep = verify_special(cand, net, sc["lambda"], eps, int(sc["queue"]) - 1, samples=args.samples, seed=seed,
                         tol=args.tol)
    out = rep.to_dict()
    out["candidate"] = cand.kind
    out["replay"] = _descriptor("lyapunov", sc, seed, heavy=[j + 1 for j in heavy], samples=args.samples,
                                cloud_samples=args.cloud_samples, max_jumps=args.max_jumps, closure=args.closure)
    _emit(json.dumps(out, indent=2), args.out)
    return EXIT_OK if rep.passed else EXIT_VIOLATED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mwlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, random=False):
        sp.add_argument("scenario", help="three-queue, four-queue-timing, or a scenario JSON file")
        sp.add_argument("--network", help="JSON network file overriding the scenario's service set")
        sp.add_argument("--case", type=int, choices=sorted(sc_mod.THREE_QUEUE_CASES), help="three-queue preset")
        sp.add_argument("--lambda", dest="lam", help="arrival rates, comma separated")
        sp.add_argument("--lambda3", type=float, help="override the third arrival rate")
        sp.add_argument("--gamma", help="tail exponents, comma separated, 'inf' allowed")
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--queue", type=int, help="target queue (1-based)")
        sp.add_argument("--out", help="write the primary output here instead of stdout")
        if random:
            sp.add_argument("--seed", type=int)
            sp.add_argument("--threads", type=int, help="worker cap (default: $MWLAB_THREADS or 1)")

    def search(sp):
        sp.add_argument("--grid", type=int, help="jump-time grid points in (0,1)")
        sp.add_argument("--budget-evals", type=int, help="cap on trajectory evaluations")

    sp = sub.add_parser("fluid", help="integrate a fluid trajectory, CSV output")
    common(sp)
    sp.add_argument("--init", help="initial queue vector, comma separated")
    sp.add_argument("--t-end", type=float)
    sp.set_defaults(func=cmd_fluid)

    sp = sub.add_parser("rjf-check", help="search for RJF violations")
    common(sp, random=True)
    search(sp)
    sp.add_argument("--witness-out", help="write the witness JSON here")
    sp.set_defaults(func=cmd_rjf_check)

    sp = sub.add_parser("simulate", help="Monte Carlo stability trend test")
    common(sp, random=True)
    sp.add_argument("--horizon-exp", type=int, default=17, help="largest horizon is 2**K")
    sp.add_argument("--replications", type=int, default=64)
    sp.add_argument("--compact", action="store_true", help="omit per-replication values")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("witness", help="run an instability witness episode")
    common(sp, random=True)
    search(sp)
    sp.add_argument("--witness", help="witness JSON (default: search with the scenario parameters)")
    sp.add_argument("--forced", action="store_true", help="deterministic forced-jump run")
    sp.add_argument("--T", type=int, default=10_000, help="episode length in slots")
    sp.add_argument("--tol", type=float, default=0.02)
    sp.add_argument("--replications", type=int, default=64)
    sp.add_argument("--trace-out", help="CSV trace of the forced run")
    sp.add_argument("--stride", type=int, default=1)
    sp.set_defaults(func=cmd_witness)

    sp = sub.add_parser("lyapunov", help="verify a distance-to-reachable-set Lyapunov candidate")
    common(sp, random=True)
    sp.add_argument("--heavy", help="heavy queues, 1-based (default: finite exponents)")
    sp.add_argument("--samples", type=int, default=10_000)
    sp.add_argument("--cloud-samples", type=int, default=2_000)
    sp.add_argument("--max-jumps", type=int, default=2, help="truncation of the heavy-jump lattice")
    sp.add_argument("--closure", action="store_true", help="close the set under heavy increments")
    sp.add_argument("--tol", type=float)
    sp.set_defaults(func=cmd_lyapunov)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FluidError, InvalidNetwork, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
