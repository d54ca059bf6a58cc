"""Monte Carlo trend verdicts across seeds for Cases 1-3 and a light-tailed instance."""
import argparse
import json
from pathlib import Path

from mwlab.arrivals import PARETO, POISSON, ArrivalPlan, ArrivalSpec
from mwlab.scenarios import THREE_QUEUE_CASES, three_queue
from mwlab.stability import monte_carlo


def plan(gamma, lam, T):
    specs = [ArrivalSpec(POISSON) if g == float("inf") else ArrivalSpec(PARETO, gamma=g, x_min=1.0) for g in gamma]
    return ArrivalPlan.stationary(T, specs, lam)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--horizon-exp", type=int, default=17)
    ap.add_argument("--replications", type=int, default=64)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3])
    ap.add_argument("--threads", type=int)
    ap.add_argument("--out", type=Path, default=Path("results/stability_trends.json"))
    args = ap.parse_args()
    net = three_queue()
    T = 2 ** args.horizon_exp
    instances = {f"case{k}": (sc["gamma"], sc["lambda"]) for k, sc in THREE_QUEUE_CASES.items()}
    instances["light"] = ([float("inf")] * 3, [0.5, 0.5, 0.75])
    out = {}
    for name, (gamma, lam) in instances.items():
        p = plan(gamma, lam, T)
        for seed in args.seeds:
            rep = monte_carlo(net, p, R=args.replications, seed=seed, queue=2, threads=args.threads)
            t = rep.trend
            print(f"{name:<6} seed {seed}: {t['verdict']:<13} slope {t['slope']:+.3f} "
                  f"[{t['slope_lower']:+.3f}, {t['slope_upper']:+.3f}] last change ub {t['last_change_upper']:+.3f}")
            out[f"{name}/seed{seed}"] = json.loads(rep.to_json(include_values=False))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
