"""Fluid rates and RJF verdicts for the three-queue cases and the four-queue timing example."""
import argparse
import math
import time

from mwlab.fluid import integrate_fluid
from mwlab.jf import JumpSchedule, RateProfile, SearchConfig, check_rjf, integrate_jf
from mwlab.scenarios import THREE_QUEUE_CASES, four_queue_timing, three_queue


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epsilon", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    net = three_queue()
    print("case  gamma            lambda             fluid q3 rate  RJF verdict        c       evals  time")
    for k, sc in THREE_QUEUE_CASES.items():
        tr = integrate_fluid(net, sc["lambda"], (1, 0, 0), 10.0)
        t0 = time.perf_counter()
        v = check_rjf(net, sc["lambda"], sc["gamma"], args.epsilon, 2, SearchConfig(seed=args.seed))
        c = v.witness.value if v.witness else 0.0
        g = ",".join("inf" if math.isinf(x) else f"{x:g}" for x in sc["gamma"])
        lam = ",".join(f"{x:g}" for x in sc["lambda"])
        print(f"{k:<5} {g:<16} {lam:<18} {tr.drifts[0][2]:<14.6g} {v.status.value:<18} {c:<7.4f} "
              f"{v.search_stats['evaluations']:<6} {time.perf_counter() - t0:.2f}s")

    print("\nfour-queue timing example, lambda=(1,2,1,1), q(0)=(27,0,0,0)")
    fq = four_queue_timing()
    lam = (1, 2, 1, 1)
    for label, jumps in [("no second jump", ((0, 0, 27.0),)), ("jump 2 at t=5", ((0, 0, 27.0), (5, 0, 2.0)))]:
        tr = integrate_jf(fq, RateProfile.constant(lam), JumpSchedule(jumps), 12.0)
        bps = ", ".join(f"{t:g}:{tuple(round(float(v), 4) for v in q)}" for t, q in zip(tr.times, tr.right))
        print(f"  {label:<15} max q4={tr.coordinate_max(3)[0]:.4f}  breakpoints {bps}")


if __name__ == "__main__":
    main()
