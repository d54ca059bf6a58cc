"""Exceedance probability of the Case 3 witness episode against T (order-of-magnitude check)."""
import argparse
import math

from mwlab.arrivals import build_episode_schedule
from mwlab.jf import check_rjf
from mwlab.scenarios import three_queue
from mwlab.stability import forced_jump_run, run_witness


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--T", type=int, nargs="+", default=[2000, 10_000])
    ap.add_argument("--replications", type=int, default=512)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    net = three_queue()
    w = check_rjf(net, (0.5, 0.5, 0.25), (0.4, 0.4, math.inf), 0.05, 2).witness
    print(f"witness c={w.value:.4f} jumps={w.jumps.jumps}")
    for T in args.T:
        ep = build_episode_schedule(w, T)
        rep = run_witness(net, ep.plan, ep, R=args.replications, seed=args.seed)
        forced = forced_jump_run(net, w, T)
        s = rep.summary()
        print(f"T={T:<7} d={ep.d:.3g} forced={forced.status:<12} P(exceed)={rep.probability:.4f} "
              f"log T/T={math.log(T) / T:.2e} jump events={s['jump_event_rate']} all events={s['all_events_rate']:.4f}")


if __name__ == "__main__":
    main()
