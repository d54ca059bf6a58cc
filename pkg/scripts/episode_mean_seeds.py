"""Spread of the 1e6-sample mean of the episode law across seeds.

With tail index 1 + gamma < 2 the sample mean has infinite variance; this
shows how often a 2% band around the true mean is hit.
"""
import argparse

import numpy as np

from mwlab.arrivals import mu_bar_for, queue_stream, sample_episode_density, sample_pareto_mixture
from mwlab.scenarios import three_queue


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--samples", type=int, default=1_000_000)
    args = ap.parse_args()
    mu = mu_bar_for(three_queue(), (0.5, 0.5, 0.25), 0.05)
    laws = {f"episode gamma={g}": (lambda gen, g=g: sample_episode_density(g, 0.5, mu, gen, size=args.samples))
            for g in (0.4, 0.8)}
    laws.update({f"pareto gamma={g}": (lambda gen, g=g: sample_pareto_mixture(g, 0.5, 1.0, gen, size=args.samples))
                 for g in (0.4, 0.8)})
    for name, draw in laws.items():
        err = np.array([draw(queue_stream(s, 0, 0)).mean() / 0.5 - 1 for s in range(args.seeds)])
        q = np.quantile(err, [0.1, 0.5, 0.9])
        print(f"{name:<20} within 2%: {np.mean(abs(err) <= 0.02):.2f}  pooled {err.mean():+.4f}  "
              f"q10/median/q90 {q[0]:+.3f} {q[1]:+.3f} {q[2]:+.3f}")


if __name__ == "__main__":
    main()
