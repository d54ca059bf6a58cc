"""Distance-to-reachable-set candidates for one and two heavy queues on the three-queue network."""
import argparse

from mwlab.lyapunov import build_distance_lyapunov, lattice_clouds, verify_special
from mwlab.scenarios import three_queue


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=10_000)
    ap.add_argument("--cloud-samples", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    net = three_queue()
    lam, eps = (0.5, 0.5, 0.25), 0.05
    for heavy in ([0], [0, 1]):
        clouds = lattice_clouds(net, lam, eps, heavy, args.cloud_samples, seed=args.seed)
        for closure in (False, True):
            V = build_distance_lyapunov(clouds, heavy, eps, heavy_closure=closure)
            rep = verify_special(V, net, lam, eps, 2, samples=args.samples, seed=args.seed)
            props = "  ".join(f"{p.name}={'ok' if p.passed else 'FAIL'}({p.worst_margin:+.3g})" for p in rep.properties)
            print(f"heavy={[j + 1 for j in heavy]} closure={closure!s:<5} overall={'PASS' if rep.passed else 'FAIL'}  {props}")
            for p in rep.properties:
                if p.counterexamples:
                    print(f"    worst {p.name} counterexample: {p.counterexamples[0]}")


if __name__ == "__main__":
    main()
