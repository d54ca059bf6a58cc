"""Numerical falsifier for special eps-Lyapunov functions.

A special eps-Lyapunov function V for target queue m and heavy set H must:

1. be 1-Lipschitz;
2. decrease at rate at least eps along the fluid at ``lambda_star`` while positive;
3. vanish at the origin and be positive wherever ``x_m > 0``;
4. not increase when a heavy coordinate is increased.

``verify_special`` samples each property. A failure always comes with a
concrete, re-checkable counterexample; a pass only means none was found.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fluid import integrate_fluid
from .jf import PointCloud
from .network import Network

LIPSCHITZ_SLACK = 1e-6
MONO_SLACK = 1e-9
ZERO_TOL = 1e-9

DISTANCE_TO_CLOUD = "DistanceToCloud"
HEAVY_CLOSED_DISTANCE = "HeavyClosedDistance"
USER_SUPPLIED = "UserSupplied"


@dataclass
class LyapunovCandidate:
    evaluator: Callable
    kind: str
    heavy_set: tuple = ()
    epsilon: float = 0.0
    cloud: PointCloud | None = None

    def __call__(self, x) -> np.ndarray:
        """Evaluate at one state (returns float) or a batch of shape (N, ell)."""
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.evaluator(np.atleast_2d(x)), dtype=float)
        return float(out[0]) if x.ndim == 1 else out


def _heavy_closed_distance(points: np.ndarray, heavy: tuple, chunk: int = 256):
    """Distance to the union of ``p + cone(e_j, j heavy)`` over cloud points p."""
    light = np.ones(points.shape[1], dtype=bool)
    light[list(heavy)] = False

    def evaluate(x):
        out = np.empty(len(x))
        for i in range(0, len(x), chunk):
            diff = x[i:i + chunk, None, :] - points[None, :, :]
            diff = np.where(light, diff, np.minimum(diff, 0.0))
            out[i:i + chunk] = np.sqrt((diff * diff).sum(axis=2).min(axis=1))
        return out

    return evaluate


def build_distance_lyapunov(clouds, heavy_set=(), epsilon: float = 0.0,
                            heavy_closure: bool = False) -> LyapunovCandidate:
    """Distance to the union of sampled reachable sets.

    With ``heavy_closure`` the set is first closed under adding nonnegative
    multiples of the heavy unit vectors, which makes property 4 hold exactly.
    """
    clouds = list(clouds)
    if not clouds:
        raise ValueError("need at least one cloud")
    cloud = PointCloud.union(clouds) if len(clouds) > 1 else clouds[0]
    if len(cloud.points) == 0:
        raise ValueError("empty union")
    if float(cloud.distance(np.zeros(cloud.points.shape[1]))) > ZERO_TOL:
        raise ValueError("clouds must contain the origin")
    heavy = tuple(int(j) for j in heavy_set)
    if heavy_closure:
        return LyapunovCandidate(_heavy_closed_distance(cloud.points, heavy), HEAVY_CLOSED_DISTANCE,
                                 heavy, epsilon, cloud)
    return LyapunovCandidate(lambda x: cloud.distance(x), DISTANCE_TO_CLOUD, heavy, epsilon, cloud)


def user_candidate(fn: Callable, heavy_set=(), epsilon: float = 0.0) -> LyapunovCandidate:
    """Wrap ``fn(x) -> float`` (single state) as a candidate."""
    return LyapunovCandidate(lambda xs: np.array([fn(x) for x in xs]), USER_SUPPLIED,
                             tuple(int(j) for j in heavy_set), epsilon)


@dataclass
class PropertyResult:
    name: str
    passed: bool
    worst_margin: float
    checked: int
    counterexamples: list = field(default_factory=list)


@dataclass
class VerificationReport:
    properties: list
    samples: int
    seed: int
    epsilon: float
    tol: float
    m: int
    heavy_set: tuple
    box: float

    @property
    def passed(self) -> bool:
        return all(p.passed for p in self.properties)

    def __getitem__(self, k: int) -> PropertyResult:
        return self.properties[k - 1]

    def to_dict(self) -> dict:
        return {"overall": self.passed, "samples": self.samples, "seed": self.seed, "epsilon": self.epsilon,
                "tol": self.tol, "queue": self.m + 1, "heavy_set": [j + 1 for j in self.heavy_set],
                "box": self.box,
                "properties": [{"property": p.name, "passed": p.passed, "worst_margin": p.worst_margin,
                                "checked": p.checked, "counterexamples": p.counterexamples}
                               for p in self.properties]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _keep_worst(examples: list, limit: int) -> list:
    examples.sort(key=lambda e: e["margin"])
    return examples[:limit]


def verify_special(candidate: LyapunovCandidate, net: Network, lambda_star, epsilon: float, m: int,
                   samples: int = 10_000, seed: int = 0, tol: float | None = None,
                   box: float | None = None, window: float = 0.1,
                   max_counterexamples: int = 20) -> VerificationReport:
    """Sample-based check of the four defining properties.

    Test points are uniform in ``[0, box]^ell``; half of the points for
    properties 2 and 3 are taken at or near cloud points, where failures tend
    to hide.
    """
    if samples < 100:
        raise ValueError("use at least 100 samples")
    lam = np.asarray(lambda_star, dtype=float)
    tol = 0.1 * epsilon if tol is None else float(tol)
    ell = net.ell
    rng = np.random.default_rng(seed)
    cloud = candidate.cloud
    if box is None:
        box = float(np.max(cloud.points)) if cloud is not None and np.max(cloud.points) > 0 else 10.0
    V = candidate

    def uniform(n):
        return rng.uniform(0.0, box, (n, ell))

    def near_cloud(n, spread):
        if cloud is None:
            return uniform(n)
        base = cloud.points[rng.integers(0, len(cloud.points), n)]
        return np.abs(base + spread * rng.standard_normal((n, ell)))

    results = []

    # property 1: Lipschitz constant one
    x = uniform(samples)
    scales = np.exp(rng.uniform(np.log(1e-3 * box), np.log(box), samples))
    y = np.abs(x + scales[:, None] * rng.standard_normal((samples, ell)))
    dist = np.linalg.norm(x - y, axis=1)
    ok = dist > 0
    ratio = np.abs(V(x[ok]) - V(y[ok])) / dist[ok]
    margins = (1.0 + LIPSCHITZ_SLACK) - ratio
    bad = np.flatnonzero(margins < 0)
    ex = [{"x": x[ok][i].tolist(), "y": y[ok][i].tolist(), "ratio": float(ratio[i]), "margin": float(margins[i])}
          for i in bad]
    results.append(PropertyResult("lipschitz", len(bad) == 0, float(margins.min()), int(ok.sum()),
                                  _keep_worst(ex, max_counterexamples)))

    # property 2: decay at rate eps along the fluid while positive
    starts = np.vstack([uniform(samples - samples // 2), near_cloud(samples // 2, 0.05 * box)])
    v0 = V(starts)
    worst, checked, ex = np.inf, 0, []
    need = -epsilon + tol
    for x0, v in zip(starts, v0):
        if v <= ZERO_TOL:
            continue
        w = min(window, v / epsilon) if epsilon > 0 else window
        traj = integrate_fluid(net, lam, x0, w)
        rate = (V(traj.at(w)) - v) / w
        margin = need - rate
        checked += 1
        worst = min(worst, margin)
        if margin < 0:
            note = {"x": x0.tolist(), "value": float(v), "rate": float(rate), "window": w, "margin": float(margin)}
            if cloud is not None:
                note["distance_to_cloud"] = float(cloud.distance(x0))
            ex.append(note)
    results.append(PropertyResult("drift", not ex, float(worst) if checked else np.inf, checked,
                                  _keep_worst(ex, max_counterexamples)))

    # property 3: zero at the origin, positive where x_m > 0
    origin = float(V(np.zeros(ell)))
    pts = [uniform(samples - samples // 2)]
    if cloud is not None:
        on = cloud.points[cloud.points[:, m] > 0]
        if len(on):
            pts.append(on[rng.integers(0, len(on), samples // 2)])
    pts = np.vstack(pts)
    pts[:, m] = np.where(pts[:, m] > 0, pts[:, m], rng.uniform(1e-6, box, len(pts)))
    vals = V(pts)
    ex = [{"x": [0.0] * ell, "value": origin, "margin": -origin}] if origin > ZERO_TOL else []
    bad = np.flatnonzero(vals <= 0)
    ex += [{"x": pts[i].tolist(), "value": float(vals[i]), "margin": float(vals[i])} for i in bad]
    worst = min(0.0 - origin, float(vals.min())) + 0.0
    results.append(PropertyResult("positivity", not ex, worst, len(pts) + 1, _keep_worst(ex, max_counterexamples)))

    # property 4: nonincreasing along heavy coordinates
    heavy = list(candidate.heavy_set)
    if heavy:
        x = np.vstack([uniform(samples - samples // 2), near_cloud(samples // 2, 0.05 * box)])
        js = rng.choice(heavy, len(x))
        alpha = np.exp(rng.uniform(np.log(1e-3 * box), np.log(box), len(x)))
        xp = x.copy()
        xp[np.arange(len(x)), js] += alpha
        margins = V(x) + MONO_SLACK - V(xp)
        bad = np.flatnonzero(margins < 0)
        ex = [{"x": x[i].tolist(), "queue": int(js[i]) + 1, "alpha": float(alpha[i]), "margin": float(margins[i])}
              for i in bad]
        results.append(PropertyResult("heavy_monotone", len(bad) == 0, float(margins.min()), len(x),
                                      _keep_worst(ex, max_counterexamples)))
    else:
        results.append(PropertyResult("heavy_monotone", True, np.inf, 0, []))

    return VerificationReport(results, samples, seed, float(epsilon), tol, m, tuple(heavy), box)


def heavy_lattice(heavy_set, ell: int, max_total: int) -> list:
    """Count vectors with jumps only at heavy queues and at most ``max_total`` jumps in all."""
    import itertools

    heavy = list(heavy_set)
    out = []
    for combo in itertools.product(range(max_total + 1), repeat=len(heavy)):
        if sum(combo) <= max_total:
            n = np.zeros(ell, dtype=int)
            n[heavy] = combo
            out.append(n)
    return out


def lattice_clouds(net: Network, lambda_star, epsilon: float, heavy_set, samples: int,
                   seed: int = 0, max_total: int = 2) -> list:
    """Sampled reachable sets W(n) for n on the truncated heavy-jump lattice (origin included)."""
    from .jf import sample_reachable

    ell = net.ell
    clouds = [PointCloud(np.zeros((1, ell)), {"n": [0] * ell})]
    ss = np.random.SeedSequence(seed)
    for n, child in zip(heavy_lattice(heavy_set, ell, max_total), ss.spawn(10 ** 4)):
        if n.sum() == 0:
            continue
        # every lattice point fits the budget of some admissible exponent vector
        gamma = [1.0 / max(int(n.sum()), 1) if j in heavy_set else np.inf for j in range(ell)]
        clouds.append(sample_reachable(net, lambda_star, gamma, epsilon, n, samples,
                                       seed=int(child.generate_state(1)[0])))
    return clouds
