"""Jumping-fluid trajectories, the jump budget and a search for RJF violations.

An eps-JF(n) trajectory starts empty, receives ``n_j`` upward jumps at queue j,
and otherwise follows the Max-Weight fluid with piecewise-constant arrival
rates inside the eps-ball around ``lambda_star``. The checker looks for such a
trajectory (with n inside the budget ``gamma . n <= 1``) along which the
target queue is positive at time one.
"""
from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .fluid import PiecewiseLinearTrajectory, JumpMark, _Builder, _run, MAX_EVENTS, integrate_fluid
from .network import Network, network_from_dict

VIOLATION_THRESHOLD = 1e-6
BALL_TOL = 1e-12
CLOUD_CAP = 100_000


def _vec(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class RateProfile:
    """Right-continuous piecewise-constant arrival rates.

    ``pieces`` is a sequence of ``(start, rate)`` with increasing starts, the
    first at time 0.
    """

    pieces: tuple
    epsilon: float
    lambda_star: tuple

    def __post_init__(self):
        lam = _vec(self.lambda_star)
        pieces = tuple((float(s), tuple(float(v) for v in r)) for s, r in self.pieces)
        object.__setattr__(self, "pieces", pieces)
        object.__setattr__(self, "lambda_star", tuple(lam.tolist()))
        if not pieces or pieces[0][0] != 0.0:
            raise ValueError("first rate piece must start at time 0")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        starts = [s for s, _ in pieces]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("rate piece starts must increase")
        for _, r in pieces:
            r = _vec(r)
            if r.shape != lam.shape:
                raise ValueError("rate vectors must match lambda_star")
            if np.any(r < 0):
                raise ValueError("rates must be nonnegative")
            if np.linalg.norm(r - lam) > self.epsilon + BALL_TOL:
                raise ValueError(f"rate {r.tolist()} leaves the epsilon-ball")

    @classmethod
    def constant(cls, lambda_star, epsilon: float = 0.0, rate=None) -> "RateProfile":
        rate = lambda_star if rate is None else rate
        return cls(((0.0, tuple(_vec(rate).tolist())),), epsilon, tuple(_vec(lambda_star).tolist()))

    def rate_at(self, t: float) -> np.ndarray:
        k = 0
        for i, (s, _) in enumerate(self.pieces):
            if s <= t:
                k = i
        return _vec(self.pieces[k][1])

    def starts(self):
        return [s for s, _ in self.pieces]

    def scaled(self, factor: float) -> "RateProfile":
        """Profile of the time-rescaled trajectory ``q(t * factor) / factor``."""
        return RateProfile(tuple((s / factor, r) for s, r in self.pieces), self.epsilon, self.lambda_star)


@dataclass(frozen=True)
class JumpSchedule:
    """Upward jumps ``(time, queue, size)`` sorted by time (queues are 0-based)."""

    jumps: tuple = ()

    def __post_init__(self):
        jumps = tuple((float(t), int(j), float(a)) for t, j, a in self.jumps)
        object.__setattr__(self, "jumps", jumps)
        for t, j, a in jumps:
            if t < 0:
                raise ValueError("jump times must be nonnegative")
            if not a > 0:
                raise ValueError("jump sizes must be positive")
            if j < 0:
                raise ValueError("queue index must be nonnegative")
        if any(b[0] < a[0] for a, b in zip(jumps, jumps[1:])):
            raise ValueError("jumps must be sorted by time")

    def counts(self, ell: int) -> np.ndarray:
        n = np.zeros(ell, dtype=int)
        for _, j, _ in self.jumps:
            n[j] += 1
        return n

    def scaled(self, factor: float) -> "JumpSchedule":
        return JumpSchedule(tuple((t / factor, j, a / factor) for t, j, a in self.jumps))


def _check_gamma(gamma) -> np.ndarray:
    g = _vec(gamma)
    if np.any(np.isnan(g)) or np.any(g <= 0):
        raise ValueError("tail exponents must lie in (0, inf]")
    return g


def budget_value(gamma, n) -> float:
    """gamma . n with the convention inf * 0 = 0."""
    g = _check_gamma(gamma)
    n = np.asarray(n)
    if np.any(n < 0):
        raise ValueError("jump counts must be nonnegative")
    return float(sum(gj * nj for gj, nj in zip(g, n) if nj != 0))


def budget_ok(gamma, n) -> bool:
    return budget_value(gamma, n) <= 1.0 + 1e-12


@dataclass(frozen=True)
class JumpBudget:
    gamma: tuple
    n: tuple

    def __post_init__(self):
        _check_gamma(self.gamma)

    @property
    def value(self) -> float:
        return budget_value(self.gamma, self.n)

    @property
    def ok(self) -> bool:
        return budget_ok(self.gamma, self.n)


def enumerate_budget(gamma) -> list:
    """All count vectors n with gamma . n <= 1, ordered by total jumps then lexicographically."""
    g = _check_gamma(gamma)
    box = [range(int(math.floor(1.0 / gj + 1e-12)) + 1) if np.isfinite(gj) else range(1) for gj in g]
    out = [np.array(n) for n in itertools.product(*box) if budget_ok(g, n)]
    out.sort(key=lambda n: (int(n.sum()), tuple(n)))
    return out


def integrate_jf(net: Network, profile: RateProfile, jumps: JumpSchedule, t_end: float,
                 max_events: int = MAX_EVENTS, drift_cache: dict | None = None) -> PiecewiseLinearTrajectory:
    """Jumping-fluid trajectory from the empty state on ``[0, t_end]``."""
    if len(profile.lambda_star) != net.ell:
        raise ValueError("profile dimension does not match the network")
    if jumps.jumps and jumps.jumps[-1][0] > t_end:
        raise ValueError("t_end precedes the last jump")
    if any(j >= net.ell for _, j, _ in jumps.jumps):
        raise ValueError("jump queue index out of range")
    caches = {} if drift_cache is None else drift_cache
    b = _Builder(net.ell)
    x = np.zeros(net.ell)
    b.open(0.0, x, x)
    pending = list(jumps.jumps)
    marks = sorted(set(profile.starts()) | {t for t, _, _ in pending} | {0.0})
    marks = [m for m in marks if m < t_end] + [float(t_end)]
    for t, t_next in zip(marks, marks[1:]):
        while pending and pending[0][0] == t:
            _, j, a = pending.pop(0)
            left = x.copy()
            x = x.copy()
            x[j] += a
            if b.pending and not b.jumps[-1] and b.times[-1] == t:
                for lst in (b.times, b.left, b.right, b.drifts, b.jumps):
                    lst.pop()
            b.open(t, left, x, jump=True)
            b.marks.append(JumpMark(t, j, a))
        lam = profile.rate_at(t)
        cache = caches.setdefault(lam.tobytes(), {})
        x = _run(net, lam, x, t, t_next, b, max_events, cache)
    if pending:
        # jumps exactly at t_end
        for t, j, a in pending:
            left = x.copy()
            x = x.copy()
            x[j] += a
            b.open(t, left, x, jump=True)
            b.set_drift(t, x, b.drifts[-2] if len(b.drifts) > 1 else np.zeros(net.ell))
            b.marks.append(JumpMark(t, j, a))
    return b.build(t_end)


class RjfStatus(enum.Enum):
    VIOLATED = "Violated"
    NO_VIOLATION_FOUND = "NoViolationFound"


@dataclass
class Witness:
    """A normalised eps-JF trajectory with the target queue positive at time one."""

    network: Network
    lambda_star: tuple
    epsilon: float
    gamma: tuple
    m: int
    profile: RateProfile
    jumps: JumpSchedule
    value: float
    time: float = 1.0
    seed: int | None = None

    @property
    def c(self) -> float:
        return self.value

    def counts(self) -> np.ndarray:
        return self.jumps.counts(self.network.ell)

    def replay(self) -> float:
        traj = integrate_jf(self.network, self.profile, self.jumps, self.time)
        return float(traj.at(self.time)[self.m])

    def to_dict(self) -> dict:
        """JSON form; queue indices are 1-based here."""
        return {
            "network": self.network.to_json(),
            "lambda_star": list(self.lambda_star),
            "epsilon": self.epsilon,
            "gamma": [_enc_gamma(g) for g in self.gamma],
            "queue": self.m + 1,
            "profile": [[s, list(r)] for s, r in self.profile.pieces],
            "jumps": [[t, j + 1, a] for t, j, a in self.jumps.jumps],
            "value": self.value,
            "time": self.time,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "Witness":
        net = network_from_dict(data["network"])
        lam = tuple(data["lambda_star"])
        eps = float(data["epsilon"])
        return cls(
            network=net, lambda_star=lam, epsilon=eps,
            gamma=tuple(_dec_gamma(g) for g in data["gamma"]), m=int(data["queue"]) - 1,
            profile=RateProfile(tuple((s, tuple(r)) for s, r in data["profile"]), eps, lam),
            jumps=JumpSchedule(tuple((t, int(j) - 1, a) for t, j, a in data["jumps"])),
            value=float(data["value"]), time=float(data.get("time", 1.0)), seed=data.get("seed"))

    @classmethod
    def load(cls, path) -> "Witness":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _enc_gamma(g):
    return "inf" if math.isinf(g) else g


def _dec_gamma(g):
    return math.inf if isinstance(g, str) and g.lower() in ("inf", "infinity") else float(g)


@dataclass
class RjfVerdict:
    status: RjfStatus
    witness: Witness | None
    search_stats: dict

    @property
    def violated(self) -> bool:
        return self.status is RjfStatus.VIOLATED


@dataclass
class SearchConfig:
    """Knobs for the violation search."""

    time_grid: int = 17
    size_min: float = 0.05
    size_max: float = 20.0
    size_points: int = 9
    budget_evals: int = 20_000
    coarse_cap: int = 2_500
    ascent_starts: int = 3
    polish_rounds: int = 40
    seed: int = 0
    seed_witnesses: list = field(default_factory=list)

    def times(self) -> np.ndarray:
        return np.arange(1, self.time_grid + 1) / (self.time_grid + 1)

    def sizes(self) -> np.ndarray:
        return np.geomspace(self.size_min, self.size_max, self.size_points)


def rate_candidates(lambda_star, epsilon: float, m: int) -> list:
    """Centre, the 2*ell axis points of the eps-sphere, and the ascent direction for queue m."""
    lam = _vec(lambda_star)
    ell = len(lam)
    cands = [lam.copy()]
    if epsilon > 0:
        for j in range(ell):
            for sgn in (1.0, -1.0):
                r = lam.copy()
                r[j] += sgn * epsilon
                cands.append(r)
        u = -np.ones(ell) / max(ell - 1, 1)
        u[m] = 1.0
        cands.append(lam + epsilon * u / np.linalg.norm(u))
    out = []
    for r in cands:
        r = np.maximum(r, 0.0)
        if not any(np.array_equal(r, o) for o in out):
            out.append(r)
    return out


class _Search:
    def __init__(self, net, lambda_star, gamma, epsilon, m, cfg: SearchConfig):
        self.net = net
        self.lam = _vec(lambda_star)
        self.gamma = tuple(float(g) for g in gamma)
        self.eps = float(epsilon)
        self.m = m
        self.cfg = cfg
        self.rates = rate_candidates(self.lam, self.eps, m)
        self.evals = 0
        self.cache: dict = {}
        self.best = (-np.inf, -np.inf)
        self.best_params = None

    def exhausted(self) -> bool:
        return self.evals >= self.cfg.budget_evals

    def build(self, order, times, sizes, rate_idx):
        pieces = [(0.0, tuple(self.rates[rate_idx[0]]))]
        for t, ri in zip(times, rate_idx[1:]):
            pieces.append((float(t), tuple(self.rates[ri])))
        merged = []
        for s, r in pieces:
            if merged and merged[-1][1] == r:
                continue
            merged.append((s, r))
        profile = RateProfile(tuple(merged), self.eps, tuple(self.lam))
        jumps = JumpSchedule(tuple((float(t), int(j), float(a)) for t, j, a in zip(times, order, sizes)))
        return profile, jumps

    def score(self, order, times, sizes, rate_idx):
        """(q_m(1), max of q_m on [0, 1]) for one candidate."""
        self.evals += 1
        profile, jumps = self.build(order, times, sizes, rate_idx)
        traj = integrate_jf(self.net, profile, jumps, 1.0, drift_cache=self.cache)
        end = float(traj.at(1.0)[self.m])
        peak, _ = traj.coordinate_max(self.m, 1.0)
        val = (end, peak)
        if val > self.best:
            self.best = val
            self.best_params = (tuple(order), tuple(times), tuple(sizes), tuple(rate_idx))
        return val

    def coarse(self, order, rng):
        k = len(order)
        grid = self.cfg.times()
        time_sets = list(itertools.combinations(grid, k)) if k else [()]
        rate_sets = [0, len(self.rates) - 1] if len(self.rates) > 1 else [0]
        cands = [(ts, s, r) for ts in time_sets for s in (self.cfg.sizes() if k else [0.0]) for r in rate_sets]
        if len(cands) > self.cfg.coarse_cap:
            pick = rng.choice(len(cands), self.cfg.coarse_cap, replace=False)
            cands = [cands[i] for i in sorted(pick)]
        scored = []
        for ts, s, r in cands:
            if self.exhausted():
                break
            val = self.score(order, ts, [s] * k, [r] * (k + 1))
            scored.append((val, (list(ts), [s] * k, [r] * (k + 1))))
            if val[0] > VIOLATION_THRESHOLD:
                break
        scored.sort(key=lambda z: z[0], reverse=True)
        return scored

    def ascent(self, order, params, val):
        """Coordinate ascent over grid values of times, sizes and piece rates."""
        times, sizes, rates = (list(p) for p in params)
        k = len(order)
        grid = self.cfg.times()
        improved = True
        while improved and not self.exhausted():
            improved = False
            for i in range(k):
                lo = times[i - 1] if i > 0 else 0.0
                hi = times[i + 1] if i + 1 < k else 1.0
                for t in grid:
                    if not lo < t < hi or t == times[i] or self.exhausted():
                        continue
                    trial = times.copy()
                    trial[i] = t
                    v = self.score(order, trial, sizes, rates)
                    if v > val:
                        val, times, improved = v, trial, True
                for s in self.cfg.sizes():
                    if s == sizes[i] or self.exhausted():
                        continue
                    trial = sizes.copy()
                    trial[i] = s
                    v = self.score(order, times, trial, rates)
                    if v > val:
                        val, sizes, improved = v, trial, True
            for p in range(k + 1):
                for ri in range(len(self.rates)):
                    if ri == rates[p] or self.exhausted():
                        continue
                    trial = rates.copy()
                    trial[p] = ri
                    v = self.score(order, times, sizes, trial)
                    if v > val:
                        val, rates, improved = v, trial, True
        return val, (times, sizes, rates)

    def polish(self, order, params, val, rng):
        """Random local perturbation of continuous parameters."""
        times, sizes, rates = (list(p) for p in params)
        k = len(order)
        if k == 0:
            return val, (times, sizes, rates)
        step = 0.05
        # keep jumps well separated so the witness stays usable for episode plans
        gap = 0.5 / (self.cfg.time_grid + 1)
        for _ in range(self.cfg.polish_rounds):
            if self.exhausted():
                break
            tt = np.sort(np.clip(np.array(times) + step * rng.standard_normal(k), gap, 1 - gap))
            if k > 1 and np.any(np.diff(tt) < gap):
                continue
            ss = np.clip(np.array(sizes) * np.exp(step * rng.standard_normal(k)), self.cfg.size_min, self.cfg.size_max)
            v = self.score(order, tt.tolist(), ss.tolist(), rates)
            if v > val:
                val, times, sizes = v, tt.tolist(), ss.tolist()
            else:
                step *= 0.9
        return val, (times, sizes, rates)


def _distinct_orders(n) -> list:
    multiset = [j for j, c in enumerate(n) for _ in range(int(c))]
    return sorted(set(itertools.permutations(multiset)))


def check_rjf(net: Network, lambda_star, gamma, epsilon: float, m: int,
              search: SearchConfig | None = None) -> RjfVerdict:
    """Search for an eps-JF(gamma) trajectory with q_m(1) above the violation threshold.

    ``Violated`` comes with a re-integrated witness. ``NoViolationFound`` only
    means the search budget was spent without finding one.
    """
    cfg = search or SearchConfig()
    lam = _vec(lambda_star)
    g = _check_gamma(gamma)
    if len(g) != net.ell or lam.shape != (net.ell,):
        raise ValueError("gamma and lambda_star must have length ell")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if not 0 <= m < net.ell:
        raise ValueError("target queue out of range")
    rng = np.random.default_rng(cfg.seed)
    s = _Search(net, lam, g, epsilon, m, cfg)
    budgets = enumerate_budget(g)
    found = None

    for w in cfg.seed_witnesses:
        if not budget_ok(g, w.counts()):
            continue
        traj = integrate_jf(net, RateProfile(w.profile.pieces, epsilon, tuple(lam)), w.jumps, 1.0)
        if traj.at(1.0)[m] > VIOLATION_THRESHOLD:
            found = (w.profile, w.jumps)
            break

    for n in budgets if found is None else []:
        for order in _distinct_orders(n):
            if s.exhausted():
                break
            scored = s.coarse(order, rng)
            for val, params in scored[: cfg.ascent_starts]:
                val, params = s.ascent(order, params, val)
                if val[0] > VIOLATION_THRESHOLD:
                    val, params = s.polish(order, params, val, rng)
                    found = s.build(order, *params)
                    break
            if found:
                break
        if found:
            break

    stats = {"evaluations": s.evals, "best_value": s.best[0], "best_peak": s.best[1],
             "budget": cfg.budget_evals, "count_vectors": len(budgets),
             "exhausted": s.exhausted()}
    if found is None:
        return RjfVerdict(RjfStatus.NO_VIOLATION_FOUND, None, stats)
    profile, jumps = found
    value = float(integrate_jf(net, profile, jumps, 1.0).at(1.0)[m])
    if not value > VIOLATION_THRESHOLD:
        return RjfVerdict(RjfStatus.NO_VIOLATION_FOUND, None, stats)
    stats["best_value"] = max(stats["best_value"], value)
    wit = Witness(net, tuple(lam.tolist()), float(epsilon), tuple(g.tolist()), m, profile, jumps,
                  value, 1.0, cfg.seed)
    return RjfVerdict(RjfStatus.VIOLATED, wit, stats)


@dataclass
class PointCloud:
    points: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if len(self.points) > CLOUD_CAP:
            raise ValueError(f"cloud larger than {CLOUD_CAP} points")
        self._tree = cKDTree(self.points)

    def distance(self, x) -> np.ndarray | float:
        """Exact Euclidean distance to the nearest cloud point."""
        d, _ = self._tree.query(np.asarray(x, dtype=float))
        return d

    @staticmethod
    def union(clouds) -> "PointCloud":
        pts = np.vstack([c.points for c in clouds])
        return PointCloud(pts, {"parts": [c.meta for c in clouds]})


def _ball_rate(rng, lam, eps):
    if eps == 0 or rng.random() < 0.25:
        return lam.copy()
    u = rng.standard_normal(len(lam))
    u /= np.linalg.norm(u)
    return np.maximum(lam + eps * u, 0.0)


def sample_reachable(net: Network, lambda_star, gamma, epsilon: float, n, samples: int,
                     seed: int = 0, per_path: int = 4) -> PointCloud:
    """Sampled states of random eps-JF(n) trajectories.

    Jump times are uniform on (0, 1), sizes log-uniform on [0.05, 20], rate
    pieces at the ball centre or uniform on its surface. Each trajectory is
    observed at ``per_path`` uniform times on ``[0, 1 + total jump size]``.
    """
    lam = _vec(lambda_star)
    n = np.asarray(n, dtype=int)
    if not budget_ok(gamma, n):
        raise ValueError("count vector exceeds the jump budget")
    rng = np.random.default_rng(seed)
    multiset = [j for j, c in enumerate(n) for _ in range(int(c))]
    cache: dict = {}
    pts = []
    while len(pts) < samples:
        k = len(multiset)
        order = rng.permutation(multiset) if k else []
        times = np.sort(rng.uniform(0.0, 1.0, k))
        sizes = np.exp(rng.uniform(np.log(0.05), np.log(20.0), k))
        starts = [0.0] + [t for t in times if t > 0]
        pieces, seen = [], set()
        for st in starts:
            if st in seen:
                continue
            seen.add(st)
            pieces.append((float(st), tuple(_ball_rate(rng, lam, epsilon))))
        profile = RateProfile(tuple(pieces), epsilon, tuple(lam))
        jumps = JumpSchedule(tuple(zip(times.tolist(), [int(j) for j in order], sizes.tolist())))
        horizon = 1.0 + float(sizes.sum())
        traj = integrate_jf(net, profile, jumps, horizon, drift_cache=cache)
        for t in rng.uniform(0.0, horizon, per_path):
            pts.append(traj.at(float(t)))
    pts = np.array(pts[:samples])
    return PointCloud(pts, {"n": n.tolist(), "epsilon": epsilon, "seed": seed,
                            "samples": samples, "lambda_star": lam.tolist()})


@dataclass
class AttractionReport:
    trials: int
    exterior_starts: int
    pass_fraction: float
    worst_rate: float
    required_rate: float
    failures: list

    @property
    def passed(self) -> bool:
        return self.pass_fraction >= 0.95


def attraction_test(cloud: PointCloud, net: Network, lambda_star, epsilon: float,
                    trials: int = 500, seed: int = 0, tol: float | None = None,
                    box: float | None = None, window: float = 0.1,
                    inside_tol: float = 1e-9) -> AttractionReport:
    """Empirical check that the fluid approaches the cloud at rate at least eps - tol.

    Starts are uniform in the box ``[0, box]^ell`` (default: the cloud's extent).
    For each start at distance ``d0 > 0`` the fluid at ``lambda_star`` runs for
    ``min(window, d0 / eps)`` and the secant rate of decrease is compared with
    ``eps - tol``.
    """
    lam = _vec(lambda_star)
    tol = 0.1 * epsilon if tol is None else tol
    need = epsilon - tol
    rng = np.random.default_rng(seed)
    box = float(np.max(cloud.points)) if box is None else box
    box = box if box > 0 else 1.0
    rates, failures = [], []
    for _ in range(trials):
        x = rng.uniform(0.0, box, net.ell)
        d0 = float(cloud.distance(x))
        if d0 <= inside_tol:
            continue
        w = min(window, d0 / epsilon) if epsilon > 0 else window
        traj = integrate_fluid(net, lam, x, w)
        rate = (d0 - float(cloud.distance(traj.at(w)))) / w
        rates.append(rate)
        if rate < need:
            failures.append({"start": x.tolist(), "distance": d0, "rate": rate})
    ext = len(rates)
    frac = 1.0 if ext == 0 else 1.0 - len(failures) / ext
    worst = float(min(rates)) if rates else math.inf
    return AttractionReport(trials, ext, frac, worst, need, failures)
