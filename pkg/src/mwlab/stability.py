"""Discrete-time Max-Weight simulation and stability diagnostics."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .network import Network

PICK_RTOL = 1e-9
CHUNK = 8192


def step(q, mu, a) -> np.ndarray:
    """One slot of queue evolution: ``[q - mu]^+ + a``."""
    q, mu, a = (np.asarray(v, dtype=float) for v in (q, mu, a))
    if not (q.shape == mu.shape == a.shape):
        raise ValueError("dimension mismatch")
    if np.any(q < 0) or np.any(a < 0):
        raise ValueError("queues and arrivals must be nonnegative")
    return np.maximum(q - mu, 0.0) + a


def pick_batch(service: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Lexicographically smallest MW schedule for each row of Q (shape (R, ell))."""
    scores = Q @ service.T
    top = scores.max(axis=1, keepdims=True)
    mask = scores >= top - PICK_RTOL * np.maximum(1.0, np.abs(top))
    return service[mask.argmax(axis=1)]


def simulate_batch(net: Network, Q0: np.ndarray, arrivals: np.ndarray, observe=None) -> np.ndarray:
    """Advance R replicas through arrivals of shape (T, R, ell).

    ``observe(t, Q)`` is called after each slot with the post-slot state.
    """
    s = net.service_set
    Q = np.array(Q0, dtype=float)
    for t in range(arrivals.shape[0]):
        mu = pick_batch(s, Q)
        Q = np.maximum(Q - mu, 0.0) + arrivals[t]
        if observe is not None:
            observe(t, Q)
    return Q


def geometric_checkpoints(T: int, ratio: int = 2) -> list:
    """1, ratio, ratio^2, ... up to T, always ending with T."""
    out, h = [], 1
    while h < T:
        out.append(h)
        h *= ratio
    out.append(int(T))
    return out


@dataclass
class SimTrace:
    """One simulated path. ``Q[i]`` is the state after ``slots[i]`` slots."""

    T: int
    seed: int
    replica: int
    slots: np.ndarray
    Q: np.ndarray
    arrivals: np.ndarray | None
    schedules: np.ndarray | None = None

    @property
    def ell(self) -> int:
        return self.Q.shape[1]

    def state(self, t: int) -> np.ndarray:
        i = int(np.searchsorted(self.slots, t))
        if i >= len(self.slots) or self.slots[i] != t:
            raise KeyError(f"slot {t} was not recorded")
        return self.Q[i]

    def to_csv(self, stride: int = 1, handle=None) -> str:
        """Columns slot, Q_1..Q_ell, A_1..A_ell; A is the arrival during that slot."""
        buf = io.StringIO() if handle is None else handle
        w = csv.writer(buf, lineterminator="\n")
        ell = self.ell
        w.writerow(["slot"] + [f"Q_{j + 1}" for j in range(ell)] + [f"A_{j + 1}" for j in range(ell)])
        for t, q in zip(self.slots, self.Q):
            if t % stride and t != self.T:
                continue
            a = self.arrivals[t] if self.arrivals is not None and t < self.T else np.full(ell, np.nan)
            w.writerow([int(t)] + [repr(float(v)) for v in q] + [repr(float(v)) for v in a])
        return buf.getvalue() if handle is None else ""


def simulate(net: Network, plan, T: int, seed: int, replica: int = 0, stride: int = 1,
             keep_schedules: bool = False) -> SimTrace:
    """Max-Weight simulation of one replica from the empty state.

    Records Q every ``stride`` slots plus the geometric checkpoints and T.
    """
    T = int(T)
    if plan.T < T:
        raise ValueError(f"arrival plan covers {plan.T} slots, need {T}")
    if plan.ell != net.ell:
        raise ValueError("plan and network dimensions differ")
    keep = set(range(0, T + 1, max(1, int(stride)))) | set(geometric_checkpoints(T)) | {0, T}
    arrivals = plan.streams(seed, [replica]).next(T)
    slots, states, scheds = [0], [np.zeros(net.ell)], []
    s = net.service_set
    Q = np.zeros((1, net.ell))
    for t in range(T):
        mu = pick_batch(s, Q)
        if keep_schedules:
            scheds.append(mu[0])
        Q = np.maximum(Q - mu, 0.0) + arrivals[t]
        if t + 1 in keep:
            slots.append(t + 1)
            states.append(Q[0].copy())
    return SimTrace(T, int(seed), int(replica), np.array(slots), np.array(states), arrivals[:, 0, :],
                    np.array(scheds) if keep_schedules else None)


GROWING = "GrowingTrend"
BOUNDED = "BoundedTrend"
INCONCLUSIVE = "Inconclusive"


@dataclass
class TrendThresholds:
    """Verdict rules on the relative growth per doubling of the horizon.

    GrowingTrend: bootstrap lower ``level`` bound of the fitted relative slope
    over the upper half of the checkpoints exceeds ``grow``.
    BoundedTrend: otherwise, if the bootstrap upper bound of the relative
    change between the last two checkpoints is below ``plateau``.
    """

    grow: float = 0.05
    plateau: float = 0.1
    level: float = 0.9
    n_boot: int = 2000
    trim: float = 0.1


def _trimmed(values: np.ndarray, trim: float) -> np.ndarray:
    from scipy.stats import trim_mean

    return trim_mean(values, trim, axis=0)


def _rel_slope(est: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """OLS slope of est against idx divided by the mean level; est has shape (..., H)."""
    x = idx - idx.mean()
    slope = (est * x).sum(axis=-1) / (x * x).sum()
    level = est.mean(axis=-1)
    return np.where(level > 0, slope / np.maximum(level, 1e-300), 0.0)


def trend_verdict(values: np.ndarray, horizons, thresholds: TrendThresholds, boot_seed: int) -> dict:
    """Growth verdict from per-replication statistics ``values`` of shape (R, H)."""
    values = np.asarray(values, dtype=float)
    idx = np.log2(np.asarray(horizons, dtype=float))
    H = len(idx)
    upper = slice(max(0, H - max(3, (H + 1) // 2)), H)
    est = _trimmed(values, thresholds.trim)
    rng = np.random.default_rng(boot_seed)
    R = values.shape[0]
    boots = np.empty((thresholds.n_boot, H))
    for b in range(thresholds.n_boot):
        boots[b] = _trimmed(values[rng.integers(0, R, R)], thresholds.trim)
    slopes = _rel_slope(boots[:, upper], idx[upper])
    prev = np.maximum(boots[:, -2], 1e-300)
    changes = np.where(boots[:, -2] > 0, (boots[:, -1] - boots[:, -2]) / prev, 0.0)
    lo_q, hi_q = 1.0 - thresholds.level, thresholds.level
    out = {
        "slope": float(_rel_slope(est[upper], idx[upper])),
        "slope_lower": float(np.quantile(slopes, lo_q)),
        "slope_upper": float(np.quantile(slopes, hi_q)),
        "last_change": float((est[-1] - est[-2]) / est[-2]) if est[-2] > 0 else 0.0,
        "last_change_upper": float(np.quantile(changes, hi_q)),
    }
    if out["slope_lower"] > thresholds.grow:
        verdict = GROWING
    elif out["last_change_upper"] < thresholds.plateau:
        verdict = BOUNDED
    else:
        verdict = INCONCLUSIVE
    out["verdict"] = verdict
    return out


@dataclass
class StabilityReport:
    horizons: list
    queue: int
    R: int
    seed: int
    boot_seed: int
    thresholds: TrendThresholds
    point_values: np.ndarray  # (R, H) Q_m at each horizon
    avg_values: np.ndarray  # (R, H) time average of Q_m over [0, horizon)
    trend: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return self.trend["verdict"]

    def summary(self) -> dict:
        th = self.thresholds
        from scipy.stats import trim_mean

        def stats(v):
            return {"trimmed_mean": [float(x) for x in trim_mean(v, th.trim, axis=0)],
                    "median": [float(x) for x in np.median(v, axis=0)],
                    "raw_mean": [float(x) for x in v.mean(axis=0)]}

        return {"horizons": list(map(int, self.horizons)), "queue": self.queue + 1, "replications": self.R,
                "seed": self.seed, "boot_seed": self.boot_seed,
                "thresholds": {k: getattr(th, k) for k in ("grow", "plateau", "level", "n_boot", "trim")},
                "time_average": stats(self.avg_values), "point": stats(self.point_values),
                "trend": self.trend}

    def to_json(self, include_values: bool = True) -> str:
        d = self.summary()
        if include_values:
            d["avg_values"] = self.avg_values.tolist()
            d["point_values"] = self.point_values.tolist()
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "StabilityReport":
        d = json.loads(text)
        th = TrendThresholds(**d["thresholds"])
        return cls(d["horizons"], d["queue"] - 1, d["replications"], d["seed"], d["boot_seed"], th,
                   np.array(d["point_values"]), np.array(d["avg_values"]), d["trend"])

    def recompute(self) -> dict:
        return trend_verdict(self.avg_values, self.horizons, self.thresholds, self.boot_seed)


def _run_group(net: Network, plan, seed: int, replicas: list, horizons: list, queue: int):
    streams = plan.streams(seed, replicas)
    Q = np.zeros((len(replicas), net.ell))
    run_sum = np.zeros(len(replicas))
    point = np.empty((len(replicas), len(horizons)))
    avg = np.empty_like(point)
    hset = {h: i for i, h in enumerate(horizons)}
    s = net.service_set
    t = 0
    T = horizons[-1]
    while t < T:
        arr = streams.next(min(CHUNK, T - t))
        for a in arr:
            # time average covers the states at slots 0 .. h-1
            run_sum += Q[:, queue]
            mu = pick_batch(s, Q)
            Q = np.maximum(Q - mu, 0.0) + a
            t += 1
            if t in hset:
                point[:, hset[t]] = Q[:, queue]
                avg[:, hset[t]] = run_sum / t
    return point, avg


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("MWLAB_THREADS", "1") or 1)
    return max(1, int(threads))


def monte_carlo(net: Network, plan, horizons=None, R: int = 64, seed: int = 0, queue: int = 0,
                thresholds: TrendThresholds | None = None, threads: int | None = None) -> StabilityReport:
    """R independent replications; trend test on the time-averaged queue ``queue``.

    ``plan`` is an ArrivalPlan or a callable ``T -> ArrivalPlan``. Horizons
    default to the powers of two up to the plan length.
    """
    if R < 8:
        raise ValueError("need at least 8 replications")
    th = thresholds or TrendThresholds()
    if horizons is None:
        if callable(plan):
            raise ValueError("horizons required when plan is a factory")
        horizons = [h for h in geometric_checkpoints(plan.T) if h >= 2]
    horizons = sorted(int(h) for h in horizons)
    if len(horizons) < 3:
        raise ValueError("need at least three horizons")
    if callable(plan):
        plan = plan(horizons[-1])
    if plan.T < horizons[-1]:
        raise ValueError("plan shorter than the largest horizon")
    workers = min(resolve_threads(threads), R)
    groups = [list(range(R))[i::workers] for i in range(workers)]
    if workers == 1:
        parts = [_run_group(net, plan, seed, groups[0], horizons, queue)]
    else:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_run_group, [net] * workers, [plan] * workers, [seed] * workers, groups,
                                [horizons] * workers, [queue] * workers))
    point = np.empty((R, len(horizons)))
    avg = np.empty_like(point)
    for g, (p, a) in zip(groups, parts):
        point[g] = p
        avg[g] = a
    boot_seed = int(np.random.SeedSequence([seed, 0xB007]).generate_state(1)[0])
    rep = StabilityReport(horizons, queue, R, seed, boot_seed, th, point, avg)
    rep.trend = rep.recompute()
    return rep


@dataclass
class JumpLog:
    entries: list  # (slot, queue, value, threshold)
    counts: np.ndarray
    budget_ok: bool | None


def jump_thresholds(M: float, T: int, eta: float) -> np.ndarray:
    """theta_t = (M + T - t) / (eta log(M + T - t)) for t = 0 .. T-1."""
    if not (M > 0 and eta > 0):
        raise ValueError("M and eta must be positive")
    r = M + T - np.arange(T, dtype=float)
    return r / (eta * np.log(r))


def detect_jumps(trace_or_arrivals, M: float, T: int, eta: float, gamma=None) -> JumpLog:
    """Flag slots whose arrival strictly exceeds theta_t."""
    from .jf import budget_ok

    arr = trace_or_arrivals.arrivals if isinstance(trace_or_arrivals, SimTrace) else np.asarray(trace_or_arrivals)
    if arr is None or arr.shape[0] < T:
        raise ValueError("trace does not cover T slots")
    theta = jump_thresholds(M, T, eta)
    hits = arr[:T] > theta[:, None]
    entries = [(int(t), int(j), float(arr[t, j]), float(theta[t])) for t, j in zip(*np.nonzero(hits))]
    counts = hits.sum(axis=0)
    flag = None if gamma is None else budget_ok(gamma, counts)
    return JumpLog(entries, counts, flag)


@dataclass
class SensitivityReport:
    C_hat: float
    slots: np.ndarray
    ratios: np.ndarray


def sensitivity_check(trace: SimTrace, net: Network, lam) -> SensitivityReport:
    """Ratio of |Q(t) - q(t)| to 1 + |lam| + running max of the centred cumulative arrivals."""
    from .fluid import integrate_fluid

    if trace.arrivals is None:
        raise ValueError("sensitivity check needs the full arrival log")
    lam = np.asarray(lam, dtype=float)
    fluid = integrate_fluid(net, lam, trace.Q[0], float(max(trace.T, 1)))
    dev = np.linalg.norm(np.cumsum(trace.arrivals - lam, axis=0), axis=1)
    # prefix[t] = max_{k < t} |sum_{tau <= k} (A - lam)|, prefix[0] = 0
    prefix = np.concatenate([[0.0], np.maximum.accumulate(dev)])
    base = 1.0 + float(np.linalg.norm(lam))
    ratios = np.array([np.linalg.norm(q - fluid.at(float(t))) / (base + prefix[t])
                       for t, q in zip(trace.slots, trace.Q)])
    return SensitivityReport(float(ratios.max()), trace.slots.copy(), ratios)


PASS = "Pass"
FAIL = "Fail"


@dataclass
class ForcedRunResult:
    status: str
    T: int
    value: float  # Q_m(T)
    bound: float  # cT/2 - tol T
    d: float
    trace: SimTrace | None

    @property
    def passed(self) -> bool:
        return self.status == PASS


def forced_jump_run(net: Network, witness, T: int, tol: float = 0.02, min_T: int = 100) -> ForcedRunResult:
    """Deterministic episode: mean arrivals plus each scaled jump spread over floor(dT) slots.

    Passes when ``Q_m(T) >= cT/2 - tol T``. Returns ``Inconclusive`` when T is
    below ``min_T`` or too short to fit a single bulk slot.
    """
    from .arrivals import build_episode_schedule

    T = int(T)
    ep = build_episode_schedule(witness, T, 0)
    width = int(math.floor(ep.d * T))
    c, m = witness.value, witness.m
    bound = c * T / 2.0 - tol * T
    if T < min_T or (ep.theta_times and width < 1):
        return ForcedRunResult(INCONCLUSIVE, T, math.nan, bound, ep.d, None)
    arrivals = ep.plan.means()
    for th, a, j in zip(ep.theta_times, ep.jump_sizes, ep.jump_queues):
        start = int(math.floor(th * T))
        arrivals[start:start + width, j] += T * a / width
    slots = np.arange(T + 1)
    states = np.zeros((T + 1, net.ell))

    def record(t, Q):
        states[t + 1] = Q[0]

    simulate_batch(net, np.zeros((1, net.ell)), arrivals[:, None, :], record)
    trace = SimTrace(T, -1, 0, slots, states, arrivals)
    value = float(states[T, m])
    return ForcedRunResult(PASS if value >= bound else FAIL, T, value, bound, ep.d, trace)


@dataclass
class WitnessRunReport:
    T: int
    t0: int
    R: int
    seed: int
    threshold: float  # cT/2
    exceed: int
    jump_events: np.ndarray  # (R, n) bool
    fluc_events: np.ndarray  # (R, n + 1) bool
    fluc_scale: np.ndarray  # (R, n + 1) max centred deviation / (gamma c T / (32 r))

    @property
    def probability(self) -> float:
        return self.exceed / self.R

    def summary(self) -> dict:
        return {"T": self.T, "t0": self.t0, "replications": self.R, "seed": self.seed,
                "threshold": self.threshold, "exceedances": self.exceed, "probability": self.probability,
                "jump_event_rate": self.jump_events.mean(axis=0).tolist() if self.jump_events.size else [],
                "fluc_event_rate": self.fluc_events.mean(axis=0).tolist(),
                "all_events_rate": float(np.mean(self.jump_events.all(axis=1) & self.fluc_events.all(axis=1)))}


def run_witness(net: Network, plan, episode, R: int = 64, seed: int = 0, C: float = 1.0) -> WitnessRunReport:
    """Estimate P(Q_m(t0 + T) >= cT/2) for one episode of ``plan``.

    Also records, per replication, whether the arrivals of each jump window
    emulate the scaled jump and whether the centred fluctuations of each
    inter-jump stretch stay below ``gamma c T / (32 C r)``.
    """
    t0, T = episode.t0, episode.T
    end = t0 + T
    if plan.T < end:
        raise ValueError("plan does not cover the episode")
    w = episode.witness
    m, c = w.m, w.value
    streams = plan.streams(seed, range(R))
    Q = np.zeros((R, net.ell))
    while streams.pos < t0:
        Q = simulate_batch(net, Q, streams.next(min(CHUNK, t0 - streams.pos)))
    arr = streams.next(T)
    Q = simulate_batch(net, Q, arr)
    threshold = c * T / 2.0
    exceed = int(np.sum(Q[:, m] >= threshold))

    means = plan.means(t0, end)
    d, mu_bar = episode.d, episode.mu_bar
    bounds = [0.0, *episode.theta_times, 1.0]
    pieces = len(w.profile.pieces)
    scale = min(episode.gamma_min, 1.0) * c * T / (32.0 * C * pieces)
    jumps = np.zeros((R, len(episode.theta_times)), dtype=bool)
    flucs = np.zeros((R, len(bounds) - 1), dtype=bool)
    fscale = np.zeros((R, len(bounds) - 1))
    for k, (s, e, j, a) in enumerate(episode.jump_windows()):
        B = arr[s:e].sum(axis=0)
        target = np.zeros(net.ell)
        target[j] = T * a
        jumps[:, k] = np.linalg.norm(B - target, axis=1) <= d * T * (1.0 + 2.0 * mu_bar)
    for k in range(len(bounds) - 1):
        lo = int(math.floor(bounds[k] * T + (d * T if k > 0 else 0.0)))
        hi = int(math.floor(bounds[k + 1] * T))
        if hi <= lo:
            flucs[:, k] = True
            continue
        dev = np.cumsum(arr[lo:hi] - means[lo:hi, None, :], axis=0)
        peak = np.linalg.norm(dev, axis=2).max(axis=0)
        fscale[:, k] = peak / scale if scale > 0 else np.inf
        flucs[:, k] = peak <= scale
    return WitnessRunReport(T, t0, R, seed, threshold, exceed, jumps, flucs, fscale)
