"""Arrival laws, per-slot arrival plans, and episode construction.

Laws:

* deterministic: ``A(t) = mean(t)``;
* Pareto mixture: an atom at zero plus a Pareto tail with density
  ``w (1+g) x_min^(1+g) x^-(2+g)`` on ``[x_min, inf)``, so the tail exponent is g;
* episode density: an atom at zero plus a tail proportional to
  ``x^-(2+g) log(x+1)`` on ``[mu_bar, inf)``, with the atom chosen so the mean
  is the requested rate;
* Poisson, as a light-tailed reference.

Random draws come from one counter-based Philox stream per (seed, replica,
queue); slot t always consumes the same stream positions, so a seed replays
bit-exactly.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

from .jf import Witness, _dec_gamma, _enc_gamma
from .network import Network

DETERMINISTIC = "deterministic"
PARETO = "pareto"
EPISODE = "episode"
POISSON = "poisson"
KINDS = (DETERMINISTIC, PARETO, EPISODE, POISSON)


def _softplus(z: float) -> float:
    """log(1 + e^z) without overflow."""
    return z + math.log1p(math.exp(-z)) if z > 0 else math.log1p(math.exp(z))


@lru_cache(maxsize=256)
def sigma(alpha: float, mu_bar: float) -> float:
    """Integral of ``x^-(1+alpha) log(x+1)`` over ``[mu_bar, inf)``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not mu_bar > 0:
        raise ValueError("mu_bar must be positive")
    # substitute x = mu_bar * exp(y) so the slowly decaying tail becomes exponential
    lm = math.log(mu_bar)
    f = lambda y: math.exp(-alpha * (y + lm)) * _softplus(y + lm)
    val, _ = integrate.quad(f, 0.0, math.inf, epsabs=0.0, epsrel=1e-11, limit=500)
    return val


def mu_bar_for(net: Network, lambda_star, epsilon: float) -> float:
    """1 + max service norm + |lambda_star| + epsilon."""
    return 1.0 + net.max_norm + float(np.linalg.norm(lambda_star)) + float(epsilon)


def episode_atom(gamma: float, lambda_bar, mu_bar: float):
    """Mass of the zero atom, ``1 - lambda_bar sigma(1+gamma) / sigma(gamma)``."""
    ratio = sigma(1.0 + float(gamma), float(mu_bar)) / sigma(float(gamma), float(mu_bar))
    return 1.0 - np.asarray(lambda_bar, dtype=float) * ratio


class EpisodeTail:
    """Inverse survival function of the density proportional to ``x^-(2+g) log(x+1)`` on ``[mu_bar, inf)``.

    The survival function is tabulated on a log-spaced grid with Gauss-Legendre
    panels and inverted by linear interpolation of ``log x`` against ``log S``.
    """

    def __init__(self, gamma: float, mu_bar: float, points: int = 20000, nodes: int = 8):
        if not gamma > 0 or not mu_bar > 0:
            raise ValueError("gamma and mu_bar must be positive")
        self.gamma = gamma
        self.mu_bar = mu_bar
        a = 1.0 + gamma
        y0 = math.log(mu_bar)
        # survival decays like x^-(1+g); go far enough that it drops below 1e-40
        y1 = y0 + 95.0 / a
        ys = np.linspace(y0, y1, points)
        gx, gw = np.polynomial.legendre.leggauss(nodes)
        h = ys[1] - ys[0]
        mid = 0.5 * (ys[:-1] + ys[1:])
        yy = mid[:, None] + 0.5 * h * gx[None, :]
        # integrand in y = log x: x^-(1+g) log(1+x)
        vals = np.exp(-a * yy) * np.log1p(np.exp(yy))
        panels = 0.5 * h * vals @ gw
        tail_end = integrate.quad(lambda y: math.exp(-a * y) * _softplus(y), y1, math.inf,
                                  epsabs=0.0, epsrel=1e-12)[0]
        surv = np.concatenate([np.cumsum(panels[::-1])[::-1], [0.0]]) + tail_end
        self.total = float(surv[0])
        self.log_s = np.log(surv / self.total)
        self.ys = ys

    def survival(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        ly = np.log(np.maximum(x, self.mu_bar))
        out = np.exp(np.interp(ly, self.ys, self.log_s))
        return np.where(x < self.mu_bar, 1.0, out)

    def cdf(self, x) -> np.ndarray:
        return 1.0 - self.survival(x)

    def inverse_survival(self, u) -> np.ndarray:
        """x with S(x) = u for u in (0, 1]."""
        lu = np.log(np.asarray(u, dtype=float))
        # np.interp needs increasing abscissae
        y = np.interp(lu, self.log_s[::-1], self.ys[::-1])
        beyond = lu < self.log_s[-1]
        if np.any(beyond):
            y = np.where(beyond, self.ys[-1] + (self.log_s[-1] - lu) / (1.0 + self.gamma), y)
        return np.exp(y)


@lru_cache(maxsize=64)
def episode_tail(gamma: float, mu_bar: float) -> EpisodeTail:
    return EpisodeTail(gamma, mu_bar)


def _episode_from_uniforms(u_atom, u_tail, gamma, lambda_bar, mu_bar):
    atom = episode_atom(gamma, lambda_bar, mu_bar)
    if np.any(atom < -1e-12) or np.any(atom > 1 + 1e-12):
        raise ValueError("episode rate exceeds sigma(gamma)/sigma(1+gamma)")
    tail = episode_tail(float(gamma), float(mu_bar))
    # 1 - u lies in (0, 1]
    x = tail.inverse_survival(1.0 - u_tail)
    return np.where(u_atom < atom, 0.0, x)


def sample_episode_density(gamma: float, lambda_bar, mu_bar: float, rng: np.random.Generator, size=None):
    """Draws from the episode law with mean ``lambda_bar``."""
    shape = np.shape(lambda_bar) if size is None else tuple(np.atleast_1d(size))
    lam = np.broadcast_to(np.asarray(lambda_bar, dtype=float), shape)
    u = rng.random((2,) + shape)
    out = _episode_from_uniforms(u[0], u[1], gamma, lam, mu_bar)
    return float(out) if out.ndim == 0 else out


def pareto_weight(gamma: float, mean: float, x_min: float) -> float:
    """Mixture weight w making the mean equal to ``mean``."""
    if not (gamma > 0 and math.isfinite(gamma)):
        raise ValueError("Pareto mixture needs a finite positive gamma")
    if not (mean >= 0 and x_min > 0):
        raise ValueError("mean must be nonnegative and x_min positive")
    w = mean * gamma / ((1.0 + gamma) * x_min)
    if w > 1.0:
        raise ValueError(f"mean {mean} unreachable with x_min={x_min}: weight {w} > 1")
    return w


def _pareto_from_uniforms(u_atom, u_tail, gamma, mean, x_min):
    w = np.asarray(pareto_weight_vec(gamma, mean, x_min))
    x = x_min * (1.0 - u_tail) ** (-1.0 / (1.0 + gamma))
    return np.where(u_atom < w, x, 0.0)


def pareto_weight_vec(gamma, mean, x_min):
    mean = np.asarray(mean, dtype=float)
    if mean.ndim == 0:
        return pareto_weight(gamma, float(mean), x_min)
    w = mean * gamma / ((1.0 + gamma) * x_min)
    if np.any(w > 1.0) or np.any(mean < 0):
        raise ValueError("Pareto mixture mean out of range")
    return w


def sample_pareto_mixture(gamma: float, mean: float, x_min: float, rng: np.random.Generator, size=None):
    """Zero atom plus Pareto tail of exponent ``gamma`` with the given mean."""
    pareto_weight(gamma, mean, x_min)
    shape = () if size is None else tuple(np.atleast_1d(size))
    u = rng.random((2,) + shape)
    out = _pareto_from_uniforms(u[0], u[1], gamma, mean, x_min)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ArrivalSpec:
    """Law of one queue's arrivals; the mean comes from the plan's segments."""

    kind: str
    gamma: float = math.inf
    x_min: float = 1.0
    mu_bar: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown arrival kind {self.kind!r}")
        if self.kind in (PARETO, EPISODE) and not (0 < self.gamma < math.inf):
            raise ValueError("heavy-tailed kinds need 0 < gamma < inf")
        if self.kind == PARETO and not self.x_min > 0:
            raise ValueError("x_min must be positive")
        if self.kind == EPISODE and not self.mu_bar > 0:
            raise ValueError("mu_bar must be positive")

    def draw(self, gen: np.random.Generator, means: np.ndarray) -> np.ndarray:
        """One draw per entry of ``means``; slot t uses stream positions 2t and 2t+1."""
        if self.kind == DETERMINISTIC:
            return means.astype(float).copy()
        if self.kind == POISSON:
            return gen.poisson(means).astype(float)
        u = gen.random((len(means), 2))
        if self.kind == PARETO:
            return _pareto_from_uniforms(u[:, 0], u[:, 1], self.gamma, means, self.x_min)
        return _episode_from_uniforms(u[:, 0], u[:, 1], self.gamma, means, self.mu_bar)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "gamma": _enc_gamma(self.gamma), "x_min": self.x_min, "mu_bar": self.mu_bar}

    @classmethod
    def from_dict(cls, d) -> "ArrivalSpec":
        return cls(d["kind"], _dec_gamma(d.get("gamma", "inf")), float(d.get("x_min", 1.0)),
                   float(d.get("mu_bar", 0.0)))


def queue_stream(seed: int, replica: int, queue: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replica), int(queue)])))


@dataclass
class ArrivalPlan:
    """Per-queue arrival laws and piecewise-constant means over ``T`` slots.

    ``segments[j]`` lists ``(start, stop, mean)`` runs covering ``[0, T)``.
    """

    T: int
    specs: list
    segments: list

    def __post_init__(self):
        if len(self.specs) != len(self.segments):
            raise ValueError("one spec and one segment list per queue")
        for segs in self.segments:
            pos = 0
            for a, b, mean in segs:
                if a != pos or b <= a or mean < 0:
                    raise ValueError("segments must tile [0, T) with nonnegative means")
                pos = b
            if pos != self.T:
                raise ValueError("segments must cover all T slots")

    @property
    def ell(self) -> int:
        return len(self.specs)

    @classmethod
    def stationary(cls, T: int, specs, means) -> "ArrivalPlan":
        return cls(int(T), list(specs), [[(0, int(T), float(m))] for m in means])

    def means(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Mean arrivals of slots ``[start, stop)``, shape (stop - start, ell)."""
        stop = self.T if stop is None else stop
        out = np.zeros((stop - start, self.ell))
        for j, segs in enumerate(self.segments):
            for a, b, mean in segs:
                lo, hi = max(a, start), min(b, stop)
                if lo < hi:
                    out[lo - start:hi - start, j] = mean
        return out

    def streams(self, seed: int, replicas) -> "ReplicaStreams":
        return ReplicaStreams(self, seed, list(replicas))

    def draw(self, seed: int, replica: int = 0) -> np.ndarray:
        """Arrival matrix of shape (T, ell)."""
        means = self.means()
        out = np.empty_like(means)
        for j, spec in enumerate(self.specs):
            out[:, j] = spec.draw(queue_stream(seed, replica, j), means[:, j])
        return out

    def concat(self, other: "ArrivalPlan") -> "ArrivalPlan":
        if [s.to_dict() for s in self.specs] != [s.to_dict() for s in other.specs]:
            raise ValueError("plans must share arrival laws")
        segs = [a + [(s + self.T, e + self.T, m) for s, e, m in b] for a, b in zip(self.segments, other.segments)]
        return ArrivalPlan(self.T + other.T, self.specs, segs)

    def descriptor(self, seed: int | None = None) -> dict:
        """Compact replay description (laws plus mean runs plus seed)."""
        return {"T": self.T, "seed": seed, "queues": [
            {"law": s.to_dict(), "segments": [list(x) for x in segs]}
            for s, segs in zip(self.specs, self.segments)]}

    @classmethod
    def from_descriptor(cls, d: dict) -> "ArrivalPlan":
        specs = [ArrivalSpec.from_dict(q["law"]) for q in d["queues"]]
        segs = [[(int(a), int(b), float(m)) for a, b, m in q["segments"]] for q in d["queues"]]
        return cls(int(d["T"]), specs, segs)

    def to_json(self, seed: int | None = None) -> str:
        return json.dumps(self.descriptor(seed), indent=2)

    def export_csv(self, arrivals: np.ndarray, handle=None) -> str:
        """Rows (slot, queue, value) for every nonzero arrival; queues are 1-based."""
        buf = io.StringIO() if handle is None else handle
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["slot", "queue", "value"])
        for t, j in zip(*np.nonzero(arrivals)):
            w.writerow([int(t), int(j) + 1, repr(float(arrivals[t, j]))])
        return buf.getvalue() if handle is None else ""


class ReplicaStreams:
    """Sequential chunked draws for several replicas of one plan.

    Drawing slots in chunks consumes each stream in the same order as one
    full draw, so chunked and whole-plan arrivals agree bit for bit.
    """

    def __init__(self, plan: ArrivalPlan, seed: int, replicas: list):
        self.plan = plan
        self.replicas = replicas
        self.gens = [[queue_stream(seed, r, j) for j in range(plan.ell)] for r in replicas]
        self.pos = 0

    def next(self, n: int) -> np.ndarray:
        """Arrivals of the next ``n`` slots, shape (n, replicas, ell)."""
        stop = min(self.pos + n, self.plan.T)
        means = self.plan.means(self.pos, stop)
        out = np.empty((stop - self.pos, len(self.replicas), self.plan.ell))
        for i, gens in enumerate(self.gens):
            for j, spec in enumerate(self.plan.specs):
                out[:, i, j] = spec.draw(gens[j], means[:, j])
        self.pos = stop
        return out


@dataclass
class EpisodePlan:
    """One episode of length T built from a violating witness."""

    witness: Witness
    T: int
    t0: int
    theta_times: tuple
    jump_sizes: tuple
    jump_queues: tuple
    c: float
    d: float
    mu_bar: float
    gamma_min: float
    plan: ArrivalPlan = field(repr=False)

    def jump_windows(self):
        """Slot windows [floor(Theta T), floor(Theta T + d T)) relative to t0, with queue and size."""
        out = []
        for th, a, j in zip(self.theta_times, self.jump_sizes, self.jump_queues):
            s = int(math.floor(th * self.T))
            e = int(math.floor(th * self.T + self.d * self.T))
            out.append((s, e, j, a))
        return out


def guard_constant(c: float, gamma_min: float, mu_bar: float, thetas, sizes) -> float:
    """Half the minimum of the growth, gap and jump-size terms (zero without jumps)."""
    g = min(gamma_min, 1.0)
    bounds = [0.0, *thetas, 1.0]
    gaps = min(b - a for a, b in zip(bounds, bounds[1:]))
    size_term = min(sizes) / (1.0 + 2.0 * mu_bar) if sizes else 0.0
    return 0.5 * min(g * c / (4.0 * (1.0 + 4.0 * mu_bar)), gaps, size_term)


def build_episode_schedule(witness: Witness, T: int, t0: int = 0) -> EpisodePlan:
    """Arrival plan over slots ``[t0, t0 + T)`` following the time-scaled witness rates.

    Queues with infinite exponent get deterministic arrivals at the scaled rate;
    the others get the episode law with that mean. The plan's slot 0 is ``t0``.
    """
    T = int(T)
    if T < 1:
        raise ValueError("episode length must be at least one slot")
    net = witness.network
    thetas = tuple(t for t, _, _ in witness.jumps.jumps)
    if thetas and not (0 < thetas[0] and all(a < b for a, b in zip(thetas, thetas[1:])) and thetas[-1] < 1):
        raise ValueError("witness jump times must satisfy 0 < theta_1 < ... < theta_n < 1")
    mu_bar = mu_bar_for(net, witness.lambda_star, witness.epsilon)
    gmin = float(min(witness.gamma))
    sizes = tuple(a for _, _, a in witness.jumps.jumps)
    d = guard_constant(witness.value, gmin, mu_bar, thetas, sizes)
    specs = [ArrivalSpec(DETERMINISTIC) if math.isinf(g) else ArrivalSpec(EPISODE, gamma=g, mu_bar=mu_bar)
             for g in witness.gamma]
    # slot t (relative) carries the rate at time t / T
    starts = [int(math.ceil(s * T)) for s, _ in witness.profile.pieces]
    starts[0] = 0
    segs = [[] for _ in range(net.ell)]
    bounds = starts + [T]
    for k, (_, rate) in enumerate(witness.profile.pieces):
        a, b = bounds[k], bounds[k + 1]
        if b <= a:
            continue
        for j in range(net.ell):
            if segs[j] and segs[j][-1][2] == rate[j]:
                segs[j][-1] = (segs[j][-1][0], b, rate[j])
            else:
                segs[j].append((a, b, float(rate[j])))
    plan = ArrivalPlan(T, specs, segs)
    return EpisodePlan(witness, T, int(t0), thetas, sizes, tuple(j for _, j, _ in witness.jumps.jumps),
                       witness.value, d, mu_bar, gmin, plan)


def trimmed_mean(x, trim: float = 0.1) -> float:
    from scipy.stats import trim_mean

    return float(trim_mean(np.asarray(x, dtype=float), trim))


@dataclass
class ConcatenatedPlan:
    boundaries: list  # T_0 = 0, T_1, ..., T_K
    episodes: list
    plan: ArrivalPlan
    norm_estimates: list


def concatenate_episodes(net: Network, witness: Witness, base_T: int, horizon_episodes: int,
                         pilot_replicas: int = 64, seed: int = 0, trim: float = 0.1,
                         estimator=None) -> ConcatenatedPlan:
    """Chain episodes with ``T_{i+1} = T_i + max(T_i, ceil(10 E|Q(T_i)| / c))``.

    ``E|Q(T_i)|`` is a trimmed mean over ``pilot_replicas`` simulated paths of
    the plan built so far, unless ``estimator(plan, T_i)`` is supplied.
    """
    from .stability import simulate_batch

    c = witness.value
    if not c > 0:
        raise ValueError("witness value c must be positive")
    if base_T < 2:
        raise ValueError("base_T must be at least 2")
    bounds = [0, int(base_T)]
    episodes = [build_episode_schedule(witness, base_T, 0)]
    plan = episodes[0].plan
    estimates = []
    streams = None
    state = np.zeros((pilot_replicas, net.ell))
    for i in range(1, horizon_episodes):
        t_i = bounds[-1]
        if estimator is not None:
            est = float(estimator(plan, t_i))
        else:
            # the plan only grows at its end, so streams can resume where they stopped
            if streams is None:
                streams = ReplicaStreams(plan, seed, list(range(pilot_replicas)))
            streams.plan = plan
            while streams.pos < t_i:
                state = simulate_batch(net, state, streams.next(min(8192, t_i - streams.pos)))
            est = trimmed_mean(np.linalg.norm(state, axis=1), trim)
        estimates.append(est)
        length = max(t_i, int(math.ceil(10.0 * est / c)))
        ep = build_episode_schedule(witness, length, t_i)
        episodes.append(ep)
        plan = plan.concat(ep.plan)
        bounds.append(t_i + length)
    return ConcatenatedPlan(bounds, episodes, plan, estimates)
