"""Event-driven integration of Max-Weight fluid trajectories.

Along a fluid path the drift is the minimum-norm element of
``lam - conv(S(x))``, where ``S(x)`` is the set of Max-Weight schedules at
``x``. That drift is constant until a schedule outside the current maximising
face catches up or a positive queue reaches zero, so trajectories are exactly
piecewise linear and we integrate them event by event.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .minnorm import min_norm_point
from .network import Network

SCORE_RTOL = 1e-9
DRIFT_SNAP = 1e-13
NEG_TOL = 1e-9
ZENO_DT = 1e-12
ZENO_LIMIT = 1000
MAX_EVENTS = 1_000_000


class FluidError(RuntimeError):
    """Base class for integration failures."""


class NegativeQueueError(FluidError):
    pass


class ZenoError(FluidError):
    pass


class EventCapExceeded(FluidError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class DriftQuery:
    drift: np.ndarray
    active: tuple  # indices into net.service_set of the Max-Weight schedules at x
    weights: np.ndarray  # convex weights on the active schedules

    def schedules(self, net: Network) -> np.ndarray:
        return net.service_set[list(self.active)]


def active_indices(net: Network, x: np.ndarray) -> tuple:
    scores = net.service_set @ x
    top = scores.max()
    tol = SCORE_RTOL * max(abs(top), 1e-300)
    return tuple(np.flatnonzero(scores >= top - tol).tolist())


def min_norm_drift(net: Network, lam, x, cache: dict | None = None) -> DriftQuery:
    """Minimum-norm drift ``lam - mu`` with ``mu`` in the hull of the MW schedules at ``x``."""
    lam = np.asarray(lam, dtype=float)
    x = np.asarray(x, dtype=float)
    act = active_indices(net, x)
    if cache is not None and act in cache:
        return cache[act]
    sched = net.service_set[list(act)]
    p, w = min_norm_point(lam[None, :] - sched)
    p = np.where(np.abs(p) < DRIFT_SNAP, 0.0, p)
    out = DriftQuery(drift=p, active=act, weights=w)
    if cache is not None:
        cache[act] = out
    return out


def next_event(net: Network, lam, x, drift) -> float:
    """Time until the drift may change: a schedule catches up or a queue empties."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(drift, dtype=float)
    s = net.service_set
    scores = s @ x
    rates = s @ d
    top = scores.max()
    act = scores >= top - SCORE_RTOL * max(abs(top), 1e-300)
    r_top = rates[act].max()
    r_tol = SCORE_RTOL * max(1.0, abs(r_top))
    ref = int(np.flatnonzero(act & (rates >= r_top - r_tol))[0])
    gaps = scores[ref] - scores
    closing = rates - rates[ref]
    cand = (~act) & (closing > r_tol)
    times = [np.inf]
    if np.any(cand):
        times.append(float(np.min(gaps[cand] / closing[cand])))
    draining = (x > 0) & (d < 0)
    if np.any(draining):
        times.append(float(np.min(x[draining] / -d[draining])))
    return max(min(times), 0.0)


@dataclass(frozen=True)
class JumpMark:
    time: float
    queue: int
    size: float


@dataclass
class PiecewiseLinearTrajectory:
    """Right-continuous piecewise linear path with upward jumps.

    ``times`` is nondecreasing (simultaneous jumps get separate zero-length
    entries). ``left`` holds left limits and ``right`` the values at each
    breakpoint. ``drifts[k]`` applies on ``[times[k], times[k+1])`` and the
    last one runs to ``t_end``.
    """

    times: np.ndarray
    left: np.ndarray
    right: np.ndarray
    drifts: np.ndarray
    is_jump: np.ndarray
    t_end: float
    jump_marks: list = field(default_factory=list)
    events: int = 0

    @property
    def ell(self) -> int:
        return self.right.shape[1]

    def at(self, t: float) -> np.ndarray:
        if t < self.times[0] or t > self.t_end + 1e-12:
            raise ValueError(f"time {t} outside [{self.times[0]}, {self.t_end}]")
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return np.maximum(self.right[k] + (t - self.times[k]) * self.drifts[k], 0.0)

    def final(self) -> np.ndarray:
        return self.at(self.t_end)

    def coordinate_max(self, j: int, t_max: float | None = None):
        """(value, time) of the largest value of coordinate j on [times[0], t_max]."""
        t_max = self.t_end if t_max is None else t_max
        best, best_t = -np.inf, self.times[0]
        for k in range(len(self.times)):
            if self.times[k] > t_max:
                break
            for t in (self.times[k], min(self.times[k + 1] if k + 1 < len(self.times) else self.t_end, t_max)):
                v = self.right[k, j] + (t - self.times[k]) * self.drifts[k, j]
                if v > best + 1e-15:
                    best, best_t = v, t
        return float(best), float(best_t)

    def sample(self, ts) -> np.ndarray:
        return np.array([self.at(t) for t in ts])

    def to_csv(self, handle=None) -> str:
        """Columns t, q_1..q_ell, drift_1..drift_ell, is_jump; final row at t_end."""
        buf = io.StringIO() if handle is None else handle
        w = csv.writer(buf, lineterminator="\n")
        ell = self.ell
        w.writerow(["t"] + [f"q_{j + 1}" for j in range(ell)] + [f"drift_{j + 1}" for j in range(ell)] + ["is_jump"])
        for k in range(len(self.times)):
            w.writerow([repr(float(self.times[k]))] + [repr(float(v)) for v in self.right[k]]
                       + [repr(float(v)) for v in self.drifts[k]] + [int(self.is_jump[k])])
        end = self.final()
        w.writerow([repr(float(self.t_end))] + [repr(float(v)) for v in end]
                   + [repr(float(v)) for v in self.drifts[-1]] + [0])
        return buf.getvalue() if handle is None else ""


class _Builder:
    """Accumulates breakpoints; the newest entry may still await its drift."""

    def __init__(self, ell):
        self.ell = ell
        self.times, self.left, self.right, self.drifts, self.jumps = [], [], [], [], []
        self.marks = []
        self.events = 0
        self.pending = False

    def open(self, t, left, right, jump=False):
        self.times.append(float(t))
        self.left.append(np.array(left, dtype=float))
        self.right.append(np.array(right, dtype=float))
        self.drifts.append(np.zeros(self.ell))
        self.jumps.append(bool(jump))
        self.pending = True

    def set_drift(self, t, x, d):
        if self.pending:
            self.drifts[-1] = np.array(d, dtype=float)
            self.pending = False
        elif not np.allclose(self.drifts[-1], d, rtol=0, atol=1e-14):
            self.open(t, x, x)
            self.set_drift(t, x, d)

    def build(self, t_end) -> PiecewiseLinearTrajectory:
        return PiecewiseLinearTrajectory(
            times=np.array(self.times), left=np.array(self.left), right=np.array(self.right),
            drifts=np.array(self.drifts), is_jump=np.array(self.jumps, dtype=bool),
            t_end=float(t_end), jump_marks=list(self.marks), events=self.events)


def _run(net: Network, lam: np.ndarray, x: np.ndarray, t0: float, t1: float,
         builder: _Builder, max_events: int, cache: dict | None = None) -> np.ndarray:
    """Advance the fluid from (t0, x) to t1 at constant arrival rate ``lam``."""
    cache = {} if cache is None else cache
    t = t0
    tiny_steps = 0
    while True:
        d = min_norm_drift(net, lam, x, cache).drift
        if np.any((x <= 0) & (d < -NEG_TOL)):
            raise NegativeQueueError(f"drift {d} pushes empty queues negative at t={t}")
        d = np.where((x <= 0) & (d < 0), 0.0, d)
        builder.set_drift(t, x, d)
        dt = next_event(net, lam, x, d)
        if t + dt >= t1:
            return np.maximum(x + (t1 - t) * d, 0.0) if np.isfinite(dt) else x.copy()
        builder.events += 1
        if builder.events > max_events:
            raise EventCapExceeded(f"more than {max_events} events", builder.build(t))
        if dt <= ZENO_DT * max(1.0, abs(t)):
            tiny_steps += 1
            if tiny_steps > ZENO_LIMIT:
                raise ZenoError(f"accumulating events near t={t}")
        else:
            tiny_steps = 0
        x_new = x + dt * d
        scale = max(1.0, float(np.max(np.abs(x))))
        if np.any(x_new < -NEG_TOL * scale):
            raise NegativeQueueError(f"queue would reach {x_new.min()} at t={t + dt}")
        # queues that empty at this event land exactly on zero
        x_new[(d < 0) & (x_new <= 1e-12 * scale)] = 0.0
        x = np.maximum(x_new, 0.0)
        t += dt


def integrate_fluid(net: Network, lam, q0, t_end: float,
                    max_events: int = MAX_EVENTS) -> PiecewiseLinearTrajectory:
    """Fluid trajectory from ``q0`` at constant rate ``lam`` on ``[0, t_end]``."""
    lam = np.asarray(lam, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    if lam.shape != (net.ell,) or q0.shape != (net.ell,):
        raise ValueError("rate and initial state must have length ell")
    if np.any(q0 < 0) or np.any(lam < 0):
        raise ValueError("initial state and rates must be nonnegative")
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    b = _Builder(net.ell)
    b.open(0.0, q0, q0)
    _run(net, lam, q0.copy(), 0.0, float(t_end), b, max_events)
    return b.build(t_end)
