"""Switched queueing networks under Max-Weight scheduling.

A network is a number of queues ``ell`` together with a finite, zero-closed
set of service vectors stored in lexicographic order. Every routine that has
to break ties relies on that order.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

FEAS_TOL = 1e-9


class InvalidNetwork(ValueError):
    """Raised for empty, negative, or malformed service sets."""


def _as_rows(vectors) -> np.ndarray:
    arr = np.asarray(vectors, dtype=float)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise InvalidNetwork("service set must be a non-empty list of equal-length vectors")
    if not np.all(np.isfinite(arr)):
        raise InvalidNetwork("service vectors must be finite")
    if np.any(arr < 0):
        raise InvalidNetwork("service vectors must be nonnegative")
    return arr


def _lex_sorted_unique(rows) -> np.ndarray:
    uniq = sorted({tuple(float(v) for v in r) for r in rows})
    return np.array(uniq, dtype=float)


def zero_closure(vectors) -> np.ndarray:
    """Close a set of vectors under zeroing any subset of coordinates.

    Returns the closed set as a 2-d array in lexicographic row order.
    """
    arr = _as_rows(vectors)
    current = {tuple(r) for r in arr.tolist()}
    for j in range(arr.shape[1]):
        extra = set()
        for v in current:
            if v[j] != 0.0:
                w = list(v)
                w[j] = 0.0
                extra.add(tuple(w))
        current |= extra
    return _lex_sorted_unique(current)


@dataclass(frozen=True, eq=False)
class Network:
    """Queue count plus zero-closed service set (rows sorted lexicographically)."""

    ell: int
    service_set: np.ndarray
    closure_added: bool = False
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        s = self.service_set
        if s.ndim != 2 or s.shape[1] != self.ell:
            raise InvalidNetwork("service vectors must have length ell")
        s.setflags(write=False)

    @classmethod
    def from_vectors(cls, vectors, name: str = "") -> "Network":
        raw = _as_rows(vectors)
        closed = zero_closure(raw)
        added = len(closed) != len(_lex_sorted_unique(raw))
        return cls(ell=raw.shape[1], service_set=closed, closure_added=added, name=name)

    @property
    def max_norm(self) -> float:
        """Largest Euclidean norm of a service vector."""
        return float(np.max(np.linalg.norm(self.service_set, axis=1)))

    def to_json(self) -> dict:
        return {"ell": self.ell, "service_vectors": self.service_set.tolist()}


def load_network(path) -> Network:
    """Read ``{"ell": ..., "service_vectors": [...]}`` and zero-close it."""
    data = json.loads(Path(path).read_text())
    return network_from_dict(data, name=Path(path).stem)


def network_from_dict(data: dict, name: str = "") -> Network:
    try:
        ell = int(data["ell"])
        vectors = data["service_vectors"]
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidNetwork(f"network description needs 'ell' and 'service_vectors': {exc}") from None
    net = Network.from_vectors(vectors, name=name)
    if net.ell != ell:
        raise InvalidNetwork(f"declared ell={ell} but vectors have length {net.ell}")
    return net


def mw_scores(net: Network, q) -> np.ndarray:
    return net.service_set @ np.asarray(q, dtype=float)


def mw_schedules(net: Network, q, tol: float = 0.0) -> np.ndarray:
    """All service vectors whose weight against ``q`` is within ``tol`` of the maximum.

    Rows keep the network's lexicographic order.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (net.ell,):
        raise ValueError(f"queue vector must have length {net.ell}")
    if np.any(q < 0):
        raise ValueError("queue lengths must be nonnegative")
    scores = mw_scores(net, q)
    return net.service_set[scores >= scores.max() - tol]


def mw_pick(net: Network, q, tol: float = 0.0) -> np.ndarray:
    """Lexicographically smallest Max-Weight schedule."""
    return mw_schedules(net, q, tol)[0]


class Membership(enum.Enum):
    INTERIOR = "Interior"
    BOUNDARY = "Boundary"
    EXTERIOR = "Exterior"


@dataclass(frozen=True)
class CapacityVerdict:
    classification: Membership
    margin: float  # signed Euclidean distance to the boundary of conv(S)

    @property
    def label(self) -> str:
        return self.classification.value


def _hull_equations(net: Network):
    """Facet inequalities ``a.x + b <= 0`` with unit normals, or None if the hull is flat."""
    key = "hull"
    if key not in net._cache:
        pts = net.service_set
        eqs = None
        if net.ell == 1:
            lo, hi = float(pts.min()), float(pts.max())
            if hi > lo:
                eqs = np.array([[1.0, -hi], [-1.0, lo]])
        elif len(pts) > net.ell:
            try:
                eqs = ConvexHull(pts).equations
            except QhullError:
                eqs = None
        net._cache[key] = eqs
    return net._cache[key]


def in_convex_hull(points: np.ndarray, x: np.ndarray, tol: float = FEAS_TOL) -> bool:
    """LP feasibility: is ``x`` a convex combination of ``points`` (to ``tol``)?"""
    k, d = points.shape
    # minimise total slack s in |P^T w - x| <= s
    c = np.concatenate([np.zeros(k), np.ones(d)])
    a_ub = np.block([[points.T, -np.eye(d)], [-points.T, -np.eye(d)]])
    b_ub = np.concatenate([x, -x])
    a_eq = np.concatenate([np.ones(k), np.zeros(d)])[None, :]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0], bounds=(0, None), method="highs")
    return bool(res.status == 0 and res.fun <= tol * d)


def capacity_membership(net: Network, lam, tol: float = FEAS_TOL) -> CapacityVerdict:
    """Classify ``lam`` against the capacity region conv(S).

    Feasibility is decided by a linear program. The margin is the Euclidean
    distance to the boundary: positive inside (from the facet description),
    negative outside (minimum-norm distance to the hull).
    """
    from .minnorm import min_norm_point

    lam = np.asarray(lam, dtype=float)
    if lam.shape != (net.ell,):
        raise ValueError(f"rate vector must have length {net.ell}")
    if not in_convex_hull(net.service_set, lam, tol):
        p, _ = min_norm_point(lam[None, :] - net.service_set)
        return CapacityVerdict(Membership.EXTERIOR, -float(np.linalg.norm(p)))
    eqs = _hull_equations(net)
    if eqs is None:
        return CapacityVerdict(Membership.BOUNDARY, 0.0)
    margin = float(np.min(-(eqs[:, :-1] @ lam + eqs[:, -1])))
    if margin <= tol:
        return CapacityVerdict(Membership.BOUNDARY, margin if margin > 0 else 0.0)
    return CapacityVerdict(Membership.INTERIOR, margin)
