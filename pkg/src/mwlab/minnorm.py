"""Minimum-norm point of a convex hull.

``min_norm_point`` is Wolfe's active-set method. ``min_norm_by_faces`` is an
independent brute-force check that enumerates affinely independent subsets.
"""
from __future__ import annotations

from itertools import combinations

import numpy as np

CERT_TOL = 1e-9


class MinNormError(RuntimeError):
    pass


def _affine_minimizer(points: np.ndarray) -> np.ndarray:
    """Weights (summing to one) of the min-norm point of the affine hull of ``points``."""
    k = len(points)
    if k == 1:
        return np.ones(1)
    g = points @ points.T
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = g
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    w = sol[:k]
    return w / w.sum()


def min_norm_point(vectors, tol: float = 1e-12, max_iter: int = 10_000):
    """Wolfe's algorithm for the point of conv(vectors) closest to the origin.

    Args:
        vectors: array of shape (k, d).
        tol: relative tolerance for the optimality test.
        max_iter: cap on major plus minor cycles.

    Returns:
        ``(point, weights)`` where ``weights`` has length k, is nonnegative and
        sums to one, and ``point = weights @ vectors``.
    """
    pts = np.asarray(vectors, dtype=float)
    if pts.ndim != 2 or len(pts) == 0:
        raise ValueError("need a non-empty (k, d) array")
    k = len(pts)
    scale = max(1.0, float(np.max(np.einsum("ij,ij->i", pts, pts))))

    start = int(np.argmin(np.einsum("ij,ij->i", pts, pts)))
    active = [start]
    w = np.ones(1)
    x = pts[start].copy()
    it = 0
    while True:
        it += 1
        if it > max_iter:
            raise MinNormError("Wolfe iteration cap reached")
        dots = pts @ x
        j = int(np.argmin(dots))
        if x @ x - dots[j] <= tol * scale or j in active:
            break
        active.append(j)
        w = np.append(w, 0.0)
        while True:
            it += 1
            if it > max_iter:
                raise MinNormError("Wolfe iteration cap reached")
            v = _affine_minimizer(pts[active])
            if np.all(v > 1e-14):
                w = v
                x = w @ pts[active]
                break
            mask = v <= 1e-14
            ratio = w[mask] / (w[mask] - v[mask])
            theta = float(np.min(ratio)) if ratio.size else 1.0
            w = (1.0 - theta) * w + theta * v
            keep = w > 1e-14
            if not np.any(keep):
                keep[int(np.argmax(w))] = True
            active = [a for a, kk in zip(active, keep) if kk]
            w = w[keep]
            w = w / w.sum()
            x = w @ pts[active]
    weights = np.zeros(k)
    weights[active] = w
    return x, weights


def certificate_gap(vectors, point) -> float:
    """min over generators v of p.(v - p); nonnegative at the optimum."""
    pts = np.asarray(vectors, dtype=float)
    p = np.asarray(point, dtype=float)
    return float(np.min(pts @ p) - p @ p)


def min_norm_by_faces(vectors, max_generators: int = 12) -> np.ndarray:
    """Brute-force min-norm point over all affinely independent subsets.

    Exponential in the number of generators, so only used as a cross-check.
    """
    pts = np.asarray(vectors, dtype=float)
    k, d = pts.shape
    if k > max_generators:
        raise ValueError(f"face enumeration limited to {max_generators} generators")
    best = None
    best_norm = np.inf
    for size in range(1, min(k, d + 1) + 1):
        for subset in combinations(range(k), size):
            sub = pts[list(subset)]
            if size > 1:
                diffs = sub[1:] - sub[0]
                if np.linalg.matrix_rank(diffs, tol=1e-10) < size - 1:
                    continue
            w = _affine_minimizer(sub)
            if np.any(w < -1e-12):
                continue
            p = w @ sub
            n = float(p @ p)
            if n < best_norm - 1e-15:
                best, best_norm = p, n
    return best
