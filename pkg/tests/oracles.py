"""Independent reference computations used by the tests.

None of these share code with the package: brute-force enumeration, generic
optimisers and arbitrary-precision quadrature.
"""
import itertools
import math

import mpmath
import numpy as np
from scipy.optimize import minimize


def closure_bruteforce(vectors):
    out = set()
    for v in vectors:
        v = tuple(float(x) for x in v)
        for mask in itertools.product([0, 1], repeat=len(v)):
            out.add(tuple(x * k for x, k in zip(v, mask)))
    return sorted(out)


def maximizers_bruteforce(vectors, q):
    scores = [sum(a * b for a, b in zip(v, q)) for v in vectors]
    top = max(scores)
    return sorted(tuple(v) for v, s in zip(vectors, scores) if s == top)


def min_norm_slsqp(vectors):
    """Min-norm point of conv(vectors) by a generic constrained optimiser."""
    V = np.asarray(vectors, dtype=float)
    k = len(V)
    res = minimize(lambda w: float(np.sum((w @ V) ** 2)), np.full(k, 1.0 / k),
                   jac=lambda w: 2.0 * V @ (w @ V), bounds=[(0, 1)] * k,
                   constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1.0}],
                   method="SLSQP", options={"ftol": 1e-15, "maxiter": 1000})
    return res.x @ V


def segment_projection(a, b):
    """Closest point to the origin on the segment [a, b]."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    d = b - a
    t = 0.0 if not d.any() else min(1.0, max(0.0, -a @ d / (d @ d)))
    return a + t * d


def sigma_mp(alpha, mu_bar, dps=30):
    """sigma by mpmath tanh-sinh quadrature after the substitution x = mu_bar e^y."""
    mpmath.mp.dps = dps
    a, m = mpmath.mpf(alpha), mpmath.mpf(mu_bar)
    f = lambda y: m ** (-a) * mpmath.e ** (-a * y) * mpmath.log(m * mpmath.e ** y + 1)
    return float(mpmath.quad(f, [0, 10, 100, 1000, mpmath.inf]))


def episode_survival_mp(gamma, mu_bar, x, dps=25):
    """P(X > x) for density proportional to x^-(2+gamma) log(x+1) on [mu_bar, inf)."""
    mpmath.mp.dps = dps
    g = mpmath.mpf(gamma)
    f = lambda t: t ** (-(2 + g)) * mpmath.log(t + 1)
    total = mpmath.quad(f, [mu_bar, 10 * mu_bar, 1000 * mu_bar, mpmath.inf])
    if x <= mu_bar:
        return 1.0
    return float(mpmath.quad(f, [x, 10 * x, 1000 * x, mpmath.inf]) / total)


def episode_truncated_mean_mp(gamma, mu_bar, K, dps=25):
    """E[min(X, K)] of the continuous episode law (atom excluded)."""
    mpmath.mp.dps = dps
    g = mpmath.mpf(gamma)
    f = lambda t: t ** (-(2 + g)) * mpmath.log(t + 1)
    total = mpmath.quad(f, [mu_bar, 10 * mu_bar, 1000 * mu_bar, mpmath.inf])
    body = mpmath.quad(lambda t: t * f(t), [mu_bar, K])
    tail = mpmath.quad(f, [K, 10 * K, mpmath.inf])
    return float((body + K * tail) / total)


def budget_bruteforce(gamma):
    box = [range(int(math.floor(1 / g)) + 1) if math.isfinite(g) else range(1) for g in gamma]
    return sorted(n for n in itertools.product(*box)
                  if sum(g * k for g, k in zip(gamma, n) if k) <= 1 + 1e-12)


def in_hull_lp(points, x, tol=1e-9):
    """Is x a convex combination of points? (scipy LP, equality-constrained weights)"""
    from scipy.optimize import linprog

    P = np.asarray(points, float)
    k = len(P)
    A = np.vstack([P.T, np.ones(k)])
    b = np.concatenate([np.asarray(x, float), [1.0]])
    # minimise the L1 residual with slack variables
    m = len(b)
    c = np.concatenate([np.zeros(k), np.ones(2 * m)])
    A_eq = np.hstack([A, np.eye(m), -np.eye(m)])
    res = linprog(c, A_eq=A_eq, b_eq=b, bounds=[(0, None)] * (k + 2 * m), method="highs")
    return res.status == 0 and res.fun <= tol * 10


def near_maximizers(vectors, q, rtol=1e-7):
    V = np.asarray(vectors, float)
    s = V @ np.asarray(q, float)
    return V[s >= s.max() - rtol * max(1.0, abs(s.max()))]
