"""Independent reference implementations used as test oracles.

Nothing here imports the package's numerical code: each oracle is a direct,
slow transcription of the textbook definition.
"""
import math

import numpy as np


def star_polygon(rng, k=None, cx=0.0, cy=0.0, r0=1.0):
    """Random star-shaped simple polygon (angles sorted, radii jittered)."""
    k = k or int(rng.integers(3, 40))
    def draw():
        return np.sort(rng.uniform(0, 2 * np.pi, k))

    def ok(th):
        # small gaps make slivers; a gap over pi loses star-shapedness
        gaps = np.diff(np.r_[th, th[0] + 2 * np.pi])
        return gaps.min() > 1e-3 and gaps.max() < 0.9 * np.pi

    th = draw()
    while not ok(th):
        th = draw()
    r = r0 * rng.uniform(0.3, 1.0, k)
    return np.column_stack([cx + r * np.cos(th), cy + r * np.sin(th)])


def shoelace(ring):
    s = 0.0
    n = len(ring)
    for i in range(n):
        x1, y1 = ring[i]
        x2, y2 = ring[(i + 1) % n]
        s += x1 * y2 - x2 * y1
    return abs(s) / 2


def newton_poisson(X, y, w=None, iters=200):
    """Exact-Newton maximiser of sum w (y eta - exp eta), with line search."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    w = np.ones(len(y)) if w is None else np.asarray(w, float)
    beta = np.zeros(X.shape[1])

    def loglik(b):
        eta = X @ b
        return float(np.sum(w * (y * eta - np.exp(eta))))

    for _ in range(iters):
        mu = np.exp(X @ beta)
        g = X.T @ (w * (y - mu))
        H = X.T @ ((w * mu)[:, None] * X)
        step = np.linalg.solve(H, g)
        t = 1.0
        while loglik(beta + t * step) < loglik(beta) - 1e-14 and t > 1e-8:
            t /= 2
        beta = beta + t * step
        if np.max(np.abs(t * step)) < 1e-14:
            break
    return beta


def poisson_deviance(y, mu, w=None):
    w = np.ones(len(y)) if w is None else w
    total = 0.0
    for yi, mi, wi in zip(y, mu, w):
        term = (yi * math.log(yi / mi) if yi > 0 else 0.0) - (yi - mi)
        total += 2 * wi * term
    return total


def bspline_cox_de_boor(knots, i, p, t):
    """Recursive Cox-de Boor B_{i,p}(t) on a knot vector (right-open spans)."""
    if p == 0:
        return 1.0 if knots[i] <= t < knots[i + 1] else 0.0
    left = 0.0
    if knots[i + p] != knots[i]:
        left = (t - knots[i]) / (knots[i + p] - knots[i]) * bspline_cox_de_boor(knots, i, p - 1, t)
    right = 0.0
    if knots[i + p + 1] != knots[i + 1]:
        right = ((knots[i + p + 1] - t) / (knots[i + p + 1] - knots[i + 1])
                 * bspline_cox_de_boor(knots, i + 1, p - 1, t))
    return left + right
