"""Spline bases and penalties: low-rank thin-plate (2-D) and P-splines (1-D)."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .errors import InvalidInputError, InvalidKnotsError, OutOfRangeError


def tps_eta(r):
    """Thin-plate radial function ``r^2 log r`` with ``eta(0) = 0``."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(r > 0, r * r * np.log(r), 0.0)
    return out


def farthest_point_knots(x, y, k: int) -> np.ndarray:
    """Greedy farthest-point sample of ``k`` distinct locations.

    Starts from the location nearest the centroid, so the result depends only
    on the input set and its order.
    """
    pts = np.unique(np.column_stack([x, y]), axis=0)
    if len(pts) < k:
        raise InvalidKnotsError(f"only {len(pts)} distinct locations for {k} knots")
    centre = pts.mean(axis=0)
    first = int(np.argmin(np.sum((pts - centre) ** 2, axis=1)))
    chosen = [first]
    d2 = np.sum((pts - pts[first]) ** 2, axis=1)
    for _ in range(k - 1):
        nxt = int(np.argmax(d2))
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((pts - pts[nxt]) ** 2, axis=1))
    return pts[chosen]


def sum_to_zero(X: np.ndarray) -> np.ndarray:
    """Null-space basis ``Z`` of the column-sum constraint ``1^T X Z = 0``."""
    c = X.sum(axis=0)[:, None]
    Q, _ = np.linalg.qr(c, mode="complete")
    return Q[:, 1:]


@dataclass(frozen=True)
class ThinPlateBasis:
    """Radial thin-plate basis with null space ``{1, x, y}``.

    The smooth is ``a0 + a1 x + a2 y + sum_j d_j eta(|u - knot_j|)`` subject
    to ``T^T d = 0`` where ``T = [1, x_j, y_j]`` over the knots.
    """

    knots: np.ndarray

    def __post_init__(self):
        kn = np.array(self.knots, dtype=float).reshape(-1, 2)
        if len(np.unique(kn, axis=0)) != len(kn):
            raise InvalidKnotsError("duplicate knots")
        kn.setflags(write=False)
        object.__setattr__(self, "knots", kn)

    @property
    def k(self) -> int:
        return len(self.knots)

    def radial(self, x, y) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        r = np.hypot(x[:, None] - self.knots[:, 0], y[:, None] - self.knots[:, 1])
        return tps_eta(r)

    def raw(self, x, y) -> np.ndarray:
        """Unconstrained rows ``[1, x, y, eta(|u - knot_1|), ...]``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return np.column_stack([np.ones_like(x), x, y, self.radial(x, y)])

    def null_space_matrix(self) -> np.ndarray:
        return np.column_stack([np.ones(self.k), self.knots])

    def side_constraint(self) -> np.ndarray:
        """Basis ``Z`` of ``{d : T^T d = 0}``, shape ``(k, k - rank(T))``."""
        return sla.null_space(self.null_space_matrix().T)

    def knot_matrix(self) -> np.ndarray:
        d = np.hypot(self.knots[:, None, 0] - self.knots[None, :, 0],
                     self.knots[:, None, 1] - self.knots[None, :, 1])
        return tps_eta(d)

    def smooth_columns(self, x, y) -> np.ndarray:
        """``[1, x, y, E Z]``: the smooth's span with side conditions absorbed."""
        raw = self.raw(x, y)
        return np.column_stack([raw[:, :3], raw[:, 3:] @ self.side_constraint()])

    def smooth_penalty(self) -> np.ndarray:
        Z = self.side_constraint()
        inner = Z.T @ self.knot_matrix() @ Z
        p = 3 + inner.shape[0]
        S = np.zeros((p, p))
        S[3:, 3:] = 0.5 * (inner + inner.T)
        return S


def eval_basis2d(b: ThinPlateBasis, x, y) -> np.ndarray:
    return b.raw(x, y)


def penalty2d(b: ThinPlateBasis) -> np.ndarray:
    """Knot matrix ``eta(|k_i - k_j|)`` projected off the null space (k x k)."""
    T = b.null_space_matrix()
    P = np.eye(b.k) - T @ np.linalg.pinv(T)
    S = P @ b.knot_matrix() @ P
    return 0.5 * (S + S.T)


@dataclass(frozen=True)
class PSplineBasis:
    """Cubic (by default) B-splines on equally spaced knots over ``[t0, t1]``.

    ``k`` is the number of basis functions; the interval is cut into
    ``k - degree`` equal segments.
    """

    t0: float
    t1: float
    k: int = 50
    degree: int = 3

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise InvalidInputError("empty basis interval")
        if self.k < self.degree + 1:
            raise InvalidKnotsError(f"need at least {self.degree + 1} basis functions")

    @property
    def nseg(self) -> int:
        return self.k - self.degree

    @property
    def spacing(self) -> float:
        return (self.t1 - self.t0) / self.nseg

    @property
    def knots(self) -> np.ndarray:
        """Full extended knot vector, ``k + degree + 1`` entries."""
        return self.t0 + self.spacing * np.arange(-self.degree, self.nseg + self.degree + 1)

    def evaluate(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        tol = 1e-10 * (self.t1 - self.t0)
        bad = (t < self.t0 - tol) | (t > self.t1 + tol) | ~np.isfinite(t)
        if bad.any():
            raise OutOfRangeError(f"{int(bad.sum())} values outside [{self.t0}, {self.t1}]")
        p = self.degree
        knots = self.knots
        # span index into the extended knot vector; t1 belongs to the last span
        seg = np.clip(np.floor((t - self.t0) / self.spacing).astype(np.int64), 0, self.nseg - 1)
        span = seg + p
        # triangular de Boor scheme for the p + 1 non-zero functions
        N = np.zeros((len(t), p + 1))
        N[:, 0] = 1.0
        left = np.zeros((len(t), p + 1))
        right = np.zeros((len(t), p + 1))
        for j in range(1, p + 1):
            left[:, j] = t - knots[span + 1 - j]
            right[:, j] = knots[span + j] - t
            saved = np.zeros(len(t))
            for r in range(j):
                temp = N[:, r] / (right[:, r + 1] + left[:, j - r])
                N[:, r] = saved + right[:, r + 1] * temp
                saved = left[:, j - r] * temp
            N[:, j] = saved
        B = np.zeros((len(t), self.k))
        rows = np.arange(len(t))
        for r in range(p + 1):
            B[rows, seg + r] = N[:, r]
        return B

    def penalty(self, order: int = 2) -> np.ndarray:
        return penalty1d(self.k, order)


def eval_basis1d(b: PSplineBasis, t) -> np.ndarray:
    return b.evaluate(t)


def penalty1d(k: int, order: int = 2) -> np.ndarray:
    D = np.diff(np.eye(k), n=order, axis=0)
    return D.T @ D


def write_knots_csv(knots, path) -> None:
    knots = np.asarray(knots, dtype=float)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if knots.ndim == 1:
            w.writerow(["t"])
            for v in knots:
                w.writerow([repr(float(v))])
        else:
            w.writerow(["x", "y"])
            for a, b in knots:
                w.writerow([repr(float(a)), repr(float(b))])
