"""Weighted, optionally penalized Poisson log-linear regression by PIRLS.

Maximises ``sum_k w_k (y_k log mu_k - mu_k) - lam/2 beta' S beta`` with
``log mu = X beta``. The same engine serves Berman-Turner quadrature fits
(``w = a_k``, ``y = e_k / a_k``) and daily count fits (``w = 1``).
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.special import ndtr

from .errors import ConvergenceError, InvalidInputError, SingularDesignError

log = logging.getLogger(__name__)

ETA_MAX = 700.0
# relative deviance change below which a failed step halving counts as convergence
STALL_TOL = 1e-6
RANK_TOL = 1e-10


def poisson_deviance(y, mu, w=None) -> float:
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ylogy = np.where(y > 0, y * np.log(y / mu), 0.0)
    return float(2.0 * np.sum(w * (ylogy - (y - mu))))


@dataclass
class FitResult:
    names: list
    coefficients: np.ndarray
    covariance: np.ndarray
    fitted: np.ndarray
    deviance: float
    null_deviance: float
    edf: float
    n_obs: int
    smoothing: float = 0.0
    converged: bool = True
    iterations: int = 0
    parametric: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0, None))

    @property
    def z(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coefficients / self.se

    @property
    def p(self) -> np.ndarray:
        return 2.0 * ndtr(-np.abs(self.z))

    @property
    def aic(self) -> float:
        return aic(self)

    @property
    def gcv(self) -> float:
        return self.n_obs * self.deviance / (self.n_obs - self.edf) ** 2

    @property
    def ubre(self) -> float:
        return self.deviance / self.n_obs + 2.0 * self.edf / self.n_obs - 1.0

    @property
    def deviance_explained(self) -> float:
        if self.null_deviance <= 0:
            return 0.0
        return 1.0 - self.deviance / self.null_deviance

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def wald_table(self, names=None) -> list:
        """Rows ``(name, estimate, se, z, p)`` for the parametric columns."""
        names = names if names is not None else (self.parametric or self.names)
        se, z, p = self.se, self.z, self.p
        rows = []
        for nm in names:
            i = self.names.index(nm)
            rows.append((nm, float(self.coefficients[i]), float(se[i]), float(z[i]), float(p[i])))
        return rows

    def to_dict(self) -> dict:
        return {
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "n_obs": int(self.n_obs),
            "deviance": float(self.deviance),
            "null_deviance": float(self.null_deviance),
            "deviance_explained": float(self.deviance_explained),
            "edf": float(self.edf),
            "aic": float(self.aic),
            "gcv": float(self.gcv),
            "smoothing": float(self.smoothing),
            "names": list(self.names),
            "coefficients": [float(v) for v in self.coefficients],
            "covariance": [[float(v) for v in row] for row in self.covariance],
            "table": [
                {"term": nm, "estimate": b, "std_error": s, "z_value": z, "p_value": p}
                for nm, b, s, z, p in self.wald_table()
            ],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _penalty_root(S: np.ndarray) -> np.ndarray:
    """``E`` with ``E^T E = S`` for symmetric PSD ``S``."""
    vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    keep = vals > vals.max(initial=0.0) * 1e-13
    return (vecs[:, keep] * np.sqrt(vals[keep])).T


def _intercept_column(X) -> int | None:
    for j in range(X.shape[1]):
        col = X[:, j]
        if np.all(col == col[0]) and col[0] != 0:
            return j
    return None


class _Solver:
    """Pivoted-QR solve of the penalized weighted least squares step."""

    def __init__(self, X, names, E):
        self.X = X
        self.names = names
        self.E = E

    def solve(self, sw, z):
        X = self.X
        A = sw[:, None] * X
        if self.E is not None and len(self.E):
            A = np.vstack([A, self.E])
        b = np.concatenate([sw * z, np.zeros(A.shape[0] - len(z))])
        scale = np.sqrt(np.sum(A * A, axis=0))
        zero = scale == 0
        if zero.any():
            bad = [self.names[j] for j in np.flatnonzero(zero)]
            raise SingularDesignError(f"all-zero columns: {bad}", bad)
        Q, R, piv = sla.qr(A / scale, mode="economic", pivoting=True)
        d = np.abs(np.diag(R))
        rank = int(np.sum(d > RANK_TOL * d[0]))
        if rank < X.shape[1]:
            bad = [self.names[j] for j in piv[rank:]]
            raise SingularDesignError(f"design is rank deficient; collinear columns: {bad}", bad)
        coef_p = sla.solve_triangular(R, Q.T @ b)
        beta = np.empty_like(coef_p)
        beta[piv] = coef_p
        self.R, self.piv, self.scale = R, piv, scale
        return beta / scale

    def inverse(self):
        """``(X'WX + lam S)^-1`` from the last factorisation."""
        Rinv = sla.solve_triangular(self.R, np.eye(self.R.shape[0]))
        Vp = Rinv @ Rinv.T
        V = np.empty_like(Vp)
        V[np.ix_(self.piv, self.piv)] = Vp
        return V / np.outer(self.scale, self.scale)


def fit_poisson(X, y, weights=None, penalty=None, lam: float = 0.0, names=None,
                parametric=None, tol: float = 1e-10, max_iter: int = 100,
                start=None) -> FitResult:
    """Penalized IRLS with step halving.

    ``penalty`` is a ``(p, p)`` PSD matrix over all columns (zero outside the
    smooth blocks) and ``lam`` its multiplier.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    names = list(names) if names is not None else [f"x{j}" for j in range(p)]
    if len(names) != p or len(set(names)) != p:
        raise InvalidInputError("column names must be unique, one per column")
    if len(y) != n or len(w) != n:
        raise InvalidInputError("X, y and weights disagree in length")
    if not np.all(np.isfinite(X)):
        rows = np.unique(np.nonzero(~np.isfinite(X))[0])[:5].tolist()
        raise InvalidInputError(f"non-finite design entries, e.g. rows {rows}")
    if np.any(y < 0) or not np.all(np.isfinite(y)):
        raise InvalidInputError("responses must be finite and non-negative")
    if np.any(w <= 0):
        raise InvalidInputError("prior weights must be positive")
    S = np.zeros((p, p)) if penalty is None else np.asarray(penalty, dtype=float)
    lam = float(lam)
    E = _penalty_root(lam * S) if lam > 0 and np.any(S) else None
    solver = _Solver(X, names, E)

    def pen_dev(beta, mu):
        return poisson_deviance(y, mu, w) + lam * float(beta @ S @ beta)

    if start is not None:
        beta = np.asarray(start, dtype=float).copy()
    else:
        beta = np.zeros(p)
        j = _intercept_column(X)
        ybar = float(np.sum(w * y) / np.sum(w))
        if j is not None:
            beta[j] = math.log(ybar if ybar > 0 else 1e-10) / X[0, j]
    eta = X @ beta
    if np.any(eta > ETA_MAX):
        raise ConvergenceError("starting values overflow")
    mu = np.exp(eta)
    dev_old = pen_dev(beta, mu)
    trace = [dev_old]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        W = w * mu
        z = eta + (y - mu) / mu
        beta_new = solver.solve(np.sqrt(W), z)
        step = 1.0
        for _ in range(21):
            cand = beta + step * (beta_new - beta)
            eta_c = X @ cand
            if np.all(eta_c < ETA_MAX):
                mu_c = np.exp(eta_c)
                dev_c = pen_dev(cand, mu_c)
                if np.isfinite(dev_c) and (it == 1 or dev_c <= dev_old * (1 + 1e-12) + 1e-12):
                    break
            step *= 0.5
        else:
            # no descent left: at the optimum up to round-off, or genuinely stuck
            if it > 1 and abs(trace[-1] - trace[-2]) / (abs(trace[-1]) + 0.1) < STALL_TOL:
                converged = True
                break
            raise ConvergenceError("step halving failed to reduce the penalized deviance", trace)
        beta, eta, mu = cand, eta_c, mu_c
        trace.append(dev_c)
        if abs(dev_c - dev_old) / (abs(dev_c) + 0.1) < tol:
            converged = True
            dev_old = dev_c
            break
        dev_old = dev_c
    if not converged:
        raise ConvergenceError(f"no convergence in {max_iter} iterations", trace)
    if np.any(eta < -ETA_MAX):
        raise ConvergenceError("fitted means underflow; the response is degenerate", trace)

    # covariance and edf at the converged weights
    W = w * mu
    solver.solve(np.sqrt(W), eta + (y - mu) / mu)
    V = solver.inverse()
    V = 0.5 * (V + V.T)
    XtWX = X.T @ (W[:, None] * X)
    edf = float(np.sum(V * XtWX.T))
    ybar = float(np.sum(w * y) / np.sum(w))
    null_dev = poisson_deviance(y, np.full(n, ybar if ybar > 0 else 1e-300), w)
    return FitResult(
        names=names,
        coefficients=beta,
        covariance=V,
        fitted=mu,
        deviance=poisson_deviance(y, mu, w),
        null_deviance=null_dev,
        edf=edf,
        n_obs=n,
        smoothing=lam,
        converged=True,
        iterations=it,
        parametric=list(parametric) if parametric is not None else list(names),
        trace=trace,
    )


def score(fit: FitResult, X, y, weights=None, penalty=None) -> np.ndarray:
    """Gradient of the penalized log-likelihood at the fit (zero at optimum)."""
    X = np.asarray(X, dtype=float)
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)
    g = X.T @ (w * (np.asarray(y, dtype=float) - fit.fitted))
    if penalty is not None:
        g = g - fit.smoothing * (np.asarray(penalty) @ fit.coefficients)
    return g


def aic(fit: FitResult) -> float:
    """Deviance plus twice the effective degrees of freedom."""
    return fit.deviance + 2.0 * fit.edf


def select_smoothing(X, y, weights=None, penalty=None, grid=None, criterion: str = "gcv",
                     **kw):
    """Fit over a grid of multipliers; return ``(lam, fit)`` minimising ``criterion``.

    ``criterion`` is ``"gcv"`` (``n D / (n - edf)^2``) or ``"ubre"``
    (``D/n + 2 edf/n - 1``, i.e. AIC for a known unit scale). Ties go to the
    larger multiplier.
    """
    if grid is None or len(grid) == 0:
        raise InvalidInputError("empty smoothing grid")
    if criterion not in ("gcv", "ubre"):
        raise InvalidInputError(f"unknown criterion {criterion!r}")
    best = None
    failures = []
    start = kw.pop("start", None)
    for lam in sorted(float(v) for v in grid):
        try:
            # neighbouring multipliers have close optima; warm starts save iterations
            fit = fit_poisson(X, y, weights, penalty=penalty, lam=lam, start=start, **kw)
        except ConvergenceError as exc:
            failures.append((lam, str(exc)))
            start = None
            continue
        start = fit.coefficients
        crit = fit.gcv if criterion == "gcv" else fit.ubre
        log.debug("lam=%g %s=%.10g edf=%.3f", lam, criterion, crit, fit.edf)
        if best is None or crit <= best[0]:
            best = (crit, lam, fit)
    if best is None:
        raise ConvergenceError(f"all {len(failures)} smoothing fits failed: {failures}")
    return best[1], best[2]


def select_gcv(X, y, weights=None, penalty=None, grid=None, **kw):
    return select_smoothing(X, y, weights, penalty, grid, criterion="gcv", **kw)


def scaled_penalty(X, S, weights=None) -> np.ndarray:
    """Rescale ``S`` to the size of ``X'WX`` so multiplier grids are unit-free.

    Only the penalised columns enter the norm, so badly scaled parametric
    covariates do not distort the smoothing grid.
    """
    X = np.asarray(X, dtype=float)
    S = np.asarray(S, dtype=float)
    ns = np.linalg.norm(S)
    if ns == 0:
        return S
    idx = np.flatnonzero(np.any(S != 0, axis=0))
    w = np.ones(len(X)) if weights is None else np.asarray(weights)
    Xs = X[:, idx]
    xtwx = Xs.T @ (w[:, None] * Xs)
    return S * (np.linalg.norm(xtwx) / ns)


@dataclass
class SelectionStep:
    dropped: str | None
    aic: float
    terms: list


def backward_select(X, y, terms: dict, weights=None, protected=("Intercept",),
                    penalty=None, lam: float = 0.0, names=None, **kw):
    """Backward elimination of whole terms by AIC.

    ``terms`` maps a term name to its column indices. At each step the term
    whose removal lowers AIC the most is dropped; the loop stops when no
    removal lowers it. Equal AIC keeps the term. Returns the list of steps,
    the last of which holds the selected terms.
    """
    X = np.asarray(X, dtype=float)
    names = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]
    S = None if penalty is None else np.asarray(penalty, dtype=float)

    def fit_terms(active):
        cols = sorted(c for t in active for c in terms[t])
        sub_S = None if S is None else S[np.ix_(cols, cols)]
        return fit_poisson(X[:, cols], y, weights, penalty=sub_S, lam=lam,
                           names=[names[c] for c in cols], **kw)

    active = list(terms)
    current = fit_terms(active).aic
    steps = [SelectionStep(None, current, list(active))]
    while True:
        candidates = []
        for t in active:
            if t in protected:
                continue
            rest = [u for u in active if u != t]
            if not rest:
                continue
            candidates.append((fit_terms(rest).aic, t))
        if not candidates:
            break
        best_aic, best_term = min(candidates, key=lambda c: c[0])
        if not best_aic < current:
            break
        active = [u for u in active if u != best_term]
        current = best_aic
        steps.append(SelectionStep(best_term, current, list(active)))
    return steps
