"""Spatial log-linear intensity model fitted through Berman-Turner quadrature.

The linear predictor is an intercept, numeric raster covariates, dummy
contrasts of categorical rasters against a baseline label, and an optional
thin-plate smooth of the coordinates.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates
from scipy.signal import fftconvolve

from . import glm
from .basis import ThinPlateBasis, farthest_point_knots, sum_to_zero
from .errors import DataCoverageError, InvalidInputError
from .geom import STPointPattern, Window, count_in
from .quadrature import DEFAULT_NGRID, QuadratureScheme, grid_areas, make_scheme
from .raster import GridRaster, sample

log = logging.getLogger(__name__)

DEFAULT_BASELINE = "Artificial surfaces"
DEFAULT_LAMBDA_GRID = tuple(10.0 ** np.arange(-6.0, 4.5, 0.5))
SMOOTH_TERM = "s(x,y)"


def _categorical(r) -> bool:
    return isinstance(r, GridRaster) and r.is_categorical


def _numeric_values(r, x, y, method):
    if isinstance(r, GridRaster):
        return sample(r, x, y, method)
    return np.asarray(r(x, y), dtype=float) * np.ones_like(x)


@dataclass
class SpatialDesign:
    """Everything needed to rebuild design rows at arbitrary locations."""

    covariates: dict
    levels: dict = field(default_factory=dict)
    baselines: dict = field(default_factory=dict)
    basis: ThinPlateBasis | None = None
    centering: np.ndarray | None = None
    method: str = "nearest"

    @property
    def names(self) -> list:
        out = ["Intercept"]
        for name, r in self.covariates.items():
            out += self.levels[name] if _categorical(r) else [name]
        if self.basis is not None:
            out += [f"{SMOOTH_TERM}.{j + 1}" for j in range(self.centering.shape[1])]
        return out

    @property
    def parametric(self) -> list:
        return [n for n in self.names if not n.startswith(SMOOTH_TERM)]

    def terms(self) -> dict:
        """Term name -> column indices, categorical levels grouped."""
        out, j = {"Intercept": [0]}, 1
        for name, r in self.covariates.items():
            width = len(self.levels[name]) if _categorical(r) else 1
            out[name] = list(range(j, j + width))
            j += width
        if self.basis is not None:
            out[SMOOTH_TERM] = list(range(j, j + self.centering.shape[1]))
        return out

    def labels_at(self, name, x, y, raster=None):
        r = raster if raster is not None else self.covariates[name]
        codes = sample(r, x, y, "nearest")
        labels = np.full(codes.shape, None, dtype=object)
        ok = ~np.isnan(codes)
        labels[ok] = [r.categories.get(int(c)) for c in codes[ok]]
        return labels

    def smooth_block(self, x, y) -> np.ndarray:
        return self.basis.smooth_columns(x, y) @ self.centering

    def smooth_penalty(self) -> np.ndarray:
        return self.centering.T @ self.basis.smooth_penalty() @ self.centering

    def build(self, x, y, overrides=None):
        """Design rows at ``(x, y)`` and a mask of rows with missing covariates."""
        overrides = overrides or {}
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        cols = [np.ones_like(x)]
        missing = np.zeros(x.shape, dtype=bool)
        for name, r in self.covariates.items():
            r = overrides.get(name, r)
            if _categorical(r):
                labels = self.labels_at(name, x, y, r)
                missing |= np.array([lab is None for lab in labels], dtype=bool)
                for level in self.levels[name]:
                    cols.append((labels == level).astype(float))
            else:
                v = _numeric_values(r, x, y, self.method)
                missing |= np.isnan(v)
                cols.append(np.nan_to_num(v))
        X = np.column_stack(cols)
        if self.basis is not None:
            X = np.column_stack([X, self.smooth_block(x, y)])
        return X, missing

    def full_penalty(self) -> np.ndarray | None:
        if self.basis is None:
            return None
        p = len(self.names)
        S = np.zeros((p, p))
        q = self.centering.shape[1]
        S[p - q:, p - q:] = self.smooth_penalty()
        return S


@dataclass
class SpatialModelFit:
    fit: glm.FitResult
    scheme: QuadratureScheme
    design: SpatialDesign
    pattern: STPointPattern
    X: np.ndarray
    penalty: np.ndarray | None = None

    @property
    def basis(self):
        return self.design.basis

    @property
    def covariates(self):
        return self.design.covariates

    @property
    def baseline_category(self):
        return next(iter(self.design.baselines.values()), None)

    def linear_predictor(self, x, y, overrides=None) -> np.ndarray:
        X, missing = self.design.build(x, y, overrides)
        eta = X @ self.fit.coefficients
        eta[missing] = np.nan
        return eta

    def intensity(self, x, y, overrides=None) -> np.ndarray:
        return np.exp(self.linear_predictor(x, y, overrides))

    def integral(self) -> float:
        """Quadrature estimate of the expected count over the window."""
        return float(np.dot(self.scheme.weights, self.fit.fitted))

    def coefficient_table(self) -> list:
        return self.fit.wald_table(self.design.parametric)


def _baseline_for(r: GridRaster, present: list, requested: str | None) -> str:
    if requested is not None:
        if requested not in present:
            raise InvalidInputError(f"baseline {requested!r} absent from the quadrature points")
        return requested
    if DEFAULT_BASELINE in present:
        return DEFAULT_BASELINE
    order = _label_order(r)
    return min(present, key=lambda lab: order.get(lab, 0))


def _label_order(r: GridRaster) -> dict:
    order = {}
    for code in sorted(r.categories):
        order.setdefault(r.categories[code], code)
    return order


def fit_spatial(pattern: STPointPattern, covariates: dict | None = None, knots: int = 30,
                ngrid=DEFAULT_NGRID, baseline: dict | None = None, lam: float | None = None,
                lam_grid=DEFAULT_LAMBDA_GRID, criterion: str = "ubre",
                method: str = "nearest") -> SpatialModelFit:
    """Fit ``log lambda(u) = theta' Z(u) + f(u)`` by weighted Poisson regression.

    ``covariates`` maps names to rasters (categorical ones carry a code table)
    or to vectorised functions of ``(x, y)``;
    ``knots = 0`` drops the smooth. With ``lam=None`` the smoothing multiplier
    is picked from ``lam_grid`` by ``criterion``.
    """
    covariates = dict(covariates or {})
    baseline = dict(baseline or {})
    scheme = make_scheme(pattern.x, pattern.y, pattern.window, ngrid)
    design = SpatialDesign(covariates=covariates, method=method)

    # category levels observed at quadrature points
    for name, r in covariates.items():
        if not _categorical(r):
            continue
        labels = design.labels_at(name, scheme.x, scheme.y)
        order = _label_order(r)
        present = sorted({lab for lab in labels if lab is not None}, key=lambda s: order.get(s, 0))
        base = _baseline_for(r, present, baseline.get(name))
        design.baselines[name] = base
        design.levels[name] = [lab for lab in present if lab != base]

    Xp, missing = design.build(scheme.x, scheme.y)
    bad_data = np.flatnonzero(missing & scheme.is_data)
    if bad_data.size:
        pts = [(int(k), float(scheme.x[k]), float(scheme.y[k])) for k in bad_data[:20]]
        raise DataCoverageError(f"{bad_data.size} data points lack covariate values: {pts}", pts)
    if missing.any():
        lost = float(scheme.weights[missing].sum())
        log.warning("dropping %d dummy points without covariates (%.4g of %.4g area)",
                    int(missing.sum()), lost, pattern.window.area)
        keep = ~missing
        scheme = QuadratureScheme(scheme.x[keep], scheme.y[keep], scheme.is_data[keep],
                                  scheme.weights[keep], scheme.window, scheme.ngrid)
        Xp = Xp[keep]

    if knots:
        dummies = ~scheme.is_data
        design.basis = ThinPlateBasis(farthest_point_knots(scheme.x[dummies], scheme.y[dummies], knots))
        design.centering = sum_to_zero(design.basis.smooth_columns(scheme.x, scheme.y))
        Xp = np.column_stack([Xp, design.smooth_block(scheme.x, scheme.y)])

    names = design.names
    y = scheme.pseudo_response
    w = scheme.weights
    S = design.full_penalty()
    if S is not None:
        S = glm.scaled_penalty(Xp, S, w * max(pattern.n, 1) / pattern.window.area)
    if S is None:
        fit = glm.fit_poisson(Xp, y, w, names=names, parametric=design.parametric)
    elif lam is not None:
        fit = glm.fit_poisson(Xp, y, w, penalty=S, lam=lam, names=names, parametric=design.parametric)
    else:
        _, fit = glm.select_smoothing(Xp, y, w, penalty=S, grid=lam_grid, criterion=criterion,
                                      names=names, parametric=design.parametric)
    return SpatialModelFit(fit=fit, scheme=scheme, design=design, pattern=pattern, X=Xp, penalty=S)


def predict_intensity(m: SpatialModelFit, ngrid=None, overrides=None) -> GridRaster:
    """Fitted intensity at cell centres over the window's bbox; NaN outside."""
    nx, ny = ngrid if ngrid is not None else m.scheme.ngrid
    x0, y0, x1, y1 = m.scheme.window.bbox
    grid = GridRaster(np.zeros((ny, nx)), x0, y0, (x1 - x0) / nx, (y1 - y0) / ny)
    cx, cy = grid.cell_centers()
    vals = np.full(cx.shape, np.nan)
    inside = m.scheme.window.contains(cx, cy)
    vals[inside] = m.intensity(cx[inside], cy[inside], overrides)
    return grid.with_values(vals)


def raw_residual(m: SpatialModelFit, region: Window | None = None) -> float:
    """Observed minus fitted count in ``region`` (default: whole window)."""
    s = m.scheme
    if region is None:
        return m.pattern.n - m.integral()
    inside = region.contains(s.x, s.y)
    expected = float(np.dot(s.weights[inside], m.fit.fitted[inside]))
    return count_in(m.pattern, region) - expected


# ------------------------------------------------------------ kernel smoothing

class KernelGrid:
    """Pixel grid over the window bbox used for Gaussian smoothing.

    Point masses are binned into pixels and convolved with a Gaussian; the
    edge correction divides by the equally smoothed window area, so both the
    kernel estimate and the smoothed fitted intensity share one discretisation.
    """

    def __init__(self, scheme: QuadratureScheme, ngrid=None):
        self.scheme = scheme
        self.nx, self.ny = ngrid if ngrid is not None else scheme.ngrid
        self.x0, self.y0, x1, y1 = scheme.window.bbox
        self.hx = (x1 - self.x0) / self.nx
        self.hy = (y1 - self.y0) / self.ny
        self.area_mass = self.mass(scheme.x, scheme.y, scheme.weights)
        grid = self.raster(np.zeros((self.ny, self.nx)))
        cx, cy = grid.cell_centers()
        self.inside = scheme.window.contains(cx, cy)[::-1] & (self.area_mass > 0)

    @property
    def cell_size(self) -> float:
        return min(self.hx, self.hy)

    def mass(self, x, y, w=None) -> np.ndarray:
        """Binned masses, array indexed ``[row from south, col]``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        w = np.ones_like(x) if w is None else np.asarray(w, dtype=float)
        i = np.clip(np.floor((x - self.x0) / self.hx).astype(np.int64), 0, self.nx - 1)
        j = np.clip(np.floor((y - self.y0) / self.hy).astype(np.int64), 0, self.ny - 1)
        out = np.zeros((self.ny, self.nx))
        np.add.at(out, (j, i), w)
        return out

    def smooth(self, mass, bandwidth) -> np.ndarray:
        if not bandwidth > 0:
            raise InvalidInputError(f"bandwidth must be positive, got {bandwidth}")
        return gaussian_filter(mass, sigma=(bandwidth / self.hy, bandwidth / self.hx),
                               mode="constant", cval=0.0, truncate=4.0)

    def intensity(self, mass, bandwidth) -> np.ndarray:
        """Edge-corrected kernel intensity of ``mass``; NaN outside the window."""
        num = self.smooth(mass, bandwidth)
        den = self.smooth(self.area_mass, bandwidth)
        out = np.full(num.shape, np.nan)
        ok = self.inside & (den > 0)
        out[ok] = num[ok] / den[ok]
        return out

    def raster(self, arr_south_first) -> GridRaster:
        return GridRaster(np.asarray(arr_south_first)[::-1], self.x0, self.y0, self.hx, self.hy)


def kernel_intensity(scheme: QuadratureScheme, x, y, bandwidth, weights=None, ngrid=None) -> GridRaster:
    kg = KernelGrid(scheme, ngrid)
    return kg.raster(kg.intensity(kg.mass(x, y, weights), bandwidth))


def bandwidth_candidates(window: Window, cell_size: float, num: int = 32) -> np.ndarray:
    return np.geomspace(cell_size, window.diameter / 4.0, num)


class SetCovariance:
    """``g(h) = |W  intersect  (W + h)|`` on a pixel grid, by FFT autocorrelation.

    Pixel weights are the exact window area in each pixel; lookups use
    bilinear interpolation of the displacement grid.
    """

    def __init__(self, window: Window, npix: int = 256):
        x0, y0, x1, y1 = window.bbox
        self.hx, self.hy = (x1 - x0) / npix, (y1 - y0) / npix
        self.npix = npix
        frac = grid_areas(window, npix, npix)[0] / (self.hx * self.hy)
        g = fftconvolve(frac, frac[::-1, ::-1]) * self.hx * self.hy
        self.values = np.clip(g, 0.0, None)

    def __call__(self, dx, dy) -> np.ndarray:
        coords = np.vstack([np.asarray(dx, dtype=float) / self.hx + self.npix - 1,
                            np.asarray(dy, dtype=float) / self.hy + self.npix - 1])
        return map_coordinates(self.values, coords, order=1, mode="constant", cval=0.0)


def diggle_criterion(x, y, window: Window, candidates, nbins: int = 4096, npix: int = 256) -> np.ndarray:
    """Berman-Diggle mean-squared-error criterion for a Gaussian kernel.

    For bandwidth ``s`` and ``lam = n/|W|``::

        M(s) = 1/(4 pi s^2 lam)
               + |W|/(n(n-1)) sum_{i != j} e_ij [k_2s2(d_ij) - 2 k_s2(d_ij)]

    where ``k_v(d) = exp(-d^2 / (2v)) / (2 pi v)`` is the isotropic Gaussian
    density with variance ``v`` per axis and ``e_ij = |W| / g(x_j - x_i)`` is
    the translation edge correction from the window's set covariance ``g``.
    This is ``MSE/lam^2`` minus a constant; pair distances are binned to keep
    memory linear.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    cand = np.asarray(candidates, dtype=float)
    n = len(x)
    if n < 2:
        return np.zeros(len(cand))
    gcov = SetCovariance(window, npix)
    # pairs whose overlap falls below one pixel get that pixel's weight
    gmin = gcov.hx * gcov.hy
    bx0, by0, bx1, by1 = window.bbox
    dmax = np.hypot(bx1 - bx0, by1 - by0)
    edges = np.linspace(0.0, dmax, nbins + 1)
    hist = np.zeros(nbins)
    chunk = max(1, 2_000_000 // n)
    for s in range(0, n - 1, chunk):
        xi, yi = x[s:s + chunk, None], y[s:s + chunk, None]
        upper = np.arange(n)[None, :] > np.arange(s, min(s + chunk, n))[:, None]
        ddx = (x[None, :] - xi)[upper]
        ddy = (y[None, :] - yi)[upper]
        e = window.area / np.maximum(gcov(ddx, ddy), gmin)
        hist += np.histogram(np.hypot(ddx, ddy), bins=edges, weights=e)[0]
    mid = 0.5 * (edges[:-1] + edges[1:])
    lam = n / window.area
    out = np.empty(len(cand))
    for i, s in enumerate(cand):
        v1, v2 = s * s, 2 * s * s
        k1 = np.exp(-mid ** 2 / (2 * v1)) / (2 * np.pi * v1)
        k2 = np.exp(-mid ** 2 / (2 * v2)) / (2 * np.pi * v2)
        pair = 2.0 * np.dot(hist, k2 - 2 * k1)
        out[i] = 1.0 / (4 * np.pi * s * s * lam) + window.area / (n * (n - 1)) * pair
    return out


def select_bandwidth(x, y, window: Window, cell_size: float, num: int = 32):
    cand = bandwidth_candidates(window, cell_size, num)
    crit = diggle_criterion(x, y, window, cand)
    return float(cand[int(np.argmin(crit))]), cand, crit


@dataclass
class ResidualField:
    grid: GridRaster
    bandwidth: float
    smoothed_data: GridRaster
    smoothed_fit: GridRaster
    kernel: str = "gaussian"

    def mean_abs(self) -> float:
        v = self.grid.values
        return float(np.nanmean(np.abs(v)))


def smoothed_residuals(m: SpatialModelFit, bandwidth: float | None = None, ngrid=None,
                       pattern: STPointPattern | None = None) -> ResidualField:
    """``s(u) = lam_tilde(u) - lam_dagger(u)`` on the smoothing grid.

    ``pattern`` replaces the fitted pattern as the observed data, which lets
    the fitted model be checked against fresh simulations.
    """
    pat = pattern if pattern is not None else m.pattern
    kg = KernelGrid(m.scheme, ngrid)
    if bandwidth is None:
        bandwidth, _, _ = select_bandwidth(pat.x, pat.y, m.scheme.window, kg.cell_size)
    if not bandwidth > 0:
        raise InvalidInputError(f"bandwidth must be positive, got {bandwidth}")
    data = kg.intensity(kg.mass(pat.x, pat.y), bandwidth)
    fitted = kg.intensity(kg.mass(m.scheme.x, m.scheme.y, m.scheme.weights * m.fit.fitted), bandwidth)
    return ResidualField(grid=kg.raster(data - fitted), bandwidth=float(bandwidth),
                         smoothed_data=kg.raster(data), smoothed_fit=kg.raster(fitted))


def select_backward(pattern: STPointPattern, covariates: dict, knots: int = 30, ngrid=DEFAULT_NGRID,
                    baseline=None, lam: float | None = None, **kw):
    """Backward AIC elimination over covariate terms and the smooth.

    The smoothing multiplier is chosen once on the full model and then held.
    """
    full = fit_spatial(pattern, covariates, knots, ngrid, baseline, lam, **kw)
    terms = full.design.terms()
    steps = glm.backward_select(full.X, full.scheme.pseudo_response, terms, full.scheme.weights,
                                penalty=full.penalty, lam=full.fit.smoothing,
                                names=full.design.names)
    return full, steps
