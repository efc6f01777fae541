"""Separable spatio-temporal intensity and simulation by thinning."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundViolationError, DegenerateComponentError, InvalidInputError, OutOfRangeError
from .geom import STPointPattern, Window
from .quadrature import QuadratureScheme


@dataclass(frozen=True)
class SeparableIntensity:
    """``lambda(u, t) = lambda_s(u) lambda_t(day(t)) / norm``.

    ``spatial`` is a vectorised function of ``(x, y)``; the temporal part is
    a daily rate series. ``norm`` makes the integral over ``W x T`` equal to
    ``n``, the temporal integral being the day sum.
    """

    spatial: object
    days: np.ndarray
    rates: np.ndarray
    norm: float
    n: int
    window: Window
    interval: tuple
    spatial_integral: float

    def temporal(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        d = np.floor(t).astype(np.int64)
        # the closing instant of the interval belongs to the last day
        d = np.where(t >= self.interval[1], self.days[-1], d)
        idx = np.searchsorted(self.days, d)
        idx = np.clip(idx, 0, len(self.days) - 1)
        if np.any(self.days[idx] != d):
            raise OutOfRangeError("time outside the fitted days")
        return self.rates[idx]

    def __call__(self, x, y, t) -> np.ndarray:
        return evaluate(self, x, y, t)

    @property
    def total(self) -> float:
        """Integral of the normalised intensity over ``W x T``."""
        return self.spatial_integral * float(self.rates.sum()) / self.norm


def _spatial_parts(spatial, scheme):
    # a fitted SpatialModelFit, or a plain function paired with a scheme
    if hasattr(spatial, "intensity") and hasattr(spatial, "scheme"):
        return spatial.intensity, spatial.scheme
    if scheme is None:
        raise InvalidInputError("a quadrature scheme is needed to integrate a raw spatial function")
    return spatial, scheme


def _temporal_parts(temporal):
    if hasattr(temporal, "series") and hasattr(temporal, "fitted"):
        return np.asarray(temporal.series.day), np.asarray(temporal.fitted, dtype=float)
    days, rates = temporal
    return np.asarray(days), np.asarray(rates, dtype=float)


def combine(spatial, temporal, n: int, scheme: QuadratureScheme | None = None,
            interval=None) -> SeparableIntensity:
    """Normalise the product of separately fitted intensities to ``n`` events.

    ``temporal`` is a fitted temporal model or a ``(days, rates)`` pair.
    """
    fn, scheme = _spatial_parts(spatial, scheme)
    days, rates = _temporal_parts(temporal)
    if len(days) == 0 or np.any(np.diff(days) <= 0):
        raise InvalidInputError("days must be strictly increasing")
    vals = np.asarray(fn(scheme.x, scheme.y), dtype=float)
    if not np.all(np.isfinite(vals)) or not np.all(np.isfinite(rates)):
        raise DegenerateComponentError("non-finite component values")
    s_int = float(np.dot(scheme.weights, vals))
    t_int = float(rates.sum())
    if not (s_int > 0 and t_int > 0):
        raise DegenerateComponentError(f"zero component integral (spatial {s_int}, temporal {t_int})")
    if not n > 0:
        raise DegenerateComponentError("normalising to zero events")
    if interval is None:
        interval = (float(days[0]), float(days[-1]) + 1.0)
    return SeparableIntensity(
        spatial=fn, days=days, rates=rates, norm=s_int * t_int / n, n=int(n),
        window=scheme.window, interval=(float(interval[0]), float(interval[1])),
        spatial_integral=s_int,
    )


def evaluate(si: SeparableIntensity, x, y, t) -> np.ndarray:
    """Rate per km^2 per day at ``(x, y, t)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any((t < si.interval[0]) | (t > si.interval[1])):
        raise OutOfRangeError("time outside the study interval")
    if not np.all(si.window.contains(x, y)):
        raise OutOfRangeError("location outside the window")
    return np.asarray(si.spatial(x, y), dtype=float) * si.temporal(t) / si.norm


def simulate_thinning(intensity, window: Window, interval, lambda_max: float,
                      rng: np.random.Generator) -> STPointPattern:
    """Inhomogeneous Poisson pattern by thinning a homogeneous one.

    ``intensity(x, y, t)`` must be vectorised and bounded by ``lambda_max``;
    a proposal where it exceeds the bound raises ``BoundViolationError``.
    Proposals are drawn on the window's bbox and clipped to the window.
    """
    if not lambda_max >= 0:
        raise InvalidInputError("lambda_max must be non-negative")
    t0, t1 = float(interval[0]), float(interval[1])
    x0, y0, x1, y1 = window.bbox
    volume = (x1 - x0) * (y1 - y0) * (t1 - t0)
    count = rng.poisson(lambda_max * volume)
    px = rng.uniform(x0, x1, count)
    py = rng.uniform(y0, y1, count)
    pt = rng.uniform(t0, t1, count)
    u = rng.uniform(0.0, 1.0, count)
    inside = window.contains(px, py)
    px, py, pt, u = px[inside], py[inside], pt[inside], u[inside]
    if len(px):
        lam = np.broadcast_to(np.asarray(intensity(px, py, pt), dtype=float), px.shape)
        if np.any(lam > lambda_max * (1 + 1e-12)) or np.any(~np.isfinite(lam)):
            worst = float(np.nanmax(np.where(np.isfinite(lam), lam, np.inf)))
            raise BoundViolationError(f"intensity {worst:.6g} exceeds bound {lambda_max:.6g}")
        keep = u * lambda_max < lam
        px, py, pt = px[keep], py[keep], pt[keep]
    return STPointPattern(px, py, pt, window, (t0, t1))
