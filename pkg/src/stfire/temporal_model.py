"""Daily-count Poisson GAM: parametric climate terms plus a P-spline in time."""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import glm
from .basis import PSplineBasis, sum_to_zero
from .errors import InvalidInputError, MissingDayError, OutOfRangeError
from .geom import STPointPattern
from .raster import kelvin_to_celsius

DEFAULT_LAMBDA_GRID = tuple(10.0 ** np.arange(-6.0, 6.5, 0.5))
KELVIN_VARIABLES = ("t2m", "d2m", "skt", "stl1", "stl2", "stl3", "stl4")
SMOOTH_TERM = "s(t)"


def days_since_year_start(when, year: int | None = None) -> np.ndarray:
    """Fractional days since 1 January of ``year`` (default: each stamp's year)."""
    ts = pd.to_datetime(pd.Series(np.atleast_1d(when)))
    if year is None:
        base = pd.to_datetime(ts.dt.year.astype(str) + "-01-01")
    else:
        base = pd.Timestamp(dt.date(int(year), 1, 1))
    return ((ts - base) / pd.Timedelta(days=1)).to_numpy(dtype=float)


@dataclass(frozen=True)
class TemporalSeries:
    """One row per day: event count plus daily covariates."""

    day: np.ndarray
    count: np.ndarray
    covariates: dict = field(default_factory=dict)
    aggregation: dict = field(default_factory=dict)

    def __post_init__(self):
        day = np.asarray(self.day, dtype=np.int64)
        count = np.asarray(self.count, dtype=float)
        if len(day) != len(count):
            raise InvalidInputError("day and count lengths differ")
        if len(day) and np.any(np.diff(day) != 1):
            raise InvalidInputError("days must be contiguous and increasing")
        if np.any(count < 0) or not np.all(np.isfinite(count)):
            raise InvalidInputError("counts must be finite and non-negative")
        covs = {}
        for name, v in self.covariates.items():
            v = np.asarray(v, dtype=float)
            if len(v) != len(day):
                raise InvalidInputError(f"covariate {name!r} has wrong length")
            if not np.all(np.isfinite(v)):
                raise InvalidInputError(f"covariate {name!r} has non-finite values")
            v.setflags(write=False)
            covs[name] = v
        for a in (day, count):
            a.setflags(write=False)
        object.__setattr__(self, "day", day)
        object.__setattr__(self, "count", count)
        object.__setattr__(self, "covariates", covs)

    def __len__(self):
        return len(self.day)

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame({"day": self.day, "count": self.count})
        for name, v in self.covariates.items():
            df[name] = v
        return df

    @classmethod
    def from_frame(cls, df: pd.DataFrame, aggregation=None) -> "TemporalSeries":
        covs = {c: df[c].to_numpy(dtype=float) for c in df.columns if c not in ("day", "count")}
        return cls(df["day"].to_numpy(), df["count"].to_numpy(), covs, dict(aggregation or {}))


def write_series_csv(series: TemporalSeries, path) -> None:
    series.to_frame().to_csv(Path(path), index=False, float_format="%.17g", lineterminator="\n")


def read_series_csv(path) -> TemporalSeries:
    return TemporalSeries.from_frame(pd.read_csv(Path(path)))


def aggregate_daily(table: pd.DataFrame, how="max", year: int | None = None,
                    kelvin=None, days=None) -> pd.DataFrame:
    """Spatial mean per time stamp, then daily mean or max per variable.

    ``table`` has a ``time`` column (timestamps, or fractional days since
    1 January), optionally ``cell`` and ``area`` (area-weighted spatial mean),
    and one column per variable. ``how`` is ``"mean"``, ``"max"`` or a dict per
    variable. Variables named in ``kelvin`` (default: the ERA5 temperature
    set) are converted to Celsius. Returns a frame indexed by day.
    """
    df = table.copy()
    if "time" not in df:
        raise InvalidInputError("climate table needs a 'time' column")
    if np.issubdtype(df["time"].dtype, np.number):
        t = df["time"].to_numpy(dtype=float)
    else:
        t = days_since_year_start(df["time"], year)
    df["time"] = t
    variables = [c for c in df.columns if c not in ("time", "cell", "area")]
    if kelvin is None:
        kelvin = [v for v in variables if v in KELVIN_VARIABLES]
    for v in kelvin:
        df[v] = kelvin_to_celsius(df[v].to_numpy(dtype=float))
    if "area" in df:
        wsum = df.groupby("time")["area"].transform("sum")
        for v in variables:
            df[v] = df[v] * df["area"] / wsum
        spatial = df.groupby("time")[variables].sum()
    else:
        spatial = df.groupby("time")[variables].mean()
    spatial["day"] = np.floor(spatial.index.to_numpy(dtype=float)).astype(np.int64)
    hows = how if isinstance(how, dict) else {v: how for v in variables}
    for v, h in hows.items():
        if h not in ("mean", "max"):
            raise InvalidInputError(f"unknown aggregation {h!r} for {v}")
    daily = spatial.groupby("day").agg({v: hows.get(v, "max") for v in variables})
    have = daily.index.to_numpy()
    expected = np.arange(have.min(), have.max() + 1) if days is None else np.asarray(days)
    gaps = sorted(set(expected.tolist()) - set(have.tolist()))
    if gaps:
        raise MissingDayError(f"{len(gaps)} days without observations, first {gaps[:10]}", gaps)
    return daily.loc[expected]


def daily_counts(pat: STPointPattern, days=None):
    """Events per calendar day as ``(days, counts)``.

    Default days cover the pattern's interval; the closing instant counts
    towards the last day.
    """
    t0, t1 = pat.interval
    if days is None:
        days = np.arange(int(np.floor(t0)), int(np.ceil(t1)))
    days = np.asarray(days, dtype=np.int64)
    d = np.floor(pat.t).astype(np.int64)
    d = np.where(pat.t >= t1, days[-1], d)
    counts = np.zeros(len(days), dtype=np.int64)
    idx = np.searchsorted(days, d)
    ok = (idx < len(days)) & (days[np.clip(idx, 0, len(days) - 1)] == d)
    np.add.at(counts, idx[ok], 1)
    return days, counts


@dataclass
class TemporalModelFit:
    fit: glm.FitResult
    basis: PSplineBasis | None
    centering: np.ndarray | None
    covariate_names: list
    series: TemporalSeries
    X: np.ndarray
    penalty: np.ndarray | None = None

    @property
    def fitted(self) -> np.ndarray:
        return self.fit.fitted

    @property
    def deviance_explained(self) -> float:
        return self.fit.deviance_explained

    @property
    def smooth_edf(self) -> float:
        """Effective degrees of freedom of the smooth block alone."""
        if self.basis is None:
            return 0.0
        q = self.centering.shape[1]
        W = self.fit.fitted
        XtWX = self.X.T @ (W[:, None] * self.X)
        F = self.fit.covariance @ XtWX
        return float(np.trace(F[-q:, -q:]))

    def design(self, days, covariates: dict) -> np.ndarray:
        days = np.asarray(days, dtype=float)
        cols = [np.ones(len(days))]
        for name in self.covariate_names:
            if name not in covariates:
                raise InvalidInputError(f"missing covariate {name!r}")
            cols.append(np.asarray(covariates[name], dtype=float))
        X = np.column_stack(cols)
        if self.basis is not None:
            X = np.column_stack([X, self.basis.evaluate(days) @ self.centering])
        return X

    def coefficient_table(self) -> list:
        return self.fit.wald_table(["Intercept"] + list(self.covariate_names))


def fit_temporal(series: TemporalSeries, covariates=None, knots: int = 50, lam: float | None = None,
                 lam_grid=DEFAULT_LAMBDA_GRID, criterion: str = "gcv") -> TemporalModelFit:
    """Poisson GAM of daily counts with a P-spline of the day index.

    ``covariates`` lists the parametric columns (default: all in the series);
    ``knots`` is the number of cubic B-spline functions, 0 for none.
    """
    names = list(series.covariates) if covariates is None else list(covariates)
    for name in names:
        if name not in series.covariates:
            raise InvalidInputError(f"series has no covariate {name!r}")
        if len(np.unique(series.covariates[name])) < 2:
            raise InvalidInputError(f"covariate {name!r} is constant")
    basis = centering = None
    days = series.day.astype(float)
    if knots:
        basis = PSplineBasis(float(days[0]), float(days[-1]), knots)
        centering = sum_to_zero(basis.evaluate(days))
    m = TemporalModelFit(fit=None, basis=basis, centering=centering, covariate_names=names,
                         series=series, X=None)
    X = m.design(days, series.covariates)
    colnames = ["Intercept"] + names
    S = None
    if basis is not None:
        q = centering.shape[1]
        colnames += [f"{SMOOTH_TERM}.{j + 1}" for j in range(q)]
        S = np.zeros((X.shape[1], X.shape[1]))
        S[-q:, -q:] = centering.T @ basis.penalty(2) @ centering
        S = glm.scaled_penalty(X, S, np.full(len(X), max(series.count.mean(), 1e-3)))
    parametric = ["Intercept"] + names
    y = series.count
    if S is None:
        fit = glm.fit_poisson(X, y, names=colnames, parametric=parametric)
    elif lam is not None:
        fit = glm.fit_poisson(X, y, penalty=S, lam=lam, names=colnames, parametric=parametric)
    else:
        _, fit = glm.select_smoothing(X, y, penalty=S, grid=lam_grid, criterion=criterion,
                                      names=colnames, parametric=parametric)
    m.fit, m.X, m.penalty = fit, X, S
    return m


def predict_temporal(m: TemporalModelFit, days=None, covariates: dict | None = None) -> np.ndarray:
    """Fitted daily rates; defaults to the training days and covariates."""
    if days is None:
        days, covariates = m.series.day, m.series.covariates
    covariates = covariates if covariates is not None else {}
    days = np.asarray(days, dtype=float)
    if m.basis is not None and (days.min() < m.basis.t0 or days.max() > m.basis.t1):
        raise OutOfRangeError("prediction days outside the fitted range")
    return np.exp(m.design(days, covariates) @ m.fit.coefficients)


def correlation_matrix(series: TemporalSeries, columns=None):
    """Pearson correlations of counts and covariates.

    Returns ``(frame, undefined)``: zero-variance columns get NaN rows and
    columns and are listed in ``undefined``.
    """
    if len(series) < 3:
        raise InvalidInputError("need at least 3 days")
    df = series.to_frame().drop(columns="day")
    if columns is not None:
        df = df[list(columns)]
    vals = df.to_numpy(dtype=float)
    sd = vals.std(axis=0)
    undefined = [c for c, s in zip(df.columns, sd) if s == 0]
    z = np.where(sd > 0, (vals - vals.mean(axis=0)) / np.where(sd > 0, sd, 1), np.nan)
    corr = (z.T @ z) / len(vals)
    corr = np.clip(corr, -1.0, 1.0)
    np.fill_diagonal(corr, np.where(sd > 0, 1.0, np.nan))
    return pd.DataFrame(corr, index=df.columns, columns=df.columns), undefined
