"""FIRMS-style fire CSV ingestion and the declared planar projection."""
from __future__ import annotations

import calendar
import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyPatternError, InvalidInputError
from .geom import STPointPattern, Window

log = logging.getLogger(__name__)

REQUIRED = ("latitude", "longitude", "acq_date", "acq_time")
KM_PER_DEG_LAT = 110.574
KM_PER_DEG_LON_EQUATOR = 111.320


@dataclass(frozen=True)
class Projector:
    """Affine lon/lat -> km map: ``x = kx (lon - lon0)``, ``y = ky (lat - lat0)``."""

    lon0: float
    lat0: float
    kx: float
    ky: float

    @classmethod
    def local(cls, lon0: float, lat0: float) -> "Projector":
        """Equirectangular scale factors at the reference latitude."""
        return cls(lon0, lat0, KM_PER_DEG_LON_EQUATOR * math.cos(math.radians(lat0)), KM_PER_DEG_LAT)

    @classmethod
    def from_dict(cls, d: dict) -> "Projector":
        if "kx" in d and "ky" in d:
            return cls(float(d["lon0"]), float(d["lat0"]), float(d["kx"]), float(d["ky"]))
        return cls.local(float(d["lon0"]), float(d["lat0"]))

    def __call__(self, lon, lat):
        lon = np.asarray(lon, dtype=float)
        lat = np.asarray(lat, dtype=float)
        return self.kx * (lon - self.lon0), self.ky * (lat - self.lat0)

    def inverse(self, x, y):
        return self.lon0 + np.asarray(x, dtype=float) / self.kx, self.lat0 + np.asarray(y, dtype=float) / self.ky


@dataclass(frozen=True)
class FireRecord:
    latitude: float
    longitude: float
    acq_date: dt.date
    acq_time: int

    def __post_init__(self):
        if not -90 <= self.latitude <= 90:
            raise InvalidInputError(f"latitude {self.latitude} out of range")
        if not -180 <= self.longitude <= 180:
            raise InvalidInputError(f"longitude {self.longitude} out of range")
        hour, minute = divmod(int(self.acq_time), 100)
        if not (0 <= hour < 24 and 0 <= minute < 60):
            raise InvalidInputError(f"acq_time {self.acq_time} is not HHMM")

    @property
    def hour(self) -> float:
        hour, minute = divmod(int(self.acq_time), 100)
        return hour + minute / 60.0

    def day_time(self, year: int) -> float:
        """Days since 1 January of ``year`` plus the hour fraction."""
        return (self.acq_date - dt.date(year, 1, 1)).days + self.hour / 24.0


def parse_acq_time(text: str) -> int:
    s = text.strip().replace(":", "")
    if not s.isdigit() or len(s) > 4:
        raise InvalidInputError(f"unparseable acq_time {text!r}")
    return int(s)


def parse_record(row: dict) -> FireRecord:
    return FireRecord(
        latitude=float(row["latitude"]),
        longitude=float(row["longitude"]),
        acq_date=dt.date.fromisoformat(row["acq_date"].strip()),
        acq_time=parse_acq_time(row["acq_time"]),
    )


def ingest_fires(path, projector: Projector, window: Window, year: int | None = None,
                 interval=None) -> STPointPattern:
    """Read a fire CSV into a pattern in km and fractional days.

    Records outside the window or interval are dropped, as are repeated
    ``(x, y, t)`` events; both are logged. Extra columns become marks.
    """
    records, extras = [], []
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyPatternError(f"{path}: empty file")
        lower = {f: f.strip().lower() for f in reader.fieldnames}
        missing = set(REQUIRED) - set(lower.values())
        if missing:
            raise InvalidInputError(f"{path}: missing columns {sorted(missing)}")
        mark_cols = [lower[f] for f in reader.fieldnames if lower[f] not in REQUIRED]
        for lineno, raw in enumerate(reader, start=2):
            row = {lower[k]: v for k, v in raw.items() if k is not None}
            try:
                records.append(parse_record(row))
            except (ValueError, TypeError, KeyError, AttributeError) as exc:
                raise InvalidInputError(f"{path}:{lineno}: {exc}") from None
            extras.append([row.get(c) for c in mark_cols])
    if not records:
        raise EmptyPatternError(f"{path}: no fire records")
    if year is None:
        year = records[0].acq_date.year
    if interval is None:
        interval = (0.0, 366.0 if calendar.isleap(year) else 365.0)
    lon = np.array([r.longitude for r in records])
    lat = np.array([r.latitude for r in records])
    t = np.array([r.day_time(year) for r in records])
    x, y = projector(lon, lat)
    keep = window.contains(x, y)
    n_out = int((~keep).sum())
    in_time = (t >= interval[0]) & (t <= interval[1])
    n_late = int((keep & ~in_time).sum())
    keep &= in_time
    seen, dup = set(), 0
    for k in np.flatnonzero(keep):
        key = (x[k], y[k], t[k])
        if key in seen:
            keep[k] = False
            dup += 1
        else:
            seen.add(key)
    if n_out:
        log.info("dropped %d records outside the window", n_out)
    if n_late:
        log.info("dropped %d records outside the study interval", n_late)
    if dup:
        log.info("dropped %d duplicate records", dup)
    if not keep.any():
        raise EmptyPatternError(f"{path}: every record was dropped")
    marks = {}
    for j, c in enumerate(mark_cols):
        col = [extras[k][j] for k in np.flatnonzero(keep)]
        try:
            marks[c] = np.array(col, dtype=float)
        except (TypeError, ValueError):
            marks[c] = np.array(col, dtype=object)
    return STPointPattern(x[keep], y[keep], t[keep], window, interval, marks)


def write_pattern_csv(pat: STPointPattern, path, projector: Projector, year: int) -> None:
    """Write events in the fire CSV schema, with exact km/day columns appended."""
    lon, lat = projector.inverse(pat.x, pat.y)
    base = dt.date(year, 1, 1)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["latitude", "longitude", "acq_date", "acq_time", "x", "y", "t"])
        for la, lo, x, y, t in zip(lat, lon, pat.x, pat.y, pat.t):
            day = int(math.floor(t))
            minutes = int(math.floor((t - day) * 1440))
            date = base + dt.timedelta(days=day)
            w.writerow([repr(float(la)), repr(float(lo)), date.isoformat(),
                        f"{minutes // 60:02d}{minutes % 60:02d}",
                        repr(float(x)), repr(float(y)), repr(float(t))])
