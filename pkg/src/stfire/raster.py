"""Regular-grid covariates: sampling, Horn slope, ESRI ASCII grid I/O."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, InvalidMethodError

LEVEL1_LABELS = (
    "Artificial surfaces",
    "Agricultural areas",
    "Forest and semi-natural areas",
    "Water bodies",
)


@dataclass(frozen=True)
class GridRaster:
    """Cell values on a regular grid.

    ``values`` has shape ``(nrows, ncols)`` with row 0 the northernmost row,
    as in ESRI ASCII grids. ``(x0, y0)`` is the lower-left corner of the
    lower-left cell. Missing cells are NaN; ``nodata`` is only the sentinel
    used when writing. A categorical raster carries ``categories`` mapping
    integer codes to labels.
    """

    values: np.ndarray
    x0: float
    y0: float
    dx: float
    dy: float
    nodata: float = -9999.0
    categories: dict | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise InvalidInputError("raster values must be 2-D")
        if not (self.dx > 0 and self.dy > 0):
            raise InvalidInputError("cell sizes must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.categories is not None:
            object.__setattr__(self, "categories", {int(k): str(c) for k, c in self.categories.items()})

    @property
    def nrows(self) -> int:
        return self.values.shape[0]

    @property
    def ncols(self) -> int:
        return self.values.shape[1]

    @property
    def is_categorical(self) -> bool:
        return self.categories is not None

    @property
    def extent(self) -> tuple:
        return (self.x0, self.y0, self.x0 + self.ncols * self.dx, self.y0 + self.nrows * self.dy)

    def cell_centers(self):
        """Centre coordinates as two ``(nrows, ncols)`` arrays."""
        xs = self.x0 + (np.arange(self.ncols) + 0.5) * self.dx
        ys = self.y0 + (self.nrows - np.arange(self.nrows) - 0.5) * self.dy
        return np.meshgrid(xs, ys)

    def with_values(self, values) -> "GridRaster":
        return replace(self, values=values)


def sample(r: GridRaster, x, y, method: str = "nearest") -> np.ndarray:
    """Raster values at points; NaN where missing or outside the grid."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    x1 = r.x0 + r.ncols * r.dx
    y1 = r.y0 + r.nrows * r.dy
    inside = (x >= r.x0) & (x <= x1) & (y >= r.y0) & (y <= y1)
    out = np.full(x.shape, np.nan)
    if method == "nearest":
        col = np.clip(np.floor((x - r.x0) / r.dx).astype(np.int64, copy=False), 0, r.ncols - 1)
        rb = np.clip(np.floor((y - r.y0) / r.dy).astype(np.int64, copy=False), 0, r.nrows - 1)
        out[inside] = r.values[r.nrows - 1 - rb[inside], col[inside]]
        return out
    if method != "bilinear":
        raise InvalidMethodError(f"unknown sampling method {method!r}")
    if r.is_categorical:
        raise InvalidMethodError("bilinear sampling is undefined for categorical rasters")
    # positions in cell-centre units, edge half-cells replicate the border
    fx = np.clip((x - r.x0) / r.dx - 0.5, 0, r.ncols - 1)
    fy = np.clip((y - r.y0) / r.dy - 0.5, 0, r.nrows - 1)
    i0 = np.clip(np.floor(fx), 0, max(r.ncols - 2, 0)).astype(np.int64)
    j0 = np.clip(np.floor(fy), 0, max(r.nrows - 2, 0)).astype(np.int64)
    i1 = np.minimum(i0 + 1, r.ncols - 1)
    j1 = np.minimum(j0 + 1, r.nrows - 1)
    wx = fx - i0
    wy = fy - j0
    flip = r.nrows - 1
    v00 = r.values[flip - j0, i0]
    v10 = r.values[flip - j0, i1]
    v01 = r.values[flip - j1, i0]
    v11 = r.values[flip - j1, i1]
    val = (1 - wx) * (1 - wy) * v00 + wx * (1 - wy) * v10 + (1 - wx) * wy * v01 + wx * wy * v11
    out[inside] = val[inside]
    return out


def horn_slope(dem: GridRaster) -> GridRaster:
    """Slope in degrees from a DEM using Horn's 3x3 stencil.

    Neighbours of the centre cell are numbered clockwise from the north-east
    corner::

        A7 A8 A1
        A6  .  A2
        A5 A4 A3

    The east-west gradient is ``((A1 + 2A2 + A3) - (A7 + 2A6 + A5)) / (8 dx)``
    and the north-south one ``((A7 + 2A8 + A1) - (A5 + 2A4 + A3)) / (8 dy)``.
    Altitude must be in the same unit as the cell size. Border cells and cells
    whose neighbourhood touches nodata are NaN.
    """
    if dem.is_categorical:
        raise InvalidInputError("slope requires a numeric DEM")
    if dem.nrows < 3 or dem.ncols < 3:
        raise InvalidInputError(f"DEM must be at least 3x3, got {dem.nrows}x{dem.ncols}")
    z = dem.values
    a7, a8, a1 = z[:-2, :-2], z[:-2, 1:-1], z[:-2, 2:]
    a6, c, a2 = z[1:-1, :-2], z[1:-1, 1:-1], z[1:-1, 2:]
    a5, a4, a3 = z[2:, :-2], z[2:, 1:-1], z[2:, 2:]
    gx = ((a1 + 2 * a2 + a3) - (a7 + 2 * a6 + a5)) / (8 * dem.dx)
    gy = ((a7 + 2 * a8 + a1) - (a5 + 2 * a4 + a3)) / (8 * dem.dy)
    slope = np.degrees(np.arctan(np.hypot(gx, gy)))
    slope[np.isnan(c)] = np.nan
    out = np.full(z.shape, np.nan)
    out[1:-1, 1:-1] = slope
    return replace(dem, values=out, categories=None)


def kelvin_to_celsius(v):
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise InvalidInputError("negative absolute temperature")
    out = v - 273.15
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- ESRI ASCII

_HEADER_KEYS = {"ncols", "nrows", "xllcorner", "yllcorner", "xllcenter", "yllcenter",
                "cellsize", "dx", "dy", "nodata_value"}


def read_ascii_grid(path, categories: dict | None = None) -> GridRaster:
    """Read an ESRI ASCII grid. Rows run north to south."""
    header = {}
    with open(Path(path)) as fh:
        lines = fh.read().split("\n")
    pos = 0
    while pos < len(lines):
        parts = lines[pos].split()
        if not parts:
            pos += 1
            continue
        key = parts[0].lower()
        if key not in _HEADER_KEYS:
            break
        header[key] = float(parts[1])
        pos += 1
    try:
        ncols, nrows = int(header["ncols"]), int(header["nrows"])
    except KeyError as exc:
        raise InvalidInputError(f"{path}: missing header key {exc}") from None
    dx = header.get("dx", header.get("cellsize"))
    dy = header.get("dy", header.get("cellsize"))
    if dx is None or dy is None:
        raise InvalidInputError(f"{path}: missing cellsize")
    if "xllcorner" in header:
        x0, y0 = header["xllcorner"], header["yllcorner"]
    else:
        x0, y0 = header["xllcenter"] - dx / 2, header["yllcenter"] - dy / 2
    data = np.array(" ".join(lines[pos:]).split(), dtype=float)
    if data.size != ncols * nrows:
        raise InvalidInputError(f"{path}: expected {ncols * nrows} values, found {data.size}")
    values = data.reshape(nrows, ncols)
    nodata = header.get("nodata_value", -9999.0)
    values[values == nodata] = np.nan
    return GridRaster(values, x0, y0, dx, dy, nodata=nodata, categories=categories)


def _fmt(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def write_ascii_grid(r: GridRaster, path) -> None:
    lines = [f"ncols {r.ncols}", f"nrows {r.nrows}",
             f"xllcorner {_fmt(r.x0)}", f"yllcorner {_fmt(r.y0)}"]
    if r.dx == r.dy:
        lines.append(f"cellsize {_fmt(r.dx)}")
    else:
        lines += [f"dx {_fmt(r.dx)}", f"dy {_fmt(r.dy)}"]
    lines.append(f"NODATA_value {_fmt(r.nodata)}")
    nd = _fmt(r.nodata)
    for row in r.values:
        lines.append(" ".join(nd if np.isnan(v) else _fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- land use

def read_categories(path) -> dict:
    """Two-column ``code,label`` CSV into a dict."""
    out = {}
    with open(Path(path), newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() == "code":
                continue
            code = int(row[0])
            if code in out:
                raise InvalidInputError(f"{path}: duplicate category code {code}")
            out[code] = row[1].strip()
    return out


def write_categories(categories: dict, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["code", "label"])
        for code in sorted(categories):
            w.writerow([code, categories[code]])


def corine_level1(code: int) -> str:
    """Level-1 CORINE class of a 1-3 digit code, wetlands merged into water."""
    lead = int(str(abs(int(code)))[0])
    if lead in (4, 5):
        return "Water bodies"
    if lead in (1, 2, 3):
        return LEVEL1_LABELS[lead - 1]
    raise InvalidInputError(f"not a CORINE code: {code}")


@dataclass(frozen=True)
class LandUseTable:
    """Mapping from raster codes to one of the four merged level-1 labels."""

    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        labels = {int(k): v for k, v in self.labels.items()}
        unknown = set(labels.values()) - set(LEVEL1_LABELS)
        if unknown:
            raise InvalidInputError(f"labels outside the level-1 set: {sorted(unknown)}")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_categories(cls, categories: dict) -> "LandUseTable":
        """Accept level-1 labels as-is, otherwise derive them from CORINE codes."""
        labels = {}
        for code, label in categories.items():
            if label in LEVEL1_LABELS:
                labels[code] = label
            elif label in ("Wetlands", "Wetlands and water bodies"):
                labels[code] = "Water bodies"
            else:
                labels[code] = corine_level1(code)
        return cls(labels)


def area_shares(r: GridRaster, mask=None) -> dict:
    """Fraction of valid cells per category label (cells are equal-area)."""
    if not r.is_categorical:
        raise InvalidInputError("area shares need a categorical raster")
    v = r.values if mask is None else np.where(mask, r.values, np.nan)
    valid = v[~np.isnan(v)].astype(np.int64)
    counts = {}
    for code, c in zip(*np.unique(valid, return_counts=True)):
        label = r.categories.get(int(code), str(int(code)))
        counts[label] = counts.get(label, 0) + int(c)
    total = sum(counts.values())
    return {k: c / total for k, c in counts.items()}
