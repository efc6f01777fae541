"""Planar geometry: observation windows and spatio-temporal point patterns.

Coordinates are planar kilometres. A :class:`Window` is a union of simple
polygons (shells) minus holes; points on any boundary count as inside.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidGeometryError, InvalidInputError


def _as_ring(coords) -> np.ndarray:
    ring = np.asarray(coords, dtype=float)
    if ring.ndim != 2 or ring.shape[1] != 2:
        raise InvalidGeometryError(f"ring must be an (k, 2) array, got shape {ring.shape}")
    if len(ring) > 1 and np.array_equal(ring[0], ring[-1]):
        ring = ring[:-1]
    if len(ring) < 3:
        raise InvalidGeometryError(f"degenerate ring with {len(ring)} vertices")
    if not np.all(np.isfinite(ring)):
        raise InvalidGeometryError("ring has non-finite vertices")
    return ring


def signed_area(ring: np.ndarray) -> float:
    """Shoelace area, positive for counter-clockwise rings."""
    x, y = ring[:, 0], ring[:, 1]
    # centring first keeps the cross products small for rings far from the origin
    x = x - x.mean()
    y = y - y.mean()
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _segments_cross(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
    d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
    return d1 * d2 < 0 and d3 * d4 < 0


def _is_simple(ring: np.ndarray) -> bool:
    # O(k^2); only used at construction on small rings
    k = len(ring)
    if k > 400:
        return True
    for i in range(k):
        a, b = ring[i], ring[(i + 1) % k]
        for j in range(i + 2, k):
            if i == 0 and j == k - 1:
                continue
            if _segments_cross(a, b, ring[j], ring[(j + 1) % k]):
                return False
    return True


def ring_contains(ring: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Even-odd test of points against one ring.

    Returns ``(inside, on_boundary)`` boolean arrays. ``inside`` is the raw
    crossing parity and is unreliable exactly on the boundary, which is why
    the second array is reported separately.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shape = x.shape
    x, y = x.ravel(), y.ravel()
    inside = np.zeros(x.shape, dtype=bool)
    on_edge = np.zeros(x.shape, dtype=bool)
    ax, ay = ring[:, 0], ring[:, 1]
    bx, by = np.roll(ax, -1), np.roll(ay, -1)
    tol = 1e-12 * max(np.ptp(ax), np.ptp(ay), 1.0)
    seg = np.maximum(np.hypot(bx - ax, by - ay), 1e-300)
    lox, hix = np.minimum(ax, bx) - tol, np.maximum(ax, bx) + tol
    loy, hiy = np.minimum(ay, by) - tol, np.maximum(ay, by) + tol
    # horizontal bands: a point only meets edges whose y-span covers it
    ymin, ymax = float(loy.min()), float(hiy.max())
    nb = int(np.clip(len(ring) // 4, 1, 512))
    bh = (ymax - ymin) / nb or 1.0
    pb = np.floor((y - ymin) / bh).astype(np.int64)
    live = (y >= ymin) & (y <= ymax)
    pb = np.clip(pb, 0, nb - 1)
    e0 = np.clip(np.floor((loy - ymin) / bh).astype(np.int64), 0, nb - 1)
    e1 = np.clip(np.floor((hiy - ymin) / bh).astype(np.int64), 0, nb - 1)
    order = np.argsort(pb[live], kind="stable")
    pts = np.flatnonzero(live)[order]
    bounds = np.searchsorted(pb[pts], np.arange(nb + 1))
    for b in range(nb):
        idx = pts[bounds[b]:bounds[b + 1]]
        if idx.size == 0:
            continue
        e = np.flatnonzero((e0 <= b) & (e1 >= b))
        if e.size == 0:
            continue
        eax, eay, ebx, eby = ax[e], ay[e], bx[e], by[e]
        step = max(1, 2_000_000 // e.size)
        for s in range(0, idx.size, step):
            k = idx[s:s + step]
            px, py = x[k, None], y[k, None]
            crosses = (eay > py) != (eby > py)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = eax + (py - eay) * (ebx - eax) / (eby - eay)
            inside[k] = np.count_nonzero(crosses & (px < xint), axis=1) % 2 == 1
            cross = (ebx - eax) * (py - eay) - (eby - eay) * (px - eax)
            hit = ((np.abs(cross) <= tol * seg[e]) & (px >= lox[e]) & (px <= hix[e])
                   & (py >= loy[e]) & (py <= hiy[e]))
            on_edge[k] = hit.any(axis=1)
    return inside.reshape(shape), on_edge.reshape(shape)


def _clip_ring_halfplane(ring: np.ndarray, axis: int, bound: float, keep_below: bool):
    """One Sutherland-Hodgman pass, vectorised over the ring's edges."""
    if len(ring) == 0:
        return ring
    v = ring[:, axis]
    ins = v <= bound if keep_below else v >= bound
    nxt = np.roll(ring, -1, axis=0)
    ins_n = np.roll(ins, -1)
    dv = nxt[:, axis] - v
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(dv != 0, (bound - v) / dv, 0.0)
    inter = ring + frac[:, None] * (nxt - ring)
    inter[:, axis] = bound
    # per edge: up to two output vertices (intersection, then next vertex)
    out = np.empty((len(ring), 2, 2))
    out[:, 0] = inter
    out[:, 1] = nxt
    keep = np.zeros((len(ring), 2), dtype=bool)
    keep[:, 0] = ins != ins_n
    keep[:, 1] = ins_n
    return out[keep]


def clip_ring_to_rect(ring: np.ndarray, xmin, ymin, xmax, ymax) -> np.ndarray:
    """Clip a (possibly concave) ring to an axis-aligned rectangle.

    Degenerate zero-width bridges may appear in the output for concave
    rings; they carry no area, so shoelace areas of the result are exact.
    """
    out = ring
    for axis, bound, below in ((0, xmin, False), (0, xmax, True), (1, ymin, False), (1, ymax, True)):
        out = _clip_ring_halfplane(out, axis, bound, below)
        if len(out) == 0:
            break
    return out


@dataclass(frozen=True)
class Window:
    """Polygonal observation region: union of shells minus holes.

    Shells are stored counter-clockwise and holes clockwise regardless of
    the orientation they were supplied in.
    """

    shells: tuple
    holes: tuple = ()
    area: float = field(init=False)
    bbox: tuple = field(init=False)

    def __post_init__(self):
        shells = tuple(_as_ring(r) for r in self.shells)
        holes = tuple(_as_ring(r) for r in self.holes)
        if not shells:
            raise InvalidGeometryError("window needs at least one shell")
        for ring in shells + holes:
            if not _is_simple(ring):
                raise InvalidGeometryError("ring is self-intersecting")
        shells = tuple(r if signed_area(r) > 0 else r[::-1].copy() for r in shells)
        holes = tuple(r if signed_area(r) < 0 else r[::-1].copy() for r in holes)
        for ring in shells + holes:
            ring.setflags(write=False)
        area = sum(signed_area(r) for r in shells) + sum(signed_area(r) for r in holes)
        if not area > 0:
            raise InvalidGeometryError(f"window area must be positive, got {area}")
        allpts = np.vstack(shells)
        bbox = (float(allpts[:, 0].min()), float(allpts[:, 1].min()),
                float(allpts[:, 0].max()), float(allpts[:, 1].max()))
        object.__setattr__(self, "shells", shells)
        object.__setattr__(self, "holes", holes)
        object.__setattr__(self, "area", float(area))
        object.__setattr__(self, "bbox", bbox)

    @classmethod
    def rectangle(cls, x0, y0, x1, y1) -> "Window":
        return cls(shells=([(x0, y0), (x1, y0), (x1, y1), (x0, y1)],))

    @property
    def rings(self) -> tuple:
        return self.shells + self.holes

    @property
    def diameter(self) -> float:
        x0, y0, x1, y1 = self.bbox
        return float(np.hypot(x1 - x0, y1 - y0))

    def contains(self, x, y) -> np.ndarray:
        """Vectorised membership; boundary points are inside."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x0, y0, x1, y1 = self.bbox
        result = np.zeros(np.broadcast(x, y).shape, dtype=bool)
        x, y = np.broadcast_arrays(x, y)
        cand = (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
        if not cand.any():
            return result
        cx, cy = x[cand], y[cand]
        in_shell = np.zeros(cx.shape, dtype=bool)
        for ring in self.shells:
            inside, edge = ring_contains(ring, cx, cy)
            in_shell |= inside | edge
        in_hole = np.zeros(cx.shape, dtype=bool)
        for ring in self.holes:
            inside, edge = ring_contains(ring, cx, cy)
            in_hole |= inside & ~edge
        result[cand] = in_shell & ~in_hole
        return result

    def contains_point(self, x: float, y: float) -> bool:
        return bool(self.contains(np.array([x]), np.array([y]))[0])

    def clip_area(self, xmin, ymin, xmax, ymax) -> float:
        """Area of the intersection of the window with a rectangle."""
        total = 0.0
        for ring in self.rings:
            rx, ry = ring[:, 0], ring[:, 1]
            if rx.max() < xmin or rx.min() > xmax or ry.max() < ymin or ry.min() > ymax:
                continue
            clipped = clip_ring_to_rect(ring, xmin, ymin, xmax, ymax)
            if len(clipped) >= 3:
                total += signed_area(clipped)
        return total

    def to_geojson(self) -> dict:
        polys = [[_close(s).tolist()] for s in self.shells]
        # holes are attached to the first shell that contains them
        for h in self.holes:
            for i, s in enumerate(self.shells):
                inside, edge = ring_contains(s, h[:1, 0], h[:1, 1])
                if inside[0] or edge[0]:
                    polys[i].append(_close(h).tolist())
                    break
            else:
                polys[0].append(_close(h).tolist())
        return {"type": "MultiPolygon", "coordinates": polys}


def _close(ring):
    return np.vstack([ring, ring[:1]])


def area(w: Window) -> float:
    return w.area


def contains(w: Window, x: float, y: float) -> bool:
    return w.contains_point(x, y)


def window_from_geojson(obj: dict) -> Window:
    """Build a window from a GeoJSON geometry, Feature or FeatureCollection."""
    kind = obj.get("type")
    if kind == "FeatureCollection":
        polys = []
        for feat in obj["features"]:
            polys.extend(_polygons_of(feat["geometry"]))
    elif kind == "Feature":
        polys = _polygons_of(obj["geometry"])
    else:
        polys = _polygons_of(obj)
    shells = [p[0] for p in polys]
    holes = [h for p in polys for h in p[1:]]
    return Window(shells=tuple(shells), holes=tuple(holes))


def _polygons_of(geom: dict) -> list:
    if geom["type"] == "Polygon":
        return [geom["coordinates"]]
    if geom["type"] == "MultiPolygon":
        return list(geom["coordinates"])
    raise InvalidGeometryError(f"unsupported geometry type {geom['type']!r}")


def load_window(path) -> Window:
    with open(Path(path)) as fh:
        return window_from_geojson(json.load(fh))


def save_window(w: Window, path) -> None:
    with open(Path(path), "w") as fh:
        json.dump(w.to_geojson(), fh)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class STPointPattern:
    """Events ``(x_i, y_i, t_i)`` inside ``window`` x ``interval``.

    ``marks`` carries per-event attributes (e.g. FIRMS brightness) untouched.
    """

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    window: Window
    interval: tuple = (0.0, 1.0)
    marks: dict = field(default_factory=dict)

    def __post_init__(self):
        x, y, t = _frozen(self.x).ravel(), _frozen(self.y).ravel(), _frozen(self.t).ravel()
        if not (len(x) == len(y) == len(t)):
            raise InvalidInputError("x, y and t must have equal length")
        t0, t1 = float(self.interval[0]), float(self.interval[1])
        if not t1 > t0:
            raise InvalidInputError(f"interval must have positive length, got {(t0, t1)}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(t))):
            raise InvalidInputError("non-finite coordinates in pattern")
        bad_t = np.flatnonzero((t < t0) | (t > t1))
        if bad_t.size:
            raise InvalidInputError(f"{bad_t.size} points outside interval, first index {bad_t[0]}")
        bad_u = np.flatnonzero(~self.window.contains(x, y))
        if bad_u.size:
            raise InvalidInputError(f"{bad_u.size} points outside window, first index {bad_u[0]}")
        if len(x):
            triples = np.column_stack([x, y, t])
            if len(np.unique(triples, axis=0)) != len(triples):
                raise InvalidInputError("duplicate (x, y, t) events")
        marks = {}
        for k, v in self.marks.items():
            v = np.asarray(v)
            if len(v) != len(x):
                raise InvalidInputError(f"mark {k!r} has wrong length")
            v = v.copy()
            v.setflags(write=False)
            marks[k] = v
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "interval", (t0, t1))
        object.__setattr__(self, "marks", marks)

    @property
    def n(self) -> int:
        return len(self.x)

    def __len__(self):
        return self.n

    @property
    def duration(self) -> float:
        return self.interval[1] - self.interval[0]


def count_in(pat: STPointPattern, region: Window | None = None, interval=None) -> int:
    """Number of events with location in ``region`` and time in ``interval``.

    ``None`` means the pattern's own window or interval.
    """
    keep = np.ones(pat.n, dtype=bool)
    if region is not None:
        keep &= region.contains(pat.x, pat.y)
    if interval is not None:
        keep &= (pat.t >= interval[0]) & (pat.t <= interval[1])
    return int(keep.sum())
