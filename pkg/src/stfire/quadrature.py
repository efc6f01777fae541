"""Berman-Turner quadrature with grid-counting weights."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InsufficientDummiesError, InvalidInputError, NumericError
from .geom import Window, clip_ring_to_rect

DEFAULT_NGRID = (128, 128)


@dataclass(frozen=True)
class QuadratureScheme:
    """Data points followed by dummy points, with counting weights.

    ``weights`` sum to the window area; ``pseudo_response`` is ``e_k / a_k``.
    """

    x: np.ndarray
    y: np.ndarray
    is_data: np.ndarray
    weights: np.ndarray
    window: Window
    ngrid: tuple = DEFAULT_NGRID

    def __post_init__(self):
        for name in ("x", "y", "is_data", "weights"):
            a = np.array(getattr(self, name))
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n_data(self) -> int:
        return int(self.is_data.sum())

    @property
    def n_dummy(self) -> int:
        return len(self.x) - self.n_data

    def __len__(self):
        return len(self.x)

    @property
    def pseudo_response(self) -> np.ndarray:
        return self.is_data.astype(float) / self.weights

    @property
    def tile_size(self) -> tuple:
        x0, y0, x1, y1 = self.window.bbox
        return ((x1 - x0) / self.ngrid[0], (y1 - y0) / self.ngrid[1])


def _tile_index(v, lo, step, n):
    return np.clip(np.floor((v - lo) / step).astype(np.int64), 0, n - 1)


def _edges(window: Window):
    a = np.vstack(window.rings)
    b = np.vstack([np.roll(r, -1, axis=0) for r in window.rings])
    return a[:, 0], a[:, 1], b[:, 0], b[:, 1]


def _mean_positive_part(f0, f1):
    """Mean over ``[0, 1]`` of ``max(f, 0)`` for ``f`` linear from ``f0`` to ``f1``."""
    both = (f0 >= 0) & (f1 >= 0)
    mixed = (f0 >= 0) != (f1 >= 0)
    out = np.where(both, 0.5 * (f0 + f1), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        part = np.maximum(f0, f1) ** 2 / (2 * np.abs(f1 - f0))
    return np.where(mixed, part, out)


def tile_areas(window: Window, x0, y0, hx, hy, nx, ny):
    """Exact tile-window overlap areas and a mask of tiles crossed by an edge.

    Uses Green's theorem row by row: for the tile ``[a, b] x [c, d]`` the
    overlap area is the boundary integral of ``clamp(x, a, b) - a`` over the
    parts of the window edges lying in the strip ``c <= y <= d``. Only
    tiles that some edge touches are integrated; the rest are either fully
    inside or fully outside. Returns ``(areas, crossed)``, each ``(nx, ny)``,
    with ``areas`` for crossed tiles only.
    """
    ax, ay, bx, by = _edges(window)
    lo_y, hi_y = np.minimum(ay, by), np.maximum(ay, by)
    a_edges = x0 + np.arange(nx) * hx
    areas = np.zeros((nx, ny))
    crossed = np.zeros((nx, ny), dtype=bool)
    for j in range(ny):
        c, d = y0 + j * hy, y0 + (j + 1) * hy
        sel = np.flatnonzero((hi_y >= c) & (lo_y <= d))
        if sel.size == 0:
            continue
        sax, say, sbx, sby = ax[sel], ay[sel], bx[sel], by[sel]
        dy = sby - say
        flat = dy == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            tc = np.where(flat, 0.0, (c - say) / dy)
            td = np.where(flat, 1.0, (d - say) / dy)
        t0 = np.clip(np.minimum(tc, td), 0.0, 1.0)
        t1 = np.clip(np.maximum(tc, td), 0.0, 1.0)
        px0, py0 = sax + t0 * (sbx - sax), say + t0 * dy
        px1, py1 = sax + t1 * (sbx - sax), say + t1 * dy
        # tiles touched by each clipped piece
        i0 = _tile_index(np.minimum(px0, px1), x0, hx, nx)
        i1 = _tile_index(np.maximum(px0, px1), x0, hx, nx)
        mark = np.zeros(nx + 1, dtype=np.int64)
        np.add.at(mark, i0, 1)
        np.add.at(mark, i1 + 1, -1)
        # a piece lying on a tile's left side may miss that tile's left
        # neighbour; untouched tiles are classified by their centre, which is
        # exact for them either way
        row = np.cumsum(mark[:-1]) > 0
        crossed[:, j] = row
        cols = np.flatnonzero(row)
        if cols.size == 0:
            continue
        live = ~flat & (t1 > t0)
        if not live.any():
            continue
        qx0, qx1, qdy = px0[live][:, None], px1[live][:, None], (py1 - py0)[live][:, None]
        a = a_edges[cols][None, :]
        b = a + hx
        contrib = qdy * (_mean_positive_part(qx0 - a, qx1 - a) - _mean_positive_part(qx0 - b, qx1 - b))
        areas[cols, j] = contrib.sum(axis=0)
    return areas, crossed


def _classify_centres(window: Window, CX, CY, crossed):
    """Centre membership for all tiles, testing one tile per run.

    Along a row of tiles, consecutive tiles that no edge touches are all
    inside or all outside, so only the first of each run is tested; crossed
    tiles are tested individually.
    """
    free = ~crossed.T                        # rows along y, tiles along x
    ny, nx = free.shape
    prev = np.zeros_like(free)
    prev[:, 1:] = free[:, :-1]
    start = free & ~prev
    run = np.cumsum(start.ravel()).reshape(free.shape)
    test = start | ~free
    tj, ti = np.nonzero(test)
    status = window.contains(CX[ti, tj], CY[ti, tj])
    out = np.zeros((ny, nx), dtype=bool)
    out[tj, ti] = status
    run_status = np.zeros(int(run.max()) + 1, dtype=bool)
    starts = start[tj, ti]
    run_status[run[tj[starts], ti[starts]]] = status[starts]
    out[free] = run_status[run[free]]
    return out.T


def _subgrid_points(window: Window, xs, ys, hx, hy, k: int = 3):
    """For each tile with lower-left ``(xs, ys)``, the window point of a
    ``k`` x ``k`` sub-grid closest to the tile centre (NaN if none)."""
    f = (np.arange(k) + 0.5) / k
    fx, fy = [a.ravel() for a in np.meshgrid(f, f, indexing="ij")]
    px = xs[:, None] + fx[None, :] * hx
    py = ys[:, None] + fy[None, :] * hy
    inside = window.contains(px.ravel(), py.ravel()).reshape(px.shape)
    dist = np.where(inside, (fx - 0.5) ** 2 + (fy - 0.5) ** 2, np.inf)
    best = np.argmin(dist, axis=1)
    rows = np.arange(len(xs))
    ok = np.isfinite(dist[rows, best])
    return np.where(ok, px[rows, best], np.nan), np.where(ok, py[rows, best], np.nan)


def _edge_points(window: Window, xs, ys, hx, hy):
    """Window points next to the longest edge piece inside each tile.

    The piece's midpoint is pushed a tiny step along the edge's left normal,
    which points into the window for counter-clockwise shells and clockwise
    holes. Tiles where that fails get NaN.
    """
    ax, ay, bx, by = _edges(window)
    dx, dy = bx - ax, by - ay
    xmin, ymin = xs[:, None], ys[:, None]
    xmax, ymax = xmin + hx, ymin + hy
    tlo = np.zeros((len(xs), len(ax)))
    thi = np.ones((len(xs), len(ax)))
    for lo, hi, a, d in ((xmin, xmax, ax, dx), (ymin, ymax, ay, dy)):
        with np.errstate(divide="ignore", invalid="ignore"):
            t1, t2 = (lo - a) / d, (hi - a) / d
        flat = d == 0
        inside = (a >= lo) & (a <= hi)
        t1 = np.where(flat, np.where(inside, -np.inf, np.inf), t1)
        t2 = np.where(flat, np.where(inside, np.inf, -np.inf), t2)
        tlo = np.maximum(tlo, np.minimum(t1, t2))
        thi = np.minimum(thi, np.maximum(t1, t2))
    length = np.where(thi > tlo, (thi - tlo) * np.hypot(dx, dy), 0.0)
    best = np.argmax(length, axis=1)
    rows = np.arange(len(xs))
    tm = 0.5 * (tlo[rows, best] + thi[rows, best])
    seg = np.hypot(dx[best], dy[best])
    step = 1e-6 * min(hx, hy)
    px = ax[best] + tm * dx[best] - step * dy[best] / seg
    py = ay[best] + tm * dy[best] + step * dx[best] / seg
    ok = ((length[rows, best] > 0) & (px >= xs) & (px <= xs + hx) & (py >= ys) & (py <= ys + hy)
          & window.contains(px, py))
    return np.where(ok, px, np.nan), np.where(ok, py, np.nan)


def _interior_point(window: Window, rect):
    """A point of the window inside ``rect``, found by horizontal scanlines."""
    xmin, ymin, xmax, ymax = rect
    best, best_len = None, 0.0
    for frac in (0.5, 0.25, 0.75, 0.125, 0.375, 0.625, 0.875, 0.0625, 0.9375):
        yy = ymin + frac * (ymax - ymin)
        xs = []
        for ring in window.rings:
            a = ring
            b = np.roll(ring, -1, axis=0)
            crosses = (a[:, 1] > yy) != (b[:, 1] > yy)
            if crosses.any():
                ac, bc = a[crosses], b[crosses]
                xs.append(ac[:, 0] + (yy - ac[:, 1]) * (bc[:, 0] - ac[:, 0]) / (bc[:, 1] - ac[:, 1]))
        if not xs:
            continue
        xs = np.sort(np.concatenate(xs))
        for lo, hi in zip(xs[0::2], xs[1::2]):
            lo, hi = max(lo, xmin), min(hi, xmax)
            if hi - lo > best_len:
                best, best_len = ((lo + hi) / 2, yy), hi - lo
        if best is not None and window.contains_point(*best):
            return best
    for ring in window.shells:
        clipped = clip_ring_to_rect(ring, xmin, ymin, xmax, ymax)
        for vx, vy in clipped:
            if window.contains_point(vx, vy):
                return float(vx), float(vy)
    return None


def grid_areas(window: Window, nx: int, ny: int):
    """Window area in each tile of an ``nx`` x ``ny`` grid over the bbox.

    Returns ``(areas, centre_in)``, both indexed ``[i, j]`` (x, then y).
    """
    x0, y0, x1, y1 = window.bbox
    hx, hy = (x1 - x0) / nx, (y1 - y0) / ny
    areas, crossed = tile_areas(window, x0, y0, hx, hy, nx, ny)
    cx = x0 + (np.arange(nx) + 0.5) * hx
    cy = y0 + (np.arange(ny) + 0.5) * hy
    CX, CY = np.meshgrid(cx, cy, indexing="ij")
    centre_in = _classify_centres(window, CX, CY, crossed)
    areas[~crossed] = np.where(centre_in[~crossed], hx * hy, 0.0)
    # round-off slivers below this are dropped; far below any test tolerance
    areas[areas <= 1e-13 * hx * hy] = 0.0
    return areas, centre_in


def make_scheme(x, y, window: Window, ngrid=DEFAULT_NGRID) -> QuadratureScheme:
    """Data points plus dummy points on an ``nx`` x ``ny`` grid over the bbox.

    Each tile's weight (its intersection area with the window) is shared
    equally by every quadrature point falling in it. Dummies sit at tile
    centres; a tile that overlaps the window but whose centre lies outside it
    gets its dummy at an interior point of the overlap instead.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    nx, ny = int(ngrid[0]), int(ngrid[1])
    if nx < 1 or ny < 1:
        raise InvalidInputError(f"invalid grid {ngrid}")
    if not window.area > 0:
        raise InvalidInputError("empty window")
    x0, y0, x1, y1 = window.bbox
    hx, hy = (x1 - x0) / nx, (y1 - y0) / ny

    areas, centre_in = grid_areas(window, nx, ny)
    cx = x0 + (np.arange(nx) + 0.5) * hx
    cy = y0 + (np.arange(ny) + 0.5) * hy
    CX, CY = np.meshgrid(cx, cy, indexing="ij")

    occupied = areas > 0
    DX, DY = CX.copy(), CY.copy()
    moved = occupied & ~centre_in
    if moved.any():
        mi, mj = np.nonzero(moved)
        px, py = _subgrid_points(window, x0 + mi * hx, y0 + mj * hy, hx, hy)
        miss = np.flatnonzero(np.isnan(px))
        if miss.size:
            px[miss], py[miss] = _edge_points(window, x0 + mi[miss] * hx, y0 + mj[miss] * hy, hx, hy)
        for k in np.flatnonzero(np.isnan(px)):
            rect = (x0 + mi[k] * hx, y0 + mj[k] * hy, x0 + (mi[k] + 1) * hx, y0 + (mj[k] + 1) * hy)
            pt = _interior_point(window, rect)
            if pt is None:
                occupied[mi[k], mj[k]] = False
                areas[mi[k], mj[k]] = 0.0
            else:
                px[k], py[k] = pt
        DX[mi, mj], DY[mi, mj] = px, py
    # dummies in (i, j) tile order
    ii, jj = np.nonzero(occupied)
    dummy_x, dummy_y = DX[ii, jj], DY[ii, jj]
    dummy_tiles = list(zip(ii.tolist(), jj.tolist()))
    m = len(dummy_x)
    if m <= len(x):
        raise InsufficientDummiesError(f"{m} dummy points for {len(x)} data points; refine the grid")

    di = _tile_index(x, x0, hx, nx)
    dj = _tile_index(y, y0, hy, ny)
    # a data point on a tile edge may land in a zero-area tile; use a neighbour
    for k in np.flatnonzero(areas[di, dj] <= 0):
        cands = []
        for ii in {di[k], _tile_index(x[k] - 1e-9 * hx, x0, hx, nx)}:
            for jj in {dj[k], _tile_index(y[k] - 1e-9 * hy, y0, hy, ny)}:
                cands.append((areas[ii, jj], ii, jj))
        best = max(cands)
        if best[0] <= 0:
            raise InvalidInputError(f"data point {k} at ({x[k]}, {y[k]}) lies in no window tile")
        di[k], dj[k] = best[1], best[2]

    ti = np.concatenate([di, np.array([t[0] for t in dummy_tiles], dtype=np.int64)])
    tj = np.concatenate([dj, np.array([t[1] for t in dummy_tiles], dtype=np.int64)])
    counts = np.zeros((nx, ny), dtype=np.int64)
    np.add.at(counts, (ti, tj), 1)
    weights = areas[ti, tj] / counts[ti, tj]
    is_data = np.zeros(len(ti), dtype=bool)
    is_data[: len(x)] = True
    return QuadratureScheme(
        x=np.concatenate([x, np.asarray(dummy_x, dtype=float)]),
        y=np.concatenate([y, np.asarray(dummy_y, dtype=float)]),
        is_data=is_data,
        weights=weights,
        window=window,
        ngrid=(nx, ny),
    )


def riemann_integral(scheme: QuadratureScheme, f) -> float:
    """``sum_k a_k f(u_k)``; ``f`` takes coordinate arrays ``(x, y)``."""
    vals = np.asarray(f(scheme.x, scheme.y), dtype=float)
    vals = np.broadcast_to(vals, scheme.x.shape)
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        k = bad[0]
        raise NumericError(
            f"non-finite integrand at quadrature point {k} ({scheme.x[k]}, {scheme.y[k]})"
        )
    return float(np.dot(scheme.weights, vals))


def write_scheme_csv(scheme: QuadratureScheme, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "is_data", "weight"])
        for row in zip(scheme.x, scheme.y, scheme.is_data, scheme.weights):
            w.writerow([repr(float(row[0])), repr(float(row[1])), int(row[2]), repr(float(row[3]))])


def read_scheme_csv(path, window: Window, ngrid=DEFAULT_NGRID) -> QuadratureScheme:
    data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    return QuadratureScheme(
        x=data[:, 0], y=data[:, 1], is_data=data[:, 2].astype(bool),
        weights=data[:, 3], window=window, ngrid=tuple(ngrid),
    )
