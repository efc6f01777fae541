import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import shoelace, star_polygon
from stfire.errors import InvalidGeometryError, InvalidInputError
from stfire.geom import (STPointPattern, Window, area, clip_ring_to_rect, contains, count_in,
                         load_window, save_window, window_from_geojson)

UNIT = Window.rectangle(0, 0, 1, 1)


def test_area_examples():
    assert area(UNIT) == 1.0
    assert area(Window.rectangle(0, 0, 2, 3)) == 6.0
    holed = Window(shells=(UNIT.shells[0],), holes=([(0.25, 0.25), (0.75, 0.25), (0.75, 0.75), (0.25, 0.75)],))
    assert area(holed) == pytest.approx(0.75, abs=1e-15)


def test_orientation_is_normalised():
    cw = [(0, 0), (0, 1), (1, 1), (1, 0)]
    assert area(Window(shells=(cw,))) == 1.0


def test_closing_vertex_is_dropped():
    w = Window(shells=([(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)],))
    assert len(w.shells[0]) == 4


@pytest.mark.parametrize("ring", [
    [(0, 0), (1, 1), (1, 0), (0, 1)],   # bow tie
    [(0, 0), (1, 0)],                   # too few vertices
    [(0, 0), (1, 0), (2, 0)],           # zero area
])
def test_invalid_rings(ring):
    with pytest.raises(InvalidGeometryError):
        Window(shells=(ring,))


def test_contains_boundary_and_hole():
    holed = Window(shells=(UNIT.shells[0],), holes=([(0.25, 0.25), (0.75, 0.25), (0.75, 0.75), (0.25, 0.75)],))
    assert contains(UNIT, 0.5, 0.5)
    assert contains(UNIT, 0.0, 0.3)          # edge
    assert contains(UNIT, 1.0, 1.0)          # vertex
    assert not contains(UNIT, 1.0 + 1e-9, 0.5)
    assert not contains(holed, 0.5, 0.5)
    assert contains(holed, 0.25, 0.5)        # hole boundary belongs to the window
    assert contains(holed, 0.1, 0.1)


def test_contains_matches_matplotlib_free_oracle(rng):
    # crossing-number oracle written out longhand
    ring = star_polygon(rng, 25)
    w = Window(shells=(ring,))
    px, py = rng.uniform(-1, 1, 500), rng.uniform(-1, 1, 500)

    def inside(x, y):
        c = False
        n = len(ring)
        for i in range(n):
            (x1, y1), (x2, y2) = ring[i], ring[(i + 1) % n]
            if (y1 > y) != (y2 > y) and x < x1 + (y - y1) * (x2 - x1) / (y2 - y1):
                c = not c
        return c

    expected = np.array([inside(a, b) for a, b in zip(px, py)])
    assert np.array_equal(w.contains(px, py), expected)


@given(st.integers(0, 10_000))
def test_area_matches_shoelace_oracle(seed):
    ring = star_polygon(np.random.default_rng(seed))
    assert area(Window(shells=(ring,))) == pytest.approx(shoelace(ring), rel=1e-12)


@given(st.integers(1, 7), st.integers(1, 7))
def test_area_equals_sum_of_partition_tiles(nx, ny):
    w = Window.rectangle(-1.3, 0.2, 2.9, 4.1)
    xs = np.linspace(-1.3, 2.9, nx + 1)
    ys = np.linspace(0.2, 4.1, ny + 1)
    total = sum(area(Window.rectangle(xs[i], ys[j], xs[i + 1], ys[j + 1]))
                for i in range(nx) for j in range(ny))
    assert total == pytest.approx(area(w), rel=1e-12)


@given(st.integers(0, 10_000))
def test_clip_area_partition(seed):
    rng = np.random.default_rng(seed)
    w = Window(shells=(star_polygon(rng),))
    xm, ym = rng.uniform(-0.5, 0.5, 2)
    parts = [w.clip_area(-2, -2, xm, ym), w.clip_area(xm, -2, 2, ym),
             w.clip_area(-2, ym, xm, 2), w.clip_area(xm, ym, 2, 2)]
    assert sum(parts) == pytest.approx(w.area, rel=1e-12)


def test_clip_ring_to_rect_square():
    sq = np.array(UNIT.shells[0])
    clipped = clip_ring_to_rect(sq, 0.5, 0.5, 2, 2)
    assert shoelace(clipped) == pytest.approx(0.25)


def test_geojson_round_trip(tmp_path):
    w = Window(shells=(star_polygon(np.random.default_rng(1)), [(5, 5), (6, 5), (6, 6)]),
               holes=([(0.0, 0.0), (0.05, 0.0), (0.0, 0.05)],))
    save_window(w, tmp_path / "w.geojson")
    back = load_window(tmp_path / "w.geojson")
    assert back.area == pytest.approx(w.area, rel=1e-15)
    feature = {"type": "FeatureCollection", "features": [
        {"type": "Feature", "properties": {}, "geometry": {
            "type": "Polygon", "coordinates": [[[0, 0], [2, 0], [2, 2], [0, 2], [0, 0]]]}}]}
    assert window_from_geojson(json.loads(json.dumps(feature))).area == 4.0


def _pattern(n=10, seed=0):
    rng = np.random.default_rng(seed)
    return STPointPattern(rng.uniform(0, 1, n), rng.uniform(0, 1, n), rng.uniform(0, 1, n), UNIT)


def test_count_in_examples():
    pat = _pattern()
    assert count_in(pat, UNIT, (0, 1)) == 10
    assert count_in(pat, Window.rectangle(5, 5, 6, 6)) == 0
    left, right = Window.rectangle(0, 0, 0.5, 1), Window.rectangle(0.5, 0, 1, 1)
    assert count_in(pat, left) + count_in(pat, right) == 10


@given(st.integers(0, 10_000), st.floats(0.05, 0.95))
def test_count_in_additive_and_monotone(seed, cut):
    pat = _pattern(50, seed)
    a, b = Window.rectangle(0, 0, cut, 1), Window.rectangle(cut, 0, 1, 1)
    on_cut = int(np.sum(pat.x == cut))
    assert count_in(pat, a) + count_in(pat, b) - on_cut == pat.n
    small = Window.rectangle(0, 0, cut, cut)
    assert count_in(pat, small) <= count_in(pat, a)
    assert count_in(pat, interval=(0, cut)) <= count_in(pat, interval=(0, 1))


@pytest.mark.parametrize("x,y,t", [
    ([1.5], [0.5], [0.5]),       # outside window
    ([0.5], [0.5], [1.5]),       # outside interval
    ([0.5, 0.5], [0.5, 0.5], [0.2, 0.2]),   # duplicate
    ([np.nan], [0.5], [0.5]),
])
def test_pattern_rejects(x, y, t):
    with pytest.raises(InvalidInputError):
        STPointPattern(np.array(x), np.array(y), np.array(t), UNIT)


def test_pattern_is_immutable():
    pat = _pattern()
    with pytest.raises(ValueError):
        pat.x[0] = 0.3


def test_marks_carried():
    pat = STPointPattern(np.array([0.2]), np.array([0.2]), np.array([0.2]), UNIT, marks={"frp": [3.5]})
    assert pat.marks["frp"][0] == 3.5
    with pytest.raises(InvalidInputError):
        STPointPattern(np.array([0.2]), np.array([0.2]), np.array([0.2]), UNIT, marks={"frp": [1, 2]})
