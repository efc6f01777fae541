import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import shoelace, star_polygon
from stfire.errors import InsufficientDummiesError, NumericError
from stfire.geom import Window
from stfire.quadrature import make_scheme, read_scheme_csv, riemann_integral, write_scheme_csv

UNIT = Window.rectangle(0, 0, 1, 1)
NONE = np.empty(0)


def test_unit_square_no_data():
    s = make_scheme(NONE, NONE, UNIT, (4, 4))
    assert len(s) == s.n_dummy == 16
    assert np.all(s.weights == 1 / 16)


def test_shared_tile_weights():
    s = make_scheme(np.array([0.1]), np.array([0.1]), UNIT, (4, 4))
    assert s.n_data == 1 and s.is_data[0]
    assert s.weights[0] == 0.03125
    shared = (~s.is_data) & (s.x < 0.25) & (s.y < 0.25)
    assert s.weights[shared].tolist() == [0.03125]
    assert s.weights.sum() == pytest.approx(1.0, abs=1e-15)


def test_pseudo_response():
    s = make_scheme(np.array([0.1, 0.6]), np.array([0.1, 0.7]), UNIT, (4, 4))
    y = s.pseudo_response
    assert np.all(y[~s.is_data] == 0.0)
    assert np.allclose(y[s.is_data], 1 / s.weights[s.is_data])


def test_insufficient_dummies():
    x = np.array([0.1, 0.2, 0.6, 0.7])
    with pytest.raises(InsufficientDummiesError):
        make_scheme(x, x, UNIT, (2, 2))


@given(st.integers(0, 10_000), st.integers(3, 40), st.integers(0, 30))
def test_weights_conserve_area(seed, ng, n):
    rng = np.random.default_rng(seed)
    w = Window(shells=(star_polygon(rng),))
    pts = rng.uniform(-1, 1, (4 * n + 10, 2))
    pts = pts[w.contains(pts[:, 0], pts[:, 1])][:n]
    try:
        s = make_scheme(pts[:, 0], pts[:, 1], w, (ng, ng))
    except InsufficientDummiesError:
        return
    assert np.all(s.weights > 0)
    assert s.weights.sum() == pytest.approx(shoelace(w.shells[0]), rel=1e-10)
    assert np.all(w.contains(s.x, s.y))


def test_adding_data_point_keeps_total(rng):
    w = Window(shells=(star_polygon(rng, 20),))
    base = make_scheme(NONE, NONE, w, (20, 20)).weights.sum()
    more = make_scheme(np.array([0.0]), np.array([0.0]), w, (20, 20)).weights.sum()
    assert more == pytest.approx(base, rel=1e-13)


def test_window_with_hole_and_two_shells():
    w = Window(shells=([(0, 0), (2, 0), (2, 2), (0, 2)], [(3, 0), (4, 0), (4, 1)]),
               holes=([(0.5, 0.5), (1.5, 0.5), (1.5, 1.5), (0.5, 1.5)],))
    s = make_scheme(NONE, NONE, w, (37, 23))
    assert s.weights.sum() == pytest.approx(3.5, rel=1e-12)
    assert np.all(w.contains(s.x, s.y))


def test_riemann_examples():
    s50 = make_scheme(NONE, NONE, UNIT, (50, 50))
    assert riemann_integral(s50, lambda x, y: np.ones_like(x)) == pytest.approx(1.0)
    assert riemann_integral(s50, lambda x, y: x) == pytest.approx(0.5, abs=1e-3)
    s100 = make_scheme(NONE, NONE, UNIT, (100, 100))
    assert riemann_integral(s100, lambda x, y: x ** 2 + y ** 2) == pytest.approx(2 / 3, abs=1e-3)


def test_riemann_refinement_converges():
    w = Window(shells=(star_polygon(np.random.default_rng(3), 30),))
    # integral of 1 + x^2 over the polygon via exact polygon moments
    ring = np.array(w.shells[0])
    x, y = ring[:, 0], ring[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    ixx = np.sum(cross * (x ** 2 + x * xn + xn ** 2)) / 12
    exact = w.area + ixx
    errs = [abs(riemann_integral(make_scheme(NONE, NONE, w, (g, g)), lambda a, b: 1 + a ** 2) - exact)
            for g in (8, 32, 128)]
    assert errs[0] > errs[1] > errs[2]


def test_riemann_non_finite():
    s = make_scheme(NONE, NONE, UNIT, (4, 4))
    with pytest.raises(NumericError, match="point"):
        riemann_integral(s, lambda x, y: np.where(x > 0.8, np.nan, 1.0))


def test_scheme_csv_round_trip(tmp_path):
    s = make_scheme(np.array([0.3]), np.array([0.4]), UNIT, (5, 5))
    write_scheme_csv(s, tmp_path / "q.csv")
    back = read_scheme_csv(tmp_path / "q.csv", UNIT, (5, 5))
    for a in ("x", "y", "is_data", "weights"):
        assert np.array_equal(getattr(back, a), getattr(s, a))
