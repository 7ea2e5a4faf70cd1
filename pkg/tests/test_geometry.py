import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fpplab.geometry import (GeometryError, Parallelogram, Rect, VStrip, hypot_bounds,
                             point_line_distance, point_line_distances, round_to_lattice)

coord = st.floats(-1e3, 1e3, allow_nan=False)


def test_rect_rejects_degenerate():
    with pytest.raises(GeometryError):
        Rect(0, 0, 0, 1)


def test_rect_contains_is_half_open():
    r = Rect(0, 1, 0, 1)
    assert r.contains(0.0, 0.0) and not r.contains(1.0, 0.5)


@given(st.floats(1.01, 5.0))
def test_scaled_keeps_centre(f):
    r = Rect(-3, 5, 2, 4)
    s = r.scaled(f)
    assert math.isclose((s.x0 + s.x1) / 2, 1.0) and math.isclose((s.y0 + s.y1) / 2, 3.0)
    assert math.isclose(s.width, f * r.width)


def test_bounding_and_distance():
    r = Rect.bounding([(0, 0), (10, 2)], pad=1.0)
    assert (r.x0, r.x1, r.y0, r.y1) == (-1, 11, -1, 3)
    assert r.distance_to_boundary((5, 1)) == 2.0
    assert r.distance_to_boundary((12, 1)) < 0


def test_vstrip_is_open():
    s = VStrip(0, 2)
    assert list(s.contains(np.array([0.0, 1.0, 2.0]), np.zeros(3))) == [False, True, False]


def test_round_half_down():
    assert tuple(round_to_lattice((0.5, -0.5))) == (0.0, -1.0)
    assert tuple(round_to_lattice((1.6, 2.4))) == (2.0, 2.0)


@given(st.floats(0.1, 1e3), st.floats(-50, 50))
def test_hypot_bounds_bracket(n, y):
    lo, hi = hypot_bounds(n, y)
    h = math.hypot(n, y)
    assert lo <= h * (1 + 1e-12) and h <= hi * (1 + 1e-12)


@given(coord, coord, coord, coord)
def test_point_line_distance_symmetric_in_endpoints(a, b, c, d):
    if (a, b) == (c, d):
        return
    w = (1.0, 2.0)
    assert math.isclose(point_line_distance(w, (a, b), (c, d)),
                        point_line_distance(w, (c, d), (a, b)), rel_tol=1e-9, abs_tol=1e-9)


def test_point_line_distances_vectorised():
    ws = np.array([[0.0, 3.0], [5.0, -2.0]])
    assert np.allclose(point_line_distances(ws, (0, 0), (10, 0)), [3.0, 2.0])


def test_parallelogram_sides():
    p = Parallelogram(i=2, k=-1, k_prime=1, n=10.0, W=3.0)
    assert p.left_x == 10.0 and p.right_x == 20.0
    assert p.left_side == (-3.0, 0.0) and p.right_side == (3.0, 6.0)
    r = p.bounding_rect()
    assert (r.y0, r.y1) == (-3.0, 6.0)
