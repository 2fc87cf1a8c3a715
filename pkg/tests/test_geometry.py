import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fracflow.mesh import geometry as G

import oracles

coords = arrays(np.float64, (3, 2), elements=st.floats(-1, 1, allow_nan=False))
moves = arrays(np.float64, (3, 2), elements=st.floats(-0.2, 0.2, allow_nan=False))


def _ccw(p):
    return p if oracles.tri_area(p) > 0 else p[[0, 2, 1]]


@given(coords, moves)
@settings(max_examples=300, deadline=None)
def test_swept_area_matches_quadrature(p, d):
    a, b = p[0], p[1]
    got = G.swept_area(a, b, d[0], d[1])
    assert got == pytest.approx(oracles.swept_quadrature(a, b, d[0], d[1]), abs=1e-13)


@given(coords, moves)
@settings(max_examples=300, deadline=None)
def test_dgcl_single_triangle(p, d):
    if abs(oracles.tri_area(p)) < 1e-3:
        return
    p = _ccw(p)
    A0 = oracles.tri_area(p)
    A1 = oracles.tri_area(p + d)
    # outward sweeps of a CCW triangle use the right-hand normal of each edge
    sw = sum(G.swept_area(p[i], p[(i + 1) % 3], d[i], d[(i + 1) % 3]) for i in range(3))
    assert abs(sw - (A1 - A0)) <= 1e-13 * max(abs(A0), 1e-300) + 1e-16


def test_swept_area_sign():
    # segment along +x moving down (its right side) -> positive
    assert G.swept_area(np.zeros(2), np.array([1.0, 0.0]), np.array([0.0, -1.0]), np.array([0.0, -1.0])) == 1.0


@given(coords)
@settings(max_examples=200, deadline=None)
def test_circumcenter_equidistant(p):
    if abs(oracles.tri_area(p)) < 1e-3:
        return
    c = G.circumcenter(p[0], p[1], p[2])
    assert np.allclose(c, oracles.circumcenter_lsq(p), atol=1e-9)


def test_circumcenter_degenerate():
    with pytest.raises(G.GeometryError):
        G.circumcenter(np.zeros(2), np.array([1.0, 0.0]), np.array([2.0, 0.0]))


@given(coords, moves)
@settings(max_examples=200, deadline=None)
def test_area_polynomial(p, d):
    c0, c1, c2 = G.area_polynomial(p, d)
    for tau in (0.0, 0.3, 1.0):
        assert c0 + c1 * tau + c2 * tau ** 2 == pytest.approx(oracles.tri_area(p + tau * d), abs=1e-12)
    tau = np.linspace(0, 1, 1001)
    vals = c0 + c1 * tau + c2 * tau ** 2
    assert G.min_area_over_step(p, d) <= vals.min() + 1e-12


def test_incircle_sign():
    a, b, c = np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])
    assert G.incircle(a, b, c, np.array([0.5, 0.5])) > 0
    assert G.incircle(a, b, c, np.array([2.0, 2.0])) < 0
    assert G.incircle(a, b, c, np.array([1.0, 1.0])) == pytest.approx(0.0)


def test_radius_ratio():
    eq = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    assert G.radius_ratio(*eq) == pytest.approx(1.0)
    assert G.radius_ratio(np.zeros(2), np.array([1.0, 0]), np.array([2.0, 0])) == 0.0


@given(coords, coords)
@settings(max_examples=200, deadline=None)
def test_intersection_area_bounds(t1, t2):
    t1, t2 = _ccw(t1), _ccw(t2)
    if oracles.tri_area(t1) < 1e-4 or oracles.tri_area(t2) < 1e-4:
        return
    a = G.triangle_intersection_area(t1, t2)
    assert -1e-15 <= a <= min(oracles.tri_area(t1), oracles.tri_area(t2)) + 1e-12
    assert G.triangle_intersection_area(t1, t1) == pytest.approx(oracles.tri_area(t1), rel=1e-12)


def test_intersection_area_by_sampling():
    rng = np.random.default_rng(3)
    t1 = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    t2 = np.array([[0.2, -0.1], [0.9, 0.6], [-0.1, 0.5]])
    q = rng.uniform(-0.2, 1.0, (400000, 2))

    def inside(t, q):
        s = [G.cross2(t[(i + 1) % 3] - t[i], q - t[i]) for i in range(3)]
        return (s[0] >= 0) & (s[1] >= 0) & (s[2] >= 0)

    est = np.mean(inside(t1, q) & inside(t2, q)) * 1.2 ** 2
    assert G.triangle_intersection_area(t1, t2) == pytest.approx(est, abs=5e-3)
