import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import Polynomial

from microstruct import geometry as G
from microstruct.errors import DegenerateHull


def test_unit_tetrahedron_volume():
    tet = G.ConvexPolyhedron.from_points(
        [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)])
    assert tet.volume == pytest.approx(1.0 / 6.0, rel=1e-14)


def test_unit_cube_volume_area_faces():
    cube = G.box((0, 0, 0), (1, 1, 1))
    assert cube.volume == pytest.approx(1.0)
    assert cube.boundary_area == pytest.approx(6.0)
    assert len(cube.faces) == 6  # merged coplanar quads, not triangles
    assert all(len(f.cycle) == 4 for f in cube.faces)


def test_degenerate_hull_raises():
    pts = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0)]
    with pytest.raises(DegenerateHull):
        G.ConvexPolyhedron.from_points(pts)
    flat = G.ConvexPolyhedron.from_points(pts, allow_flat=True)
    assert flat.volume == 0.0
    assert flat.boundary_area == pytest.approx(2.0)  # both sides of the square


def test_closedness_and_planarity():
    rng = np.random.default_rng(0)
    for _ in range(25):
        pts = rng.random((rng.integers(4, 12), 3))
        try:
            h = G.ConvexPolyhedron.from_points(pts)
        except DegenerateHull:
            continue
        assert h.closedness_defect() < 1e-12 * h.boundary_area
        assert h.face_planarity_defect() < 1e-10 * h.scale


def test_revolution_solid_quintic_profile_measure():
    # termwise oracle: integral of 10 z^3 - 15 z^4 + 6 z^5 over (0,1) = 1/2
    termwise = 10 / 4 - 15 / 5 + 6 / 6
    assert termwise == pytest.approx(0.5)
    K = G.RevolutionSolid((0, 0), 0.0, 1.0,
                          Polynomial([0, 0, 0, 10, -15, 6]))
    assert K.measure() == pytest.approx(math.pi * termwise, rel=1e-13)


def test_ball_and_sphere():
    b = G.Ball((0.3, -0.2, 5.0), 1.0)
    assert b.measure() == pytest.approx(4 * math.pi / 3, rel=1e-12)
    assert b.boundary_area == pytest.approx(4 * math.pi, rel=1e-12)


def test_straight_cone_lateral_area():
    cone = G.RevolutionSolid((0, 0), 0.0, 1.0, Polynomial([0, 0, 1.0]))
    assert cone.lateral_area() == pytest.approx(math.sqrt(2) * math.pi,
                                                rel=1e-8)


def test_cone_slices_fill_constant_fraction():
    # one upward cone of doubled radius plus four downward cones remove the
    # same area from every horizontal slice
    w, l, F = 0.1, 0.2, 1 - 1 / 128
    a = w * math.sqrt(1 - F) / (2 * math.sqrt(math.pi))
    q = Polynomial([0, 0, 0, 10.0, -15.0, 6.0])
    small = G.RevolutionSolid((0, 0), 0.0, l, q * a * a)
    big = G.RevolutionSolid((0, 0), 0.0, l,
                            q(Polynomial([1.0, -1.0])) * (4 * a * a))
    total = 4 * small.measure() + big.measure()
    assert total == pytest.approx((1 - F) * w * w * l, rel=1e-12)
    for z in np.linspace(0.01, 0.99, 17) * l:
        holes = 4 * math.pi * small.radius_at(z) ** 2 \
            + math.pi * big.radius_at(z) ** 2
        assert holes == pytest.approx((1 - F) * w * w, rel=1e-12)


def test_measure_against_monte_carlo():
    shapes = [
        G.Ball((0, 0, 0.2), 0.7, clip_box=((-.4, -.4, 0), (.4, .4, 1))),
        G.AxisCylinder((0, 0, -0.1), 0, 0.4, ((-.5, -.5, 0), (.5, .5, 1))),
        G.RevolutionSolid((0, 0), 0.0, 1.0,
                          Polynomial([0, 0, 0, 10, -15, 6]) * 0.09),
    ]
    for region in shapes:
        est, se = G.mc_measure(region, n=10 ** 6, seed=3)
        assert abs(est - region.measure()) < 3 * se


def test_pairwise_intersection_and_union():
    P = G.box((0, 0, 0), (1, 1, 1))
    Q = G.box((0.5, 0.25, 0.25), (1.5, 0.75, 0.75))
    R = G.box((2, 2, 2), (3, 3, 3))
    assert G.intersect_volume(P, Q) == pytest.approx(0.125, rel=1e-12)
    assert G.intersect_volume(P, R) == 0.0
    assert G.union_volume([P, Q, R]) == pytest.approx(
        1.0 + 0.25 - 0.125 + 1.0, rel=1e-10)


def test_face_contact_has_zero_intersection_volume():
    P = G.box((0, 0, 0), (1, 1, 1))
    Q = G.box((1, 0, 0), (2, 1, 1))
    assert G.intersect_volume(P, Q) == 0.0


def test_free_boundary_area_with_coverage():
    P = G.box((0, 0, 0), (1, 1, 1))
    Q = G.box((1, 0.25, 0.25), (2, 0.75, 0.75))  # covers part of P's x=1 face
    area = G.free_boundary_area([P, Q])
    # surfaces 6.0 and 2.5 minus both sides of the 0.5 x 0.5 contact patch
    assert area == pytest.approx(6.0 + 2.5 - 2 * 0.25, rel=1e-9)


def test_free_boundary_excluded_planes():
    P = G.box((0, 0, 0), (1, 1, 1))
    area = G.free_boundary_area(
        [P], exclude_planes=[((0, 0, 1), 0.0), ((0, 0, 1), 1.0)])
    assert area == pytest.approx(4.0, rel=1e-12)


def test_circle_rect_area_cases():
    assert G.circle_rect_area(0, 0, 1, -2, 2, -2, 2) == pytest.approx(math.pi,
                                                                      rel=1e-10)
    assert G.circle_rect_area(0, 0, 1, 0, 2, -2, 2) == pytest.approx(
        math.pi / 2, rel=1e-10)
    # circle through the square corners covers the square exactly
    assert G.circle_rect_area(0, 0, math.sqrt(2), -1, 1, -1, 1) == \
        pytest.approx(4.0, rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 2.0), st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_circle_rect_area_vs_grid(r, cx, cy):
    exact = G.circle_rect_area(cx, cy, r, -1, 1, -1, 1)
    n = 400
    xs = -1 + (np.arange(n) + 0.5) * 2 / n
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    grid = np.mean((X - cx) ** 2 + (Y - cy) ** 2 <= r * r) * 4.0
    assert abs(exact - grid) < 0.05


def test_slice_polygon_of_cube():
    cube = G.box((0, 0, 0), (1, 1, 1))
    sl = cube.slice_polygon((0, 0, 1), 0.5)
    assert sl.area == pytest.approx(1.0, abs=1e-9)
    assert cube.slice_polygon((0, 0, 1), 2.0) is None


def test_clipped_ball_area_unsupported():
    b = G.Ball((0, 0, 0), 1.0, clip_box=((-.5, -.5, -.5), (.5, .5, .5)))
    with pytest.raises(G.UnsupportedBoolean):
        _ = b.boundary_area


def test_sector_shell_contains_consistency():
    # sector direction cone: rays that land inside the box at full reach
    s, w = 0.025, 0.1
    lo = np.array([-w / 2, -w / 2, 0.0])
    hi = np.array([w / 2, w / 2, math.sqrt(3) * w / 2])
    Z = np.array([0, 0, -s])
    sec = G.SectorShell(Z, math.sqrt(3) * s, math.sqrt(3) * w / 2, lo, hi,
                        reach=math.sqrt(3) * w / 2)
    pt_axis = np.array([[0, 0, 2 * s]])      # vertical ray: inside
    pt_out = np.array([[0.04, 0.04, 0.001]])  # diagonal ray exits the box
    assert sec.contains(pt_axis)[0]
    assert not sec.contains(pt_out)[0]
