import math

import numpy as np
import pytest
from shapely.geometry import MultiPoint, Polygon

from kakeya_ifs import fixtures, geom
from kakeya_ifs.errors import BudgetExceeded, HypothesisViolated, ResolutionError
from kakeya_ifs.geom import Rect


def random_rect(rng, a1=1.0, a2=0.1, spread=0.6):
    return Rect.at_angle(rng.uniform(-spread, spread, 2), rng.uniform(0, math.pi), a1, a2)


# ---------------------------------------------------------------------------
# convex polygons (shapely is the oracle)


def test_convex_hull_against_shapely():
    rng = np.random.default_rng(1)
    for _ in range(50):
        pts = rng.normal(size=(rng.integers(3, 60), 2))
        hull = geom.convex_hull(pts)
        ref = MultiPoint([tuple(p) for p in pts]).convex_hull
        assert geom.polygon_area(hull) == pytest.approx(ref.area, rel=1e-12)
        assert Polygon(hull).exterior.is_ccw


def test_clip_convex_against_shapely():
    rng = np.random.default_rng(2)
    for _ in range(200):
        p = geom.convex_hull(rng.normal(size=(8, 2)))
        q = geom.convex_hull(rng.normal(size=(8, 2)) + rng.normal(size=2))
        got = geom.polygon_area(geom.clip_convex(p, q))
        assert got == pytest.approx(Polygon(p).intersection(Polygon(q)).area, abs=1e-12)


def test_convex_polygons_intersect():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    assert geom.convex_polygons_intersect(sq, sq + 0.5)
    assert geom.convex_polygons_intersect(sq, sq, margin=1e-9)
    assert not geom.convex_polygons_intersect(sq, sq + [1.5, 0])
    # touching edges meet, but not with a positive margin
    assert geom.convex_polygons_intersect(sq, sq + [1.0, 0])
    assert not geom.convex_polygons_intersect(sq, sq + [1.0, 0], margin=1e-9)


# ---------------------------------------------------------------------------
# rendering


def test_render_unit_interval():
    cloud = geom.render(fixtures.scalar_pair(0.5), count=20_000, seed=3)
    p = cloud.points
    assert p.shape == (20_000, 2)
    assert np.all(p[:, 0] >= -1e-12) and np.all(p[:, 0] <= 1 + 1e-12)
    assert np.all(np.abs(p[:, 1]) <= 1e-12)
    assert cloud.gen == {"mode": "chaos", "seed": 3, "count": 20_000}


def test_render_identical_maps_collapse_to_fixed_point():
    a = np.array([[0.3, 0.1], [0.05, 0.4]])
    sys = fixtures.IfsSystem.from_arrays([a, a], [(1.0, 2.0), (1.0, 2.0)])
    fp = np.linalg.solve(np.eye(2) - a, [1.0, 2.0])
    for mode in ("chaos", "stopping"):
        cloud = geom.render(sys, mode=mode, count=1000)
        assert np.max(np.linalg.norm(cloud.points - fp, axis=1)) <= 1e-12


def test_render_edgar_extent():
    cloud = geom.render(fixtures.edgar(0.4, 0.1), count=100_000)
    lo, hi = cloud.points.min(axis=0), cloud.points.max(axis=0)
    # (x, y) -> (-y, -x) conjugates map 1 to map 2 when a2 = -a1, so E is invariant under it
    assert np.allclose(lo, -hi[::-1], atol=0.1 * (hi - lo).max())
    assert 1.0 < (hi - lo).max() < 3.0
    # the enclosing polygon contains every point
    k = geom.enclosing_polygon(fixtures.edgar(0.4, 0.1))
    assert np.all(geom.points_in_convex(cloud.points, k) |
                  (np.min(np.linalg.norm(cloud.points[:, None] - k[None], axis=2), axis=1) < 1e-9))


def test_render_stopping_diameter_bound_and_budget():
    sys = fixtures.sierpinski()
    cloud = geom.render(sys, mode="stopping", r=0.01)
    assert cloud.diameter_bound <= 0.01 + 1e-12
    assert cloud.points.shape[0] == 3 ** 7  # 0.5**7 * diam <= 0.01 < 0.5**6 * diam
    with pytest.raises(BudgetExceeded):
        geom.render(sys, mode="stopping", r=1e-4, budget=1000)
    with pytest.raises(ValueError):
        geom.render(sys, budget=0)


def test_stopping_count_estimate():
    sys = fixtures.sierpinski()
    assert geom.stopping_exponent(sys) == pytest.approx(math.log(3) / math.log(2), rel=1e-9)
    est = geom.estimated_stopping_count(sys, 1e-3)
    assert est == pytest.approx(1e-3 ** -(math.log(3) / math.log(2)), rel=1e-6)
    assert geom.estimated_stopping_count(sys, 2.0) == 1.0


# ---------------------------------------------------------------------------
# neighbourhood areas


def test_neighborhood_area_single_point():
    est = geom.neighborhood_area(np.zeros((1, 2)), 1.0, 1 / 256)
    assert est.area == pytest.approx(math.pi, rel=0.02)
    assert abs(est.area - math.pi) <= est.error


def test_neighborhood_area_two_points():
    est = geom.neighborhood_area(np.array([[0.0, 0.0], [10.0, 0.0]]), 1.0, 1 / 64)
    assert est.area == pytest.approx(2 * math.pi, rel=0.02)


def test_neighborhood_area_segment_stadium():
    seg = np.column_stack([np.linspace(0, 1, 20_001), np.zeros(20_001)])
    est = geom.neighborhood_area(seg, 0.1)
    exact = 2 * 0.1 + math.pi * 0.01
    assert est.area == pytest.approx(exact, rel=0.03)
    assert abs(est.area - exact) <= est.error + 1e-4 * 0.1  # point spacing 5e-5


def test_neighborhood_area_edt_path_agrees():
    seg = np.column_stack([np.linspace(0, 1, 4001), np.zeros(4001)])
    old = geom.KDTREE_CELL_LIMIT
    try:
        geom.KDTREE_CELL_LIMIT = 0
        est = geom.neighborhood_area(seg, 0.1, 0.1 / 32)
    finally:
        geom.KDTREE_CELL_LIMIT = old
    exact = 2 * 0.1 + math.pi * 0.01
    assert est.method == "edt"
    assert est.area == pytest.approx(exact, rel=0.03)
    assert abs(est.area - exact) <= est.error


def test_neighborhood_area_monotone_in_delta():
    pts = geom.chaos_points(fixtures.sierpinski(), 5000)
    h = 1 / 512
    areas = [geom.neighborhood_area(pts, d, h).area for d in (0.01, 0.02, 0.04, 0.08)]
    assert all(a <= b for a, b in zip(areas, areas[1:]))


def test_neighborhood_area_resolution_error():
    with pytest.raises(ResolutionError):
        geom.neighborhood_area(np.zeros((1, 2)), 1.0, 0.3)


def test_raster_axis_aligned_rectangle():
    rng = np.random.default_rng(4)
    for _ in range(50):
        a, b = rng.uniform(0.2, 2.0), rng.uniform(0.05, 0.2)
        if a <= b:
            continue
        r = Rect(rng.uniform(-1, 1, 2), np.array([1.0, 0.0]), a, b)
        h = rng.uniform(0.002, 0.01)
        ras = geom.rasterize_rects([r], h)
        assert abs(ras.area() - a * b) <= 2 * (a + b) * h


def test_raster_intersection_matches_exact():
    rng = np.random.default_rng(5)
    h = 1 / 256
    for _ in range(1000):
        r1, r2 = random_rect(rng, spread=0.3), random_rect(rng, spread=0.3)
        exact = geom.rect_intersection_area(r1, r2)
        ras = geom.rasterize_rects([r1], h)
        got = geom.raster_area_in(ras, r2.corners())
        assert abs(got - exact) <= (r1.perimeter + r2.perimeter) * h


# ---------------------------------------------------------------------------
# box dimension


def test_box_dimension_interval():
    est = geom.box_dimension(fixtures.scalar_pair(0.5), mode="stopping")
    assert est.dim_estimate == pytest.approx(1.0, abs=0.05)
    assert est.mode == "stopping" and est.fit_count == 10
    assert est.diameter_bound <= min(est.deltas) / 8 + 1e-15
    assert list(est.deltas) == sorted(est.deltas, reverse=True)
    assert all(a >= b for a, b in zip(est.areas, est.areas[1:]))


def test_box_dimension_sierpinski():
    est = geom.box_dimension(fixtures.sierpinski(), mode="stopping")
    assert est.dim_estimate == pytest.approx(math.log(3) / math.log(2), abs=0.05)


def test_box_dimension_square_chaos():
    est = geom.box_dimension(fixtures.square4(), mode="chaos")
    assert est.dim_estimate == pytest.approx(2.0, abs=0.05)
    assert est.seed == 0 and est.n_points == 4_000_000


def test_box_dimension_auto_mode_choice():
    # the interval needs few cylinders; pair64 is too anisotropic for stopping sets
    est = geom.box_dimension(fixtures.scalar_pair(0.5), mode="auto")
    assert est.mode == "stopping"
    deltas = [0.1 * 2 ** (-0.5 * k) for k in range(5)]
    est = geom.box_dimension(fixtures.pair64(), deltas=deltas, mode="auto", count=100_000)
    assert est.mode == "chaos"


def test_box_dimension_rejects_bad_input():
    with pytest.raises(ValueError):
        geom.box_dimension(fixtures.sierpinski(), deltas=[0.1, 0.05])
    with pytest.raises(ValueError):
        geom.box_dimension(fixtures.sierpinski(), deltas=[0.1, 0.05, 0.02], mode="nope")
    with pytest.raises(BudgetExceeded):
        geom.box_dimension(fixtures.square4(), mode="chaos", count=10, budget=5)


# ---------------------------------------------------------------------------
# Kakeya rectangles


def test_kakeya_bound_values():
    expected = 0.01 / (2 * math.sqrt(2) * math.pi * math.log(200 * math.pi))
    assert geom.kakeya_bound(1, 1.0, 0.01, 1.0) == pytest.approx(expected, rel=1e-15)
    assert expected == pytest.approx(1.75e-4, rel=0.01)
    assert geom.kakeya_bound(1, 1.0, 0.01, 0.0) == 0.0
    assert geom.kakeya_bound(14, 1.0, 0.01, 0.7) == pytest.approx(
        2 * geom.kakeya_bound(7, 1.0, 0.01, 0.7), rel=1e-15)


@pytest.mark.parametrize("args", [(1, 0.01, 1.0, 1.0), (1, 1.0, 0.0, 1.0), (0, 1.0, 0.1, 1.0),
                                  (1, 1.0, 0.1, 1.5)])
def test_kakeya_bound_hypotheses(args):
    with pytest.raises(HypothesisViolated):
        geom.kakeya_bound(*args)


def test_verify_fan_passes():
    chk = geom.verify_kakeya_estimate(geom.fan(64, 1.0, 1 / 64))
    assert chk.passed and chk.measured >= chk.bound


def test_verify_single_rectangle_passes():
    r = Rect.at_angle((0, 0), 0.3, 1.0, 0.1)
    chk = geom.verify_kakeya_estimate([r])
    assert chk.passed
    assert chk.measured == pytest.approx(0.1, abs=2 * r.perimeter / 320)


def test_verify_parallel_rectangles_rejected():
    r1 = Rect.at_angle((0, 0), 0.0, 1.0, 0.1)
    r2 = Rect.at_angle((0, 0.5), 0.0, 1.0, 0.1)
    with pytest.raises(HypothesisViolated) as exc:
        geom.verify_kakeya_estimate([r1, r2])
    assert exc.value.which == (0, 1)


def test_verify_detects_thin_coverage():
    rects = geom.fan(4, 1.0, 0.1)
    # F is only the first rectangle: the others are covered far less than tau*a1*a2
    F = geom.rasterize_rects(rects[:1], 0.1 / 32)
    with pytest.raises(HypothesisViolated):
        geom.verify_kakeya_estimate(rects, F=F, tau=1.0)


def test_overlap_inequality_random_pairs():
    rng = np.random.default_rng(6)
    checked = 0
    for _ in range(1000):
        a1 = rng.uniform(0.5, 2.0)
        a2 = a1 * rng.uniform(0.005, 0.5)
        r1 = Rect.at_angle(rng.uniform(-0.3, 0.3, 2) * a1, rng.uniform(0, math.pi), a1, a2)
        ang = rng.uniform(a2 / a1, math.pi / 2)
        r2 = Rect.at_angle(rng.uniform(-0.3, 0.3, 2) * a1,
                           math.atan2(r1.long_axis[1], r1.long_axis[0]) + ang, a1, a2)
        assert geom.rect_intersection_area(r1, r2) <= geom.overlap_bound(r1, r2)
        checked += 1
    assert checked == 1000


def test_scanline_fill_matches_point_predicate():
    rng = np.random.default_rng(7)
    for _ in range(100):
        r = random_rect(rng, a1=rng.uniform(0.3, 1.0), a2=0.05)
        ras = geom.rasterize_rects([r], 1 / 128)
        xs, ys = ras.centers()
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        want = geom.points_in_convex(np.column_stack([gx.ravel(), gy.ravel()]),
                                     r.corners()).reshape(gx.shape)
        mismatch = np.count_nonzero(want != ras.occupancy)
        # only cells whose centre lies on an edge (to rounding) may disagree
        assert mismatch <= 2
