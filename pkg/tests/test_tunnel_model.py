import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import Point, Polygon
from shapely.ops import unary_union

from tunnelghost.points import RadarPoint
from tunnelghost.tunnel_model import (
    CenterlineSpec, CrossSectionSpec, GeometryError, OutOfExtentError, SegmentationParams,
    build_tunnel_model, classify_point, cross_section_error, fit_centerline,
    optimize_segmentation_params, path_error, segment_cross_section, segment_tunnel_path,
    segmentation_error_bounds,
)

SPEC = CrossSectionSpec(5.5, 1.6, 4.0)


# ---------------------------------------------------------------- centerline fit

def test_fit_exact_line():
    ys = np.array([0.0, 10.0, 20.0, 35.0])
    xs = 0.3 * ys - 2.0
    cl = fit_centerline(np.c_[xs, ys], degree=1)
    assert cl.coefficients == pytest.approx((-2.0, 0.3), abs=1e-12)
    assert cl.residual_rms == pytest.approx(0.0, abs=1e-12)


def test_fit_exact_cubic():
    ys = np.linspace(-10, 10, 21)
    cl = fit_centerline(np.c_[0.001 * ys ** 3, ys], degree=3)
    assert cl.coefficients[3] == pytest.approx(0.001, abs=1e-9)
    assert cl.coefficients[:3] == pytest.approx((0, 0, 0), abs=1e-9)


def _normal_equation_fit(xs, ys, degree, scale):
    t = ys / scale
    v = np.vander(t, degree + 1, increasing=True)
    gram = v.T @ v
    c_t = np.linalg.solve(gram, v.T @ xs)
    powers = scale ** np.arange(degree + 1)
    return c_t / powers, np.linalg.inv(gram) / powers[:, None] / powers[None, :]


def test_fit_noisy_cubic_against_normal_equations():
    rng = np.random.default_rng(7)
    gen = np.array([0.5, -0.01, 1.12e-4, 1.34e-7])
    ys = np.linspace(0, 350, 93)
    xs = np.polynomial.polynomial.polyval(ys, gen) + rng.normal(0, 0.1, ys.size)
    cl = fit_centerline(np.c_[xs, ys], degree=3)
    oracle, cov = _normal_equation_fit(xs, ys, 3, 350.0)
    np.testing.assert_allclose(cl.coefficients, oracle, rtol=1e-6, atol=1e-12)
    se = 0.1 * np.sqrt(np.diag(cov))
    assert np.all(np.abs(np.array(cl.coefficients) - gen) <= 3 * se)
    assert cl.residual_rms == pytest.approx(0.1, rel=0.25)


def test_fit_rejects_underdetermined_and_nonfinite():
    with pytest.raises(GeometryError, match="underdetermined"):
        fit_centerline([[0, 0], [1, 1], [2, 2]], degree=3)
    with pytest.raises(GeometryError, match="underdetermined"):
        fit_centerline([[0, 1], [1, 1], [2, 1], [3, 1]], degree=1)
    with pytest.raises(GeometryError, match="non-finite"):
        fit_centerline([[0, 0], [np.nan, 1], [2, 2]], degree=1)


# ---------------------------------------------------------------- cross-section

def test_sector_angle_for_twelve_chords():
    segs = segment_cross_section(SPEC, 12)
    assert segs[0].sector_angle == pytest.approx(0.31100, abs=5e-6)
    assert math.degrees(segs[0].sector_angle) < 18.08


@pytest.mark.parametrize("n", [1, 2, 5, 12, 40])
def test_chords_tile_roof_arc(n):
    segs = segment_cross_section(SPEC, n)
    arc = 2 * math.pi - 2 * math.acos(SPEC.center_height / SPEC.tunnel_radius)
    assert len(segs) == n
    assert sum(s.sector_angle for s in segs) == pytest.approx(arc, abs=1e-12)
    assert n * segs[0].sector_angle + 2 * math.acos(1.6 / 5.5) == pytest.approx(2 * math.pi, abs=1e-12)
    for a, b in zip(segs, segs[1:]):
        assert a.end == pytest.approx(b.start, abs=1e-12)
    # chord endpoints on the circle, first and last at road level
    for s in segs:
        for u, z in (s.start, s.end):
            assert math.hypot(u, z - SPEC.center_height) == pytest.approx(5.5, abs=1e-12)
        assert math.hypot(*s.normal) == pytest.approx(1.0, abs=1e-12)
    assert segs[0].start[1] == pytest.approx(0.0, abs=1e-12)
    assert segs[-1].end[1] == pytest.approx(0.0, abs=1e-12)
    assert segs[0].start[0] > 0 > segs[-1].end[0]


def test_normals_point_into_tunnel():
    for s in segment_cross_section(SPEC, 12):
        mu, mz = s.midpoint
        nu, nz = s.normal
        # a step along the normal moves towards the circle centre
        assert math.hypot(mu + nu, mz + nz - 1.6) < math.hypot(mu, mz - 1.6)


def test_cross_section_spec_validation():
    with pytest.raises(GeometryError):
        CrossSectionSpec(5.5, 5.5, 4.0)
    with pytest.raises(GeometryError):
        CrossSectionSpec(-1.0, 0.0, 1.0)
    with pytest.raises(GeometryError):
        CrossSectionSpec(5.5, 1.6, 11.0)
    with pytest.raises(GeometryError):
        segment_cross_section(SPEC, 0)


# ---------------------------------------------------------------- path segmentation

def test_straight_path_only_length_binds():
    segs = segment_tunnel_path(CenterlineSpec.straight(), math.radians(1.15), 100.0, (0, 350))
    assert [round(s.length, 9) for s in segs] == [100, 100, 100, 50]
    assert segs[0].start[1] == 0.0


def test_curved_tunnel_has_seven_segments(curved):
    lengths = [s.length for s in curved.path_segments]
    assert len(lengths) == 7
    assert round(min(lengths)) == 14 and round(max(lengths)) == 78


def _check_path_constraints(cl, segs, dphi, lmax):
    for a, b in zip(segs, segs[1:]):
        assert a.end == b.start
    for s in segs:
        assert s.length <= lmax + 1e-9
        ys = np.arange(s.start[1], s.end[1], 0.1)
        ys = np.append(ys, s.end[1])
        h = cl.heading(ys)
        assert h.max() - h.min() <= dphi + 1e-9


def test_curved_path_constraints_dense(curved):
    p = curved.params
    _check_path_constraints(curved.centerline, curved.path_segments, p.tangent_threshold,
                            p.max_segment_length)


@settings(max_examples=25, deadline=None)
@given(a2=st.floats(-3e-4, 3e-4), a3=st.floats(-5e-7, 5e-7),
       dphi_deg=st.floats(0.5, 3.0), lmax=st.floats(30, 120))
def test_random_cubic_path_constraints(a2, a3, dphi_deg, lmax):
    cl = CenterlineSpec((0.0, 0.0, a2, a3))
    dphi = math.radians(dphi_deg)
    segs = segment_tunnel_path(cl, dphi, lmax, (0.0, 350.0))
    assert segs[0].start[1] == 0.0 and segs[-1].end[1] == pytest.approx(350.0)
    _check_path_constraints(cl, segs, dphi, lmax)


def test_path_extent_warning():
    cl = fit_centerline(np.c_[np.zeros(10), np.linspace(0, 100, 10)], degree=1)
    segs = segment_tunnel_path(cl, 0.02, 100.0, (0.0, 200.0))
    assert segs.warnings and "exceeds fitted range" in segs.warnings[0]


# ---------------------------------------------------------------- error bounds

def test_error_bound_closed_forms():
    assert cross_section_error(5.5, math.radians(18.08)) == pytest.approx(2.0, abs=0.01)
    assert path_error(100.0, math.radians(1.15)) == pytest.approx(2.01, abs=0.01)
    assert cross_section_error(5.5, 0.0) == 0.0
    assert path_error(100.0, 0.0) == 0.0


@given(a=st.floats(1e-4, math.pi / 2 - 1e-3), b=st.floats(1e-4, math.pi / 2 - 1e-3))
def test_error_bounds_strictly_increasing(a, b):
    if abs(a - b) < 1e-6:
        return
    lo, hi = min(a, b), max(a, b)
    assert cross_section_error(5.5, lo) < cross_section_error(5.5, hi)
    assert path_error(100.0, lo) < path_error(100.0, hi)


def test_optimized_params_match_published_limits():
    p = optimize_segmentation_params(SPEC, 2.0, 100.0)
    assert math.degrees(p.sector_angle) == pytest.approx(18.08, abs=0.05)
    assert math.degrees(p.tangent_threshold) == pytest.approx(1.15, abs=0.01)
    assert p.sector_count == 12


@given(limit=st.floats(0.05, 5.0))
def test_optimize_round_trip(limit):
    p = optimize_segmentation_params(SPEC, limit, 100.0)
    eb = segmentation_error_bounds(SPEC, p)
    assert eb.cross_section_bound <= limit + 1e-9
    assert eb.path_bound <= limit + 1e-9
    assert eb.cross_section_bound == pytest.approx(limit, abs=1e-6)
    assert eb.path_bound == pytest.approx(limit, abs=1e-6)
    assert p.sector_count == math.ceil(SPEC.roof_arc_angle / p.sector_angle - 1e-12)


def test_optimize_limit_to_zero_and_cap():
    small = optimize_segmentation_params(SPEC, 1e-3, 100.0, max_sectors=10**6)
    big = optimize_segmentation_params(SPEC, 1.0, 100.0)
    assert small.sector_angle < big.sector_angle and small.tangent_threshold < big.tangent_threshold
    assert small.sector_angle < 1e-3
    with pytest.raises(GeometryError, match="cap"):
        optimize_segmentation_params(SPEC, 1e-4, 100.0, max_sectors=100)
    with pytest.raises(GeometryError):
        optimize_segmentation_params(SPEC, 0.0)


def test_params_validation():
    with pytest.raises(GeometryError):
        SegmentationParams(0, 0.1, 0.1)
    with pytest.raises(GeometryError):
        SegmentationParams(3, 0.0, 0.1)


def test_model_error_budget_uses_built_angle(straight):
    eb = straight.error_budget()
    assert eb.cross_section_bound <= segmentation_error_bounds(SPEC, straight.params).cross_section_bound
    assert eb.total == pytest.approx(eb.cross_section_bound + eb.path_bound)


# ---------------------------------------------------------------- classification

def test_classify_centerline_point(curved):
    y = 123.0
    c = classify_point(curved, RadarPoint(curved.centerline.lateral(y), y))
    # the chord departs from the true curve by less than the path error bound
    assert c.label == "normal" and c.dist_center <= curved.error_budget().path_bound
    seg = curved.path_segment_at(y)
    on_chord = RadarPoint(seg.slope * y + seg.intercept, y)
    assert classify_point(curved, on_chord).dist_center == pytest.approx(0.0, abs=1e-12)


def test_classify_straight_example(straight):
    c = classify_point(straight, RadarPoint(6.0, 100.0))
    assert c.label == "ghost" and c.side == "right" and c.dist_center == pytest.approx(6.0)
    c = classify_point(straight, RadarPoint(-3.0, 100.0))
    assert c.label == "ghost" and c.side == "left"


def test_classify_out_of_extent(straight):
    with pytest.raises(OutOfExtentError):
        classify_point(straight, RadarPoint(0.0, 400.0))


def _lane_polygon(model):
    lo, hi = model.lane_boundaries
    polys = []
    for s in model.path_segments:
        q = math.sqrt(1 + s.slope ** 2)
        y0, y1 = s.start[1], s.end[1]
        corners = [(s.slope * y + s.intercept + u * q, y) for y, u in
                   ((y0, lo), (y1, lo), (y1, hi), (y0, hi))]
        polys.append(Polygon(corners))
    return unary_union(polys)


@pytest.mark.parametrize("tunnel", ["straight", "curved"])
def test_classify_matches_polygon_oracle(tunnel, request):
    model = request.getfixturevalue(tunnel)
    poly = _lane_polygon(model)
    rng = np.random.default_rng(3)
    checked = 0
    for _ in range(3000):
        y = rng.uniform(*model.extent)
        x = float(model.centerline.lateral(y)) + rng.uniform(-6, 6)
        pt = Point(x, y)
        if poly.boundary.distance(pt) < 1e-6:
            continue
        label = classify_point(model, RadarPoint(x, y)).label
        assert (label == "normal") == poly.contains(pt)
        checked += 1
    assert checked > 2900


def test_classify_is_order_independent(curved):
    rng = np.random.default_rng(1)
    pts = [RadarPoint(rng.uniform(-8, 25), rng.uniform(0, 350)) for _ in range(200)]
    a = [classify_point(curved, p) for p in pts]
    order = rng.permutation(len(pts))
    b = {int(k): classify_point(curved, pts[k]) for k in order}
    assert a == [b[k] for k in range(len(pts))]


def test_build_model_lane_and_dump(straight):
    assert straight.lane_boundaries == (-2.0, 2.0)
    assert straight.sector_count == len(straight.roof_segments) == 12
    d = straight.to_dict()
    assert d["params"]["sector_count"] == 12 and len(d["path_segments"]) == 4
    with pytest.raises(GeometryError):
        build_tunnel_model(lane_boundaries=(-3.0, 2.0))
