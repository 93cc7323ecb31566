import math
from collections import Counter
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tunnelghost.ghost_correction import (
    CandidateRejected, CorrectionConfig, NoCandidateError, PathLossModel, TruePointCandidate,
    _triangle_terms, correct_frame, correct_point, enumerate_reflection_segments,
    fuse_true_position, generate_candidate, select_by_path_loss, select_by_spatial_distance,
    unfold_position,
)
from tunnelghost.harness.scenarios import build_scenario, occlusion
from tunnelghost.multipath_sim import RadarConfig, planar_paths, simulate_scenario, vehicles_at
from tunnelghost.points import RadarPoint, SimFrame

CFG = CorrectionConfig()
ONE_FACET = replace(RadarConfig().noiseless(), facet_offsets=(0.0,))


def cand(l1, l2, pos=(0.0, 100.0), i=1, j=1):
    return TruePointCandidate(pos, i, j, l1, l2, (0.0, 0.0, 0.0), (0.0, 0.0, 0.0))


# ---------------------------------------------------------------- selection

def test_path_loss_examples():
    a = cand(100, 3)
    assert select_by_path_loss([a]) is a
    b = cand(120, 5)
    assert select_by_path_loss([b, a]) is a
    with pytest.raises(NoCandidateError):
        select_by_path_loss([])


def test_path_loss_tie_breaks_on_lowest_indices():
    a, b, c = cand(10, 10, i=3, j=1), cand(20, 5, i=2, j=2), cand(25, 4, i=2, j=1)
    assert select_by_path_loss([a, b, c]) is c


@given(st.lists(st.tuples(st.floats(1, 400), st.floats(0.1, 50)), min_size=1, max_size=8),
       st.floats(1e-3, 1e3))
def test_path_loss_argmax_scale_invariant(pairs, k):
    cs = [cand(l1, l2, i=n + 1) for n, (l1, l2) in enumerate(pairs)]
    scaled = [cand(c.l1 * k, c.l2, i=c.roof_index) for c in cs]
    assert select_by_path_loss(cs).roof_index == select_by_path_loss(scaled).roof_index
    # same ranking as the received power of the radar equation
    pl = PathLossModel()
    best = max(cs, key=lambda c: (pl.received_power(50.0, c.l1, c.l2), -c.roof_index))
    assert select_by_path_loss(cs).roof_index == best.roof_index


def test_spatial_distance_examples():
    a = cand(1, 1, pos=(1.0, 100.0))
    assert select_by_spatial_distance([a], []) is None
    assert select_by_spatial_distance([a], [(0.0, 100.0)], 4.0) is a
    assert select_by_spatial_distance([a], [(5.0, 100.0)], 4.0) is None
    assert select_by_spatial_distance([a], [(1.0, 104.0)], 4.0) is None  # gate is exclusive
    b = cand(1, 1, pos=(1.5, 103.0), i=2)
    assert select_by_spatial_distance([a, b], [(1.5, 104.0), (-30, 0)], 4.0) is b


def test_fuse_examples():
    assert fuse_true_position((2, 100), (4, 102)) == (3, 101)
    assert fuse_true_position((2, 100)) == (2, 100)
    assert fuse_true_position((2, 100), (2, 100)) == (2, 100)
    assert fuse_true_position(cand(1, 1, pos=(1, 1)), cand(1, 1, pos=(3, 5))) == (2, 3)


@given(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)),
       st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)))
def test_fuse_lies_between_inputs(a, b):
    f = np.array(fuse_true_position(a, b))
    a, b = np.array(a), np.array(b)
    assert np.linalg.norm(f - a) + np.linalg.norm(f - b) == pytest.approx(
        np.linalg.norm(b - a), abs=1e-9)
    # the midpoint minimises the summed squared distance
    for probe in (a, b, f + 0.1):
        assert np.sum((f - a) ** 2 + (f - b) ** 2) <= np.sum((probe - a) ** 2 + (probe - b) ** 2) + 1e-9


# ---------------------------------------------------------------- candidates

def _roof_ghost(model, t3, roof, path):
    for p in planar_paths(model, CFG.radar_position, t3):
        if (p.roof_index, p.path_index) == (roof, path):
            return RadarPoint(p.mirrored[0], p.mirrored[1])
    return None


def test_zero_unfolding_distance(straight):
    cs = straight.cross_section
    # pick the chord index counted from the ghost's wall; for a ghost on the right it equals i
    cd, k_alpha, _ = _triangle_terms(straight.sector_count, straight.sector_angle,
                                     cs.tunnel_radius, cs.center_height, 1.5, 3, 1e-6)
    g = RadarPoint(cd - k_alpha, 150.0)
    assert unfold_position(straight, CFG, g, 3, 2, 0.0, 0.0) == pytest.approx((g.x, g.y), abs=1e-12)


def test_exact_plane_round_trip(straight, curved):
    rng = np.random.default_rng(5)
    n = 0
    for model in (straight, curved):
        for _ in range(300):
            y = rng.uniform(60, 330)
            seg = model.path_segment_at(y)
            u = rng.uniform(-1.9, 1.9)
            rx, ry = seg.right_normal
            t = (seg.slope * y + seg.intercept + u * rx, y + u * ry, CFG.car_height)
            for p in planar_paths(model, CFG.radar_position, t):
                c = generate_candidate(model, CFG, RadarPoint(*p.mirrored[:2]), (p.roof_index, p.path_index))
                assert math.dist(c.position, t[:2]) <= 1e-6
                assert c.l1 == pytest.approx(p.l1, rel=1e-9) and c.l2 == pytest.approx(p.l2, rel=1e-9)
                n += 1
    assert n > 500


def test_left_right_symmetry(straight):
    rng = np.random.default_rng(2)
    n_roof = straight.sector_count
    checked = 0
    for _ in range(200):
        g = RadarPoint(rng.uniform(2.5, 9.0), rng.uniform(60, 330))
        j = straight.path_segment_at(g.y).index
        for i in range(1, n_roof + 1):
            right = unfold_position(straight, CFG, g, i, j, 0.0, 0.0)
            try:
                left = unfold_position(straight, CFG, RadarPoint(-g.x, g.y), n_roof + 1 - i, j, 0.0, 0.0)
            except CandidateRejected:
                continue
            assert left == (-right[0], right[1])
            checked += 1
    assert checked > 1000


def test_degenerate_triangle_rejected(straight):
    g = RadarPoint(6.0, 100.0)
    with pytest.raises(CandidateRejected) as exc:
        generate_candidate(straight, replace(CFG, degeneracy_eps=2.0), g, (2, 2))
    assert exc.value.reason == "degenerate"


def test_candidate_outside_lanes_rejected(straight):
    g = RadarPoint(6.0, 100.0)
    reasons = set()
    for i in range(1, 13):
        try:
            c = generate_candidate(straight, CFG, g, (i, 2))
            assert straight.in_lanes(*c.position)
        except CandidateRejected as exc:
            reasons.add(exc.reason)
    assert "outside_lanes" in reasons


# ---------------------------------------------------------------- enumeration

def test_enumeration_far_ghost_is_empty(straight):
    # beyond the tunnel end along the whole ray: no chord plane can be crossed
    assert enumerate_reflection_segments(straight, RadarPoint(3.0, -20.0), CFG.radar_position) == []
    rec = correct_point(straight, CFG, RadarPoint(3.0, -20.0))
    assert not rec.correctable and not rec.candidates


@pytest.mark.parametrize("tunnel", ["straight", "curved"])
def test_enumeration_contains_provenance(tunnel, request):
    model = request.getfixturevalue(tunnel)
    sc = build_scenario("mixed", tunnel, radar=ONE_FACET, model=model)
    n = 0
    for f in simulate_scenario(sc)[::7]:
        for p in f.points:
            if p.path == "ghost":
                segs = enumerate_reflection_segments(model, p, CFG.radar_position)
                assert (p.roof_index, p.path_index) in segs
                n += 1
    assert n > 30


def test_enumeration_is_per_point(curved):
    g = RadarPoint(9.0, 180.0)
    alone = enumerate_reflection_segments(curved, g, CFG.radar_position)
    frame = SimFrame(0, 0.0, (RadarPoint(-4.0, 120.0), g, RadarPoint(12.0, 250.0)))
    out = correct_frame(curved, CFG, frame)
    rec = out.records[1]
    assert rec.ghost == g
    tried = sorted([c.key for c in rec.candidates] + [(r.roof_index, r.path_index) for r in rec.rejections])
    assert tried == alone
    assert rec.position == correct_point(curved, CFG, g).position


def test_provenance_candidate_ranks_first_most_often(curved):
    sc = build_scenario("mixed", "curved", radar=RadarConfig(), model=curved)
    ranks = Counter()
    for f in simulate_scenario(sc)[::3]:
        for p in f.points:
            if p.path != "ghost":
                continue
            rec = correct_point(curved, CFG, p)
            order = sorted(rec.candidates, key=lambda c: (c.l1 * c.l2, c.roof_index, c.path_index))
            keys = [c.key for c in order]
            if (p.roof_index, p.path_index) in keys:
                ranks[keys.index((p.roof_index, p.path_index))] += 1
    assert sum(ranks.values()) > 100
    assert ranks[0] > max(v for k, v in ranks.items() if k > 0)


# ---------------------------------------------------------------- frames

def test_frame_of_normals_is_identity(straight):
    frame = SimFrame(0, 0.0, (RadarPoint(1.0, 80.0, 3.0), RadarPoint(-1.5, 200.0, -2.0)))
    out = correct_frame(straight, CFG, frame)
    assert out.points == frame.points and not out.records and not out.flagged


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(-12, 12), st.floats(55, 340), st.floats(-30, 30)),
                max_size=15),
       st.sampled_from(["drop", "keep"]), st.sampled_from(["full", "least_path_loss", "least_distance"]))
def test_correct_frame_invariants(straight, pts, mode, policy):
    frame = SimFrame(0, 0.0, tuple(RadarPoint(x, y, v) for x, y, v in pts))
    out = correct_frame(straight, CFG, frame, [(1.0, 150.0)], policy, mode)
    normals = [p for p in frame.points if straight.in_lanes(p.x, p.y)]
    assert [p for p in out.points if p in normals] == normals
    n_ghost = len(frame.points) - len(normals)
    assert len(out.records) == n_ghost
    expected = len(frame.points) - (len(out.flagged) if mode == "drop" else 0)
    assert len(out.points) == expected
    for rec in out.records:
        if rec.correctable:
            moved = rec.ghost.moved(*rec.position)
            assert moved in out.points and moved.doppler == rec.ghost.doppler
            assert straight.in_lanes(*rec.position)


def test_noiseless_occluded_car_corrected_within_budget(straight):
    sc = occlusion(straight, radar=ONE_FACET)
    bound = straight.error_budget().total
    n = 0
    for f in simulate_scenario(sc)[::2]:
        car = next((v for v in vehicles_at(sc, f.timestamp) if v.id == 1), None)
        pts = [p for p in f.points if p.vehicle_id == 1]
        if car is None or not pts or any(p.path == "direct" for p in pts):
            continue
        out = correct_frame(straight, CFG, f.with_points(pts))
        for p in out.points:
            assert math.dist(p.xy, car.position) <= bound
            n += 1
    assert n >= 10
