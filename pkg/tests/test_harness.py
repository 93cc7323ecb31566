import itertools
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tunnelghost.harness.config import (
    EXAMPLE_CONFIG, ConfigError, parse_config, pipeline_from_config, scenario_from_config,
    tunnel_from_config,
)
from tunnelghost.harness.evaluate import run_suite
from tunnelghost.harness.metrics import MatchConfig, compute_metrics, match_frame, spatial_lag
from tunnelghost.detection import TrackerConfig
from tunnelghost.harness.pipeline import PipelineConfig, process_frames, relocation, run_pipeline
from tunnelghost.harness.records import (
    RecordError, read_frames, read_jsonl, read_metrics_csv, read_timing, write_candidates,
    write_frames, write_ground_truth, write_metrics_csv, write_timing, write_tracks,
)
from tunnelghost.harness.scenarios import SUITE, behind, build_scenario, facing, single_car
from tunnelghost.multipath_sim import RadarConfig, simulate_scenario
from tunnelghost.tunnel_model import classify_point

NOISELESS = RadarConfig().noiseless()


# ---------------------------------------------------------------- matching

def test_match_examples():
    m = match_frame([(1.0, 100.0)], [(1.0, 100.0)])
    assert (m.tp, m.fp, m.fn) == (1, 0, 0)
    m = match_frame([(3.0, 100.0)], [(1.0, 100.0)])
    assert (m.tp, m.fp, m.fn) == (0, 1, 1)
    m = match_frame([(1.0, 104.9)], [(1.0, 100.0)])
    assert m.tp == 1
    m = match_frame([], [(0, 0), (1, 1)])
    assert (m.tp, m.fp, m.fn) == (0, 0, 2)


def test_match_assignment_is_optimal():
    rng = np.random.default_rng(8)
    wide = MatchConfig(1e9, 1e9)
    for _ in range(5):
        d = rng.uniform(0, 20, (8, 2))
        t = rng.uniform(0, 20, (8, 2))
        m = match_frame(d, t, wide)
        total = sum(math.dist(d[i], t[j]) for i, j in m.pairs)
        best = min(sum(math.dist(d[i], t[p[i]]) for i in range(8))
                   for p in itertools.permutations(range(8)))
        assert m.tp == 8 and total == pytest.approx(best)


pos = st.tuples(st.floats(-5, 5), st.floats(0, 30))


@given(st.lists(pos, max_size=7), st.lists(pos, max_size=7), st.randoms())
def test_match_permutation_invariant(dets, truths, rnd):
    a = match_frame(dets, truths)
    d2, t2 = list(dets), list(truths)
    rnd.shuffle(d2)
    rnd.shuffle(t2)
    b = match_frame(d2, t2)
    assert (a.tp, a.fp, a.fn) == (b.tp, b.fp, b.fn)
    assert a.tp + a.fp == len(dets) and a.tp + a.fn == len(truths)


def test_metrics_examples():
    r = compute_metrics([(9, 1, 2)])
    assert r.precision == pytest.approx(0.9) and r.recall == pytest.approx(9 / 11)
    assert r.f1 == pytest.approx(0.857, abs=1e-3)
    z = compute_metrics([(0, 0, 0)])
    assert (z.precision, z.recall, z.f1) == (0, 0, 0)
    p = compute_metrics([(5, 0, 0), (3, 0, 0)])
    assert (p.precision, p.recall, p.f1) == (1, 1, 1)
    with pytest.raises(ValueError):
        compute_metrics([(1, -1, 0)])


@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50)), max_size=20))
def test_metrics_bounds(counts):
    r = compute_metrics(counts)
    for v in (r.precision, r.recall, r.f1):
        assert 0 <= v <= 1
    if r.precision + r.recall > 0:
        assert r.f1 == pytest.approx(2 * r.precision * r.recall / (r.precision + r.recall))


# ---------------------------------------------------------------- lag

def test_lag_examples():
    rep = spatial_lag({1: 60.0, 2: 50.0, 3: None, 4: 330.0}, {1: 1, 2: 1, 3: 1, 4: -1})
    assert rep.per_vehicle == {1: 10.0, 2: 0.0, 4: 20.0}
    assert rep.unconfirmed == (3,)
    assert rep.mean == pytest.approx(10.0)
    assert math.isnan(spatial_lag({1: None}, {1: 1}).mean)


@pytest.mark.parametrize("tunnel", ["straight", "curved"])
def test_lag_lower_when_traffic_moves_with_boresight(tunnel, request):
    model = request.getfixturevalue(tunnel)
    same = run_pipeline(behind(model), "full").report.lag
    opposite = run_pipeline(facing(model), "full").report.lag
    assert not same.unconfirmed and not opposite.unconfirmed
    assert same.mean < opposite.mean


# ---------------------------------------------------------------- pipeline

@pytest.mark.parametrize("tunnel", ["straight", "curved"])
def test_noiseless_single_car_is_perfect(tunnel, request):
    model = request.getfixturevalue(tunnel)
    sc = single_car(model, radar=NOISELESS)
    instant = PipelineConfig(tracker=TrackerConfig(confirm_hits=1))
    assert run_pipeline(sc, "full", instant).report.f1 == 1.0
    # with the 3-hit birth rule only the two frames before confirmation are missed
    rep = run_pipeline(sc, "full").report
    assert rep.precision == 1.0 and rep.fn == TrackerConfig().confirm_hits - 1
    assert rep.per_frame[:2] == [(0, 0, 1), (0, 0, 1)]


def test_rerun_is_bit_identical():
    sc = build_scenario("mixed", "curved", seed=3, duration=4.0)
    a = run_pipeline(sc, "full")
    b = run_pipeline(sc, "full")
    assert a.processed == b.processed
    assert [t.to_dict() for t in a.tracks] == [t.to_dict() for t in b.tracks]
    assert a.report.per_frame == b.report.per_frame


def test_ghost_removal_drops_exactly_the_ghosts(straight):
    frames = simulate_scenario(build_scenario("trucks", duration=3.0))
    res = process_frames(straight, frames, "ghost_removal")
    for f, pts in zip(frames, res.processed):
        assert list(pts) == [p for p in f.points if classify_point(straight, p).label == "normal"]


def test_raw_points_untouched(straight):
    frames = simulate_scenario(build_scenario("cars", duration=2.0))
    res = process_frames(straight, frames, "raw_points")
    assert [tuple(f.points) for f in frames] == res.processed


def test_unknown_variant_rejected(straight):
    with pytest.raises(ValueError, match="unknown variant"):
        process_frames(straight, [], "magic")


def test_suite_totals_merge_runs():
    res = run_suite([("single_car", "straight", "entrance")], seeds=(0, 1),
                    variants=("raw_points", "full"), radar=NOISELESS)
    assert len(res.results) == 4
    assert {r.scenario for r in res.results} == {"single_car-straight-entrance-s0",
                                                 "single_car-straight-entrance-s1"}
    tot = res.totals()["full"]
    assert tot.tp == sum(r.report.tp for r in res.results if r.variant == "full")
    assert [r["scenario"] for r in res.total_rows()] == ["TOTAL", "TOTAL"]


def test_relocation_counts_only_simulated_ghosts(straight):
    r = run_pipeline(single_car(straight, radar=NOISELESS), "full")
    rel = relocation(r)
    n_ghost = sum(p.path == "ghost" for f in r.frames for p in f.points
                  if classify_point(straight, p).label == "ghost")
    assert rel.corrected + rel.uncorrected == n_ghost
    assert 0 <= rel.inside <= rel.corrected


# ---------------------------------------------------------------- records

def test_frame_log_round_trip(tmp_path):
    frames = simulate_scenario(build_scenario("mixed", "curved", duration=1.0))
    write_frames(tmp_path / "f.jsonl", frames, scenario="x", seed=0)
    write_ground_truth(tmp_path / "g.jsonl", frames)
    back = read_frames(tmp_path / "f.jsonl", tmp_path / "g.jsonl")
    assert back == frames
    header, _ = read_jsonl(tmp_path / "f.jsonl", "tunnelghost.frames/1")
    assert header == {"schema": "tunnelghost.frames/1", "scenario": "x", "seed": 0}


def test_track_candidate_metric_timing_files(tmp_path, straight):
    r = run_pipeline(build_scenario("cars", duration=2.0), "full")
    write_tracks(tmp_path / "t.jsonl", r.tracks)
    _, rows = read_jsonl(tmp_path / "t.jsonl", "tunnelghost.tracks/1")
    assert len(rows) == len(r.tracks) and set(rows[0]) == {"frame", "track_id", "x", "y", "vx", "vy", "status"}
    write_candidates(tmp_path / "c.jsonl", r.records)
    _, rows = read_jsonl(tmp_path / "c.jsonl", "tunnelghost.candidates/1")
    assert len(rows) == len(r.records)
    for row in rows:
        flags = [c["by_signal"] for c in row["candidates"]]
        assert sum(flags) == (1 if row["candidates"] else 0)
    from tunnelghost.harness.records import metrics_row
    write_metrics_csv(tmp_path / "m.csv", [metrics_row(r)])
    (back,) = read_metrics_csv(tmp_path / "m.csv")
    assert back["tp"] == r.report.tp and back["f1"] == r.report.f1
    write_timing(tmp_path / "timing.jsonl", {"points": 5, "fps": 12.5})
    assert read_timing(tmp_path / "timing.jsonl") == {"points": 5, "fps": 12.5}


def test_record_errors_carry_line(tmp_path):
    p = tmp_path / "f.jsonl"
    p.write_text('{"schema": "tunnelghost.frames/1"}\n{"index": 0, "timestamp": 0, "points": []}\nnot json\n')
    with pytest.raises(RecordError, match=r"f\.jsonl:3: invalid JSON"):
        read_frames(p)
    p.write_text('{"schema": "other/1"}\n')
    with pytest.raises(RecordError, match=r":1: schema 'other/1'"):
        read_frames(p)
    p.write_text('{"schema": "tunnelghost.frames/1"}\n{"index": 0}\n')
    with pytest.raises(RecordError, match=r":2: bad frame record"):
        read_frames(p)
    with pytest.raises(RecordError, match="missing"):
        (tmp_path / "m.csv").write_text("a,b\n")
        read_metrics_csv(tmp_path / "m.csv")


# ---------------------------------------------------------------- config

def test_example_config_builds():
    cfg = parse_config(EXAMPLE_CONFIG, "example.yaml")
    sc = scenario_from_config(cfg)
    assert sc.name == "mixed-curved-entrance" and sc.radar.dropout == 0.2
    p = pipeline_from_config(cfg)
    assert p.correction.association_gate == 4.0 and p.cluster.weights == (1.0, 0.5, 4.0)


def test_config_overrides_and_custom_tunnel():
    cfg = parse_config("tunnel:\n  cross_section: {tunnel_radius: 6.0, center_height: 1.0}\n"
                       "  centerline: [0.5, 0.0]\n  extent: [0, 200]\n"
                       "vehicles:\n  - {id: 7, waypoints: [[60, 1.0], [190, 1.0]], speed: 15}\n"
                       "duration: 2\n")
    name, model = tunnel_from_config(cfg)
    assert name == "custom" and model.extent == (0.0, 200.0)
    assert model.cross_section.tunnel_radius == 6.0
    sc = scenario_from_config(cfg, deployment="exit", seed=9)
    assert sc.seed == 9 and sc.vehicles[0].waypoints == ((190.0, -1.0), (60.0, -1.0))


@pytest.mark.parametrize("text, match", [
    ("scenario: cars\nbogus: 1\n", r"<config>:2: bogus: unknown key"),
    ("tunnel: bent\n", r":1: tunnel: unknown tunnel 'bent'"),
    ("scenario: parade\n", r":1: scenario: unknown scenario 'parade'"),
    ("radar:\n  dropout: 1.5\n", r":1: radar: dropout"),
    ("pipeline:\n  cluster:\n    radius: 3\n", r":3: pipeline.cluster.radius: unknown field"),
    ("pipeline:\n  uncorrectable: maybe\n", r":2: pipeline.uncorrectable"),
    ("vehicles:\n  - {id: 1, waypoints: [[60, 1.9], [90, 1.9]], speed: 5}\n", r"leaves the lanes"),
    ("a: [1, 2\n", r"invalid YAML"),
    ("- 1\n", r"top level must be a mapping"),
])
def test_config_errors_have_line_context(text, match):
    with pytest.raises(ConfigError, match=match):
        cfg = parse_config(text)
        scenario_from_config(cfg)
        pipeline_from_config(cfg)


def test_noiseless_suite_fusion_not_worse_than_either_rule():
    f1 = run_suite(SUITE, (0,), ("least_distance", "least_path_loss", "full"),
                   radar=RadarConfig().noiseless()).f1()
    assert f1["full"] >= f1["least_distance"]
    assert f1["full"] >= f1["least_path_loss"]
