"""End-to-end runs: simulate, classify, correct, cluster, track, match."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Sequence

from ..curved_oracle import generate_curved_candidate
from ..detection import ClusterConfig, MultiTracker, TrackerConfig, cluster_frame
from ..ghost_correction import CorrectionConfig, CorrectionRecord, correct_frame, generate_candidate
from ..multipath_sim import ScenarioConfig, simulate_scenario
from ..points import RadarPoint, SimFrame
from ..tunnel_model import OutOfExtentError, SegmentedTunnelModel, classify_point
from .metrics import MatchConfig, MetricsReport, compute_metrics, match_frame, spatial_lag

VARIANTS = ("raw_points", "ghost_removal", "least_distance", "least_path_loss",
            "curve_model", "full")
_POLICY = {"least_distance": "least_distance", "least_path_loss": "least_path_loss",
           "curve_model": "full", "full": "full"}


@dataclass(frozen=True)
class PipelineConfig:
    correction: CorrectionConfig = CorrectionConfig()
    cluster: ClusterConfig = ClusterConfig()
    tracker: TrackerConfig = TrackerConfig()
    match: MatchConfig = MatchConfig()
    uncorrectable: str = "drop"
    predict_previous: bool = False  # shift last frame's vehicles forward one step before distance selection


@dataclass
class TrackRow:
    frame: int
    track_id: int
    x: float
    y: float
    vx: float
    vy: float
    status: str

    def to_dict(self) -> dict:
        return {"frame": self.frame, "track_id": self.track_id, "x": self.x, "y": self.y,
                "vx": self.vx, "vy": self.vy, "status": self.status}


@dataclass
class PipelineResult:
    scenario: str
    variant: str
    report: MetricsReport
    frames: list[SimFrame]
    processed: list[tuple[RadarPoint, ...]]
    tracks: list[TrackRow]
    records: list[tuple[int, CorrectionRecord]] = field(default_factory=list)
    seconds: float = 0.0
    model: SegmentedTunnelModel | None = None

    @property
    def fps(self) -> float:
        return len(self.frames) / self.seconds if self.seconds > 0 else float("inf")


def _label(model: SegmentedTunnelModel, p: RadarPoint) -> str:
    try:
        return classify_point(model, p).label
    except OutOfExtentError:
        return "ghost"


def process_frames(model: SegmentedTunnelModel, frames: Sequence[SimFrame], variant: str,
                   cfg: PipelineConfig = PipelineConfig(), scenario: str = "") -> PipelineResult:
    """Run one pipeline variant over an already simulated frame sequence."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    candidate_fn = generate_curved_candidate if variant == "curve_model" else generate_candidate
    tracker = MultiTracker(cfg.tracker)
    previous: list[tuple[float, float]] = []
    processed, rows, records, counts = [], [], [], []
    first_seen: dict[int, float | None] = {}
    directions: dict[int, int] = {}
    per_vehicle: dict[int, list[int]] = {}
    t0 = time.perf_counter()
    for frame in frames:
        if variant == "raw_points":
            pts = tuple(frame.points)
        elif variant == "ghost_removal":
            pts = tuple(p for p in frame.points if _label(model, p) == "normal")
        else:
            out = correct_frame(model, cfg.correction, frame, previous, _POLICY[variant],
                                cfg.uncorrectable, candidate_fn)
            pts = out.points
            records.extend((frame.index, r) for r in out.records)
        processed.append(pts)
        clusters = cluster_frame(pts, cfg.cluster)
        reported = tracker.step([c.centroid for c in clusters])
        reported_pos = [t.position for t in reported]
        previous = reported_pos if not cfg.predict_previous else [
            (x + vx * cfg.tracker.dt, y + vy * cfg.tracker.dt)
            for (x, y), (vx, vy) in ((t.position, t.state.velocity) for t in reported)]

        for t in tracker.tracks:
            rows.append(TrackRow(frame.index, t.id, *t.position, *t.state.velocity, t.status))
        truths = [(g.x, g.y) for g in frame.ground_truth]
        m = match_frame(reported_pos, truths, cfg.match)
        counts.append(m)
        matched_ids = {frame.ground_truth[ti].vehicle_id for _, ti in m.pairs}
        for g in frame.ground_truth:
            tally = per_vehicle.setdefault(g.vehicle_id, [0, 0])
            tally[0] += g.vehicle_id in matched_ids
            tally[1] += 1
            first_seen.setdefault(g.vehicle_id, None)
            directions.setdefault(g.vehicle_id, 1 if g.vy >= 0 else -1)
        for di, ti in m.pairs:
            vid = frame.ground_truth[ti].vehicle_id
            if first_seen.get(vid) is None:
                first_seen[vid] = reported_pos[di][1]
    seconds = time.perf_counter() - t0
    report = compute_metrics(counts)
    report.lag = spatial_lag(first_seen, directions)
    report.per_vehicle = per_vehicle
    return PipelineResult(scenario, variant, report, list(frames), processed, rows, records,
                          seconds, model)


def pipeline_config_for(scenario: ScenarioConfig, cfg: PipelineConfig | None = None) -> PipelineConfig:
    """Align the correction's radar pose with the scenario's radar."""
    cfg = cfg or PipelineConfig()
    corr = replace(cfg.correction, radar_position=tuple(map(float, scenario.radar.position)))
    return replace(cfg, correction=corr,
                   tracker=replace(cfg.tracker, dt=1.0 / scenario.radar.frame_rate))


def run_pipeline(scenario: ScenarioConfig, variant: str = "full", cfg: PipelineConfig | None = None,
                 frames: Sequence[SimFrame] | None = None) -> PipelineResult:
    if frames is None:
        frames = simulate_scenario(scenario)
    return process_frames(scenario.model, frames, variant, pipeline_config_for(scenario, cfg),
                          scenario.name)


@dataclass(frozen=True)
class RelocationReport:
    corrected: int  # ghost points given a corrected position
    inside: int  # of those, landing inside the generating vehicle's footprint
    uncorrected: int  # ghost points without a selected candidate

    @property
    def rate(self) -> float:
        return self.inside / self.corrected if self.corrected else 0.0

    def merged(self, other: "RelocationReport") -> "RelocationReport":
        return RelocationReport(self.corrected + other.corrected, self.inside + other.inside,
                                self.uncorrected + other.uncorrected)


def relocation(result: PipelineResult, margin: float = 0.0) -> RelocationReport:
    """Score corrected ghost points against the footprint of the vehicle that produced them."""
    truth = {f.index: {g.vehicle_id: g for g in f.ground_truth} for f in result.frames}
    corrected = inside = missing = 0
    for k, rec in result.records:
        g = rec.ghost
        if g.path != "ghost" or g.vehicle_id not in truth.get(k, {}):
            continue
        if rec.position is None:
            missing += 1
            continue
        corrected += 1
        inside += int(truth[k][g.vehicle_id].contains(*rec.position, margin=margin))
    return RelocationReport(corrected, inside, missing)
