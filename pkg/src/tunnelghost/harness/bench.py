"""Per-point correction cost, segmented planes vs the Newton curved path."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from ..curved_oracle import generate_curved_candidate
from ..detection import ClusterConfig, MultiTracker, TrackerConfig, cluster_frame
from ..ghost_correction import CorrectionConfig, correct_frame, correct_point, generate_candidate
from ..multipath_sim import RadarConfig, _measure, planar_paths
from ..points import RadarPoint, SimFrame
from ..tunnel_model import OutOfExtentError, SegmentedTunnelModel, classify_point


@dataclass(frozen=True)
class BenchReport:
    points: int
    frame_size: int
    segmented_per_point: float  # seconds
    curved_per_point: float
    frame_seconds: float  # segmented correction + clustering + tracking, one frame
    frames_timed: int

    @property
    def speedup(self) -> float:
        return self.curved_per_point / self.segmented_per_point

    @property
    def projected_fps(self) -> float:
        return 1.0 / self.frame_seconds

    @property
    def curved_projected_fps(self) -> float:
        """Frame rate if the correction step used the curved path instead."""
        extra = (self.curved_per_point - self.segmented_per_point) * self.frame_size
        return 1.0 / (self.frame_seconds + extra)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(speedup=self.speedup, projected_fps=self.projected_fps,
                 curved_projected_fps=self.curved_projected_fps)
        return d


def ghost_batch(model: SegmentedTunnelModel, n: int, seed: int = 0,
                radar: RadarConfig | None = None, car_height: float = 1.5) -> list[RadarPoint]:
    """``n`` ghost points from roof reflections of random in-lane vehicles."""
    radar = radar or RadarConfig()
    rng = np.random.default_rng(seed)
    o = tuple(map(float, radar.position))
    lo_lane, hi_lane = model.lane_boundaries
    y_lo, y_hi = radar.range_gate[0] + o[1], min(radar.range_gate[1] + o[1], model.extent[1])
    out: list[RadarPoint] = []
    while len(out) < n:
        y = rng.uniform(y_lo, y_hi)
        u = rng.uniform(lo_lane + 0.5, hi_lane - 0.5)
        seg = model.path_segment_at(y)
        rx, ry = seg.right_normal
        cx = model.centerline.lateral(y)
        target = (float(cx + u * rx), float(y + u * ry), car_height)
        for path in planar_paths(model, o, target):
            meas = _measure(radar, path.mirrored, rng, True)
            if meas is None:
                continue
            p = RadarPoint(meas[0], meas[1], float(rng.normal(0, 5)), None, "ghost",
                           path.roof_index, path.path_index)
            try:
                if classify_point(model, p).label != "ghost":
                    continue
            except OutOfExtentError:
                continue
            out.append(p)
            if len(out) == n:
                break
    return out


def time_correction(model: SegmentedTunnelModel, config: CorrectionConfig,
                    ghosts: Sequence[RadarPoint], candidate_fn=generate_candidate,
                    repeats: int = 1) -> float:
    """Best-of-``repeats`` wall time for correcting every ghost once, in seconds."""
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for g in ghosts:
            correct_point(model, config, g, (), "full", candidate_fn)
        best = min(best, time.perf_counter() - t0)
    return best


def time_frames(model: SegmentedTunnelModel, config: CorrectionConfig,
                ghosts: Sequence[RadarPoint], frame_size: int,
                cluster: ClusterConfig = ClusterConfig(),
                tracker: TrackerConfig = TrackerConfig()) -> tuple[float, int]:
    """Mean seconds per frame for correction + clustering + tracking, and frame count."""
    frames = [SimFrame(k, k * tracker.dt, tuple(ghosts[i:i + frame_size]))
              for k, i in enumerate(range(0, len(ghosts) - frame_size + 1, frame_size))]
    if not frames:
        frames = [SimFrame(0, 0.0, tuple(ghosts))]
    mt = MultiTracker(tracker)
    previous: list[tuple[float, float]] = []
    t0 = time.perf_counter()
    for f in frames:
        out = correct_frame(model, config, f, previous)
        clusters = cluster_frame(out.points, cluster)
        previous = [t.position for t in mt.step([c.centroid for c in clusters])]
    return (time.perf_counter() - t0) / len(frames), len(frames)


def bench(model: SegmentedTunnelModel, ghosts: Sequence[RadarPoint], frame_size: int = 200,
          config: CorrectionConfig = CorrectionConfig(), repeats: int = 1) -> BenchReport:
    if not ghosts:
        raise ValueError("bench needs at least one ghost point")
    warm = ghosts[: min(50, len(ghosts))]
    time_correction(model, config, warm)
    time_correction(model, config, warm, generate_curved_candidate)
    seg = time_correction(model, config, ghosts, repeats=repeats)
    cur = time_correction(model, config, ghosts, generate_curved_candidate, repeats)
    per_frame, n_frames = time_frames(model, config, ghosts, frame_size)
    n = len(ghosts)
    return BenchReport(n, frame_size, seg / n, cur / n, per_frame, n_frames)
