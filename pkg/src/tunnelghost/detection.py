"""Vehicle detection from corrected points: Doppler-weighted DBSCAN plus GNN Kalman tracking."""

from __future__ import annotations

import itertools
import math
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.cluster import DBSCAN

from .points import RadarPoint


@dataclass(frozen=True)
class ClusterConfig:
    weights: tuple[float, float, float] = (1.0, 0.5, 4.0)  # lateral, longitudinal, Doppler
    distance_threshold: float = 4.0
    min_cluster_size: int = 1

    def __post_init__(self):
        if len(self.weights) != 3 or any(w < 0 for w in self.weights):
            raise ValueError("weights must be three non-negative numbers")
        if not self.distance_threshold > 0:
            raise ValueError("distance threshold must be positive")
        if self.min_cluster_size < 1:
            raise ValueError("min cluster size must be at least 1")


def weighted_point_distance(p: RadarPoint, q: RadarPoint, cfg: ClusterConfig = ClusterConfig()) -> float:
    w1, w2, w3 = cfg.weights
    # hypot avoids underflow of tiny squared differences
    return math.hypot(math.sqrt(w1) * (p.x - q.x), math.sqrt(w2) * (p.y - q.y),
                      math.sqrt(w3) * (p.doppler - q.doppler))


def point_features(points: Sequence[RadarPoint], cfg: ClusterConfig) -> np.ndarray:
    """Points scaled so that plain Euclidean distance equals the weighted distance."""
    scale = np.sqrt(np.asarray(cfg.weights, dtype=float))
    if not points:
        return np.zeros((0, 3))
    return np.array([(p.x, p.y, p.doppler) for p in points], dtype=float) * scale


@dataclass(frozen=True)
class Cluster:
    members: tuple[int, ...]  # indices into the clustered point list
    centroid: tuple[float, float]
    doppler: float


def cluster_frame(points: Sequence[RadarPoint], cfg: ClusterConfig = ClusterConfig()) -> list[Cluster]:
    """Density clustering under the weighted distance; clusters ordered by first member."""
    points = list(points)
    if not points:
        return []
    feats = point_features(points, cfg)
    labels = DBSCAN(eps=cfg.distance_threshold, min_samples=cfg.min_cluster_size).fit_predict(feats)
    groups: dict[int, list[int]] = {}
    for k, lab in enumerate(labels):
        if lab >= 0:
            groups.setdefault(int(lab), []).append(k)
    out = []
    for members in sorted(groups.values(), key=lambda m: m[0]):
        xs = [points[k].x for k in members]
        ys = [points[k].y for k in members]
        vs = [points[k].doppler for k in members]
        out.append(Cluster(tuple(members), (float(np.mean(xs)), float(np.mean(ys))),
                           float(np.mean(vs))))
    return out


@dataclass(frozen=True)
class TrackerConfig:
    process_noise: float = 1.0  # white-acceleration intensity, m^2/s^3
    measurement_sigma: tuple[float, float] = (0.5, 1.0)  # lateral, longitudinal
    association_gate: float = 5.0
    dt: float = 0.1
    confirm_hits: int = 3
    max_misses: int = 5
    initial_velocity_sigma: float = 10.0
    report_coasting: int = 0  # confirmed tracks are reported for this many missed frames

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (self.process_noise > 0 and all(s > 0 for s in self.measurement_sigma)):
            raise ValueError("noise parameters must be positive")
        if not self.association_gate > 0:
            raise ValueError("association gate must be positive")


@lru_cache(maxsize=16)
def _cv_matrices(cfg: TrackerConfig):
    dt, q = cfg.dt, cfg.process_noise
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt
    q1 = np.array([[dt ** 3 / 3, dt ** 2 / 2], [dt ** 2 / 2, dt]]) * q
    Q = np.zeros((4, 4))
    Q[np.ix_([0, 2], [0, 2])] = q1
    Q[np.ix_([1, 3], [1, 3])] = q1
    H = np.zeros((2, 4))
    H[0, 0] = H[1, 1] = 1.0
    R = np.diag(np.square(cfg.measurement_sigma))
    for a in (F, Q, H, R):
        a.setflags(write=False)
    return F, Q, H, R


@dataclass
class KalmanState:
    """Constant-velocity state ``(x, y, vx, vy)`` with covariance."""

    mean: np.ndarray
    cov: np.ndarray
    last_update: int = 0

    @classmethod
    def initial(cls, position, cfg: TrackerConfig, frame: int = 0) -> "KalmanState":
        sx, sy = cfg.measurement_sigma
        v = cfg.initial_velocity_sigma ** 2
        return cls(np.array([position[0], position[1], 0.0, 0.0]),
                   np.diag([sx * sx, sy * sy, v, v]), frame)

    @property
    def position(self) -> tuple[float, float]:
        return (float(self.mean[0]), float(self.mean[1]))

    @property
    def velocity(self) -> tuple[float, float]:
        return (float(self.mean[2]), float(self.mean[3]))

    def predict(self, cfg: TrackerConfig) -> None:
        F, Q, _, _ = _cv_matrices(cfg)
        self.mean = F @ self.mean
        P = F @ self.cov @ F.T + Q
        self.cov = 0.5 * (P + P.T)

    def update(self, z, cfg: TrackerConfig, frame: int | None = None) -> None:
        _, _, H, R = _cv_matrices(cfg)
        z = np.asarray(z, dtype=float)
        S = H @ self.cov @ H.T + R
        K = np.linalg.solve(S.T, (self.cov @ H.T).T).T
        self.mean = self.mean + K @ (z - H @ self.mean)
        A = np.eye(4) - K @ H
        P = A @ self.cov @ A.T + K @ R @ K.T  # Joseph form
        self.cov = 0.5 * (P + P.T)
        if frame is not None:
            self.last_update = frame


TENTATIVE, CONFIRMED, DEAD = "tentative", "confirmed", "dead"


@dataclass
class Track:
    id: int
    state: KalmanState
    hit_streak: int = 1
    miss_streak: int = 0
    status: str = TENTATIVE
    history: list[tuple[int, float, float]] = field(default_factory=list)
    confirmed_at: tuple[int, float, float] | None = None  # (frame, x, y)

    @property
    def position(self) -> tuple[float, float]:
        return self.state.position


def assign(cost: np.ndarray, gate: float) -> list[tuple[int, int]]:
    """Optimal one-to-one assignment; pairs costlier than ``gate`` are dropped."""
    if cost.size == 0:
        return []
    big = gate * 1e3 + 1.0
    c = np.where(cost <= gate, cost, big)
    rows, cols = linear_sum_assignment(c)
    return [(int(r), int(k)) for r, k in zip(rows, cols) if cost[r, k] <= gate]


def track_step(tracks: list[Track], detections: Sequence[tuple[float, float]], cfg: TrackerConfig,
               frame: int, id_source) -> tuple[list[Track], list[Track]]:
    """One predict/associate/update cycle.

    Returns the surviving tracks and the tracks reported as vehicles this
    frame.  ``id_source`` is an iterator of fresh track ids.
    """
    for t in tracks:
        t.state.predict(cfg)
    dets = np.asarray(detections, dtype=float).reshape(-1, 2)
    if tracks and len(dets):
        pred = np.array([t.position for t in tracks])
        cost = np.linalg.norm(pred[:, None, :] - dets[None, :, :], axis=2)
    else:
        cost = np.zeros((len(tracks), len(dets)))
    pairs = assign(cost, cfg.association_gate)
    matched_t = {r for r, _ in pairs}
    matched_d = {k for _, k in pairs}

    for r, k in pairs:
        t = tracks[r]
        t.state.update(dets[k], cfg, frame)
        t.hit_streak += 1
        t.miss_streak = 0
    for r, t in enumerate(tracks):
        if r not in matched_t:
            t.miss_streak += 1
            t.hit_streak = 0
    for k in range(len(dets)):
        if k not in matched_d:
            tracks.append(Track(next(id_source), KalmanState.initial(dets[k], cfg, frame)))

    alive, reported = [], []
    for t in tracks:
        if t.miss_streak >= cfg.max_misses:
            t.status = DEAD
            continue
        if t.status == TENTATIVE and t.hit_streak >= cfg.confirm_hits:
            t.status = CONFIRMED
            t.confirmed_at = (frame, *t.position)
        t.history.append((frame, *t.position))
        alive.append(t)
        if t.status == CONFIRMED and t.miss_streak <= cfg.report_coasting:
            reported.append(t)
    return alive, reported


class MultiTracker:
    """Stateful wrapper around :func:`track_step`; ids are never reused."""

    def __init__(self, cfg: TrackerConfig = TrackerConfig()):
        self.cfg = cfg
        self.tracks: list[Track] = []
        self.frame = -1
        self._ids = itertools.count(1)
        self.finished: list[Track] = []

    def step(self, detections: Sequence[tuple[float, float]]) -> list[Track]:
        self.frame += 1
        before = {t.id: t for t in self.tracks}
        self.tracks, reported = track_step(self.tracks, detections, self.cfg, self.frame, self._ids)
        alive = {t.id for t in self.tracks}
        self.finished.extend(t for i, t in before.items() if i not in alive)
        return reported

    @property
    def all_tracks(self) -> list[Track]:
        return self.finished + self.tracks
