"""Detection matching, precision/recall/F1 and spatial lag."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class MatchConfig:
    lateral_threshold: float = 1.5
    longitudinal_threshold: float = 5.0

    def __post_init__(self):
        if not (self.lateral_threshold > 0 and self.longitudinal_threshold > 0):
            raise ValueError("match thresholds must be positive")


@dataclass(frozen=True)
class FrameMatch:
    tp: int
    fp: int
    fn: int
    pairs: tuple[tuple[int, int], ...]  # (detection index, truth index) counted as TP


def match_frame(detections: Sequence[Sequence[float]], truths: Sequence[Sequence[float]],
                cfg: MatchConfig = MatchConfig()) -> FrameMatch:
    """Optimal one-to-one assignment on Euclidean distance, thresholds applied per axis after."""
    d = np.asarray(detections, dtype=float).reshape(-1, 2)
    t = np.asarray(truths, dtype=float).reshape(-1, 2)
    if len(d) == 0 or len(t) == 0:
        return FrameMatch(0, len(d), len(t), ())
    cost = np.linalg.norm(d[:, None, :] - t[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(cost)
    pairs = []
    for r, c in zip(rows, cols):
        dx, dy = np.abs(d[r] - t[c])
        if dx <= cfg.lateral_threshold and dy <= cfg.longitudinal_threshold:
            pairs.append((int(r), int(c)))
    tp = len(pairs)
    return FrameMatch(tp, len(d) - tp, len(t) - tp, tuple(sorted(pairs)))


@dataclass
class MetricsReport:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    per_frame: list[tuple[int, int, int]] = field(default_factory=list)
    lag: "LagReport | None" = None
    per_vehicle: dict[int, list[int]] = field(default_factory=dict)  # id -> [matched, present]

    def vehicle_recall(self, vehicle_id: int) -> float:
        hit, total = self.per_vehicle.get(vehicle_id, (0, 0))
        return hit / total if total else 0.0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def merged(self, other: "MetricsReport") -> "MetricsReport":
        return MetricsReport(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn,
                             self.per_frame + other.per_frame)

    def to_dict(self) -> dict:
        d = {"tp": self.tp, "fp": self.fp, "fn": self.fn, "precision": self.precision,
             "recall": self.recall, "f1": self.f1}
        if self.lag is not None:
            d["mean_lag"] = self.lag.mean
            d["unconfirmed"] = self.lag.unconfirmed
        return d


def compute_metrics(counts: Iterable) -> MetricsReport:
    """Aggregate per-frame ``(tp, fp, fn)`` triples or :class:`FrameMatch` records."""
    rep = MetricsReport()
    for c in counts:
        tp, fp, fn = (c.tp, c.fp, c.fn) if isinstance(c, FrameMatch) else c
        if min(tp, fp, fn) < 0:
            raise ValueError("counts must be non-negative")
        rep.tp += tp
        rep.fp += fp
        rep.fn += fn
        rep.per_frame.append((tp, fp, fn))
    return rep


@dataclass(frozen=True)
class LagReport:
    per_vehicle: dict[int, float]
    unconfirmed: tuple[int, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(list(self.per_vehicle.values()))) if self.per_vehicle else float("nan")


def lag_for(first_confirmed_y: float, region_start: float) -> float:
    """Longitudinal distance between the first confirmation and the region boundary."""
    return abs(first_confirmed_y - region_start)


def spatial_lag(first_confirmations: dict[int, float | None], directions: dict[int, int],
                region: Sequence[float] = (50.0, 350.0)) -> LagReport:
    """Lag per vehicle from its first confirmed longitudinal position.

    Vehicles moving away from the radar (+1) enter at ``region[0]``, those
    approaching (-1) at ``region[1]``.  ``None`` marks a vehicle never confirmed.
    """
    per, missing = {}, []
    for vid, y in sorted(first_confirmations.items()):
        if y is None:
            missing.append(vid)
            continue
        d = directions[vid]
        start = region[0] if d > 0 else region[1]
        per[vid] = lag_for(y, start)
    return LagReport(per, tuple(missing))
