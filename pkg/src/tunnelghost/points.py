"""Radar point, ground-truth and frame records shared across modules."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True, slots=True)
class RadarPoint:
    """Top-view radar detection ``(x, y, v_d)`` plus optional simulator provenance."""

    x: float
    y: float
    doppler: float = 0.0
    vehicle_id: int | None = None
    path: str | None = None  # "direct" | "ghost"
    roof_index: int | None = None
    path_index: int | None = None

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.doppler)):
            raise ValueError(f"non-finite radar point ({self.x}, {self.y}, {self.doppler})")

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)

    def moved(self, x: float, y: float) -> "RadarPoint":
        return RadarPoint(x, y, self.doppler, self.vehicle_id, self.path,
                          self.roof_index, self.path_index)

    def to_dict(self) -> dict:
        d = {"x": self.x, "y": self.y, "doppler": self.doppler}
        if self.vehicle_id is not None:
            d["vehicle_id"] = self.vehicle_id
        if self.path is not None:
            d["path"] = self.path
        if self.roof_index is not None:
            d["segment"] = [self.roof_index, self.path_index]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RadarPoint":
        seg = d.get("segment") or (None, None)
        return cls(float(d["x"]), float(d["y"]), float(d.get("doppler", 0.0)),
                   d.get("vehicle_id"), d.get("path"), seg[0], seg[1])


@dataclass(frozen=True, slots=True)
class GroundTruth:
    vehicle_id: int
    x: float
    y: float
    length: float
    width: float
    heading: float = 0.0  # radians from +y towards +x
    kind: str = "car"
    vx: float = 0.0
    vy: float = 0.0

    def contains(self, x: float, y: float, margin: float = 0.0) -> bool:
        """Whether ``(x, y)`` lies inside the oriented footprint."""
        s, c = math.sin(self.heading), math.cos(self.heading)
        dx, dy = x - self.x, y - self.y
        along = dx * s + dy * c
        across = dx * c - dy * s
        return (abs(along) <= self.length / 2 + margin
                and abs(across) <= self.width / 2 + margin)

    def to_dict(self) -> dict:
        return {"vehicle_id": self.vehicle_id, "x": self.x, "y": self.y,
                "length": self.length, "width": self.width, "heading": self.heading,
                "kind": self.kind, "vx": self.vx, "vy": self.vy}

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(int(d["vehicle_id"]), float(d["x"]), float(d["y"]), float(d["length"]),
                   float(d["width"]), float(d.get("heading", 0.0)), d.get("kind", "car"),
                   float(d.get("vx", 0.0)), float(d.get("vy", 0.0)))


@dataclass(frozen=True)
class SimFrame:
    index: int
    timestamp: float
    points: tuple[RadarPoint, ...]
    ground_truth: tuple[GroundTruth, ...] = ()

    def with_points(self, points) -> "SimFrame":
        return SimFrame(self.index, self.timestamp, tuple(points), self.ground_truth)
