"""Segmented tunnel geometry.

Coordinates are top-view ``(x, y)`` with ``y`` the longitudinal axis (radar
boresight, metres from the tunnel origin) and ``x`` the lateral axis, positive
to the right when looking along ``+y``.  Heights ``z`` are measured from the
road surface.

Inside a cross-section the lateral coordinate ``u`` is the signed offset from
the local path-segment line (same sign convention as ``x``).  The circular roof
has its centre at ``(u, z) = (0, H_center)``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np


class GeometryError(ValueError):
    """Invalid tunnel geometry or segmentation request."""


class OutOfExtentError(GeometryError):
    """A point lies outside the longitudinal extent of the model."""


@dataclass(frozen=True)
class CrossSectionSpec:
    tunnel_radius: float = 5.5
    center_height: float = 1.6
    road_width: float = 4.0

    def __post_init__(self):
        r, h, w = self.tunnel_radius, self.center_height, self.road_width
        if not all(math.isfinite(v) for v in (r, h, w)):
            raise GeometryError("cross-section parameters must be finite")
        if r <= 0:
            raise GeometryError(f"tunnel radius must be positive, got {r}")
        if not 0 <= h < r:
            raise GeometryError(
                f"centre height must satisfy 0 <= H_center < R_tunnel, got {h} vs {r}")
        if not 0 < w < 2 * r:
            raise GeometryError(f"road width must lie in (0, 2R), got {w}")

    @property
    def roof_arc_angle(self) -> float:
        """Angle subtended by the part of the circle above the road."""
        return 2 * math.pi - 2 * math.acos(self.center_height / self.tunnel_radius)

    @property
    def ground_half_width(self) -> float:
        return math.sqrt(self.tunnel_radius ** 2 - self.center_height ** 2)


@dataclass(frozen=True)
class CenterlineSpec:
    """Centerline as lateral offset polynomial in the longitudinal coordinate.

    ``coefficients[k]`` multiplies ``y**k``.
    """

    coefficients: tuple[float, ...]
    residual_rms: float = 0.0
    valid_range: tuple[float, float] | None = None

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        if len(coeffs) < 2:
            raise GeometryError("centerline needs degree >= 1 (at least two coefficients)")
        if not all(math.isfinite(c) for c in coeffs):
            raise GeometryError("centerline coefficients must be finite")
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def straight(cls, offset: float = 0.0, slope: float = 0.0, degree: int = 3):
        return cls((offset, slope) + (0.0,) * (degree - 1))

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def lateral(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        for c in reversed(self.coefficients):
            out = out * y + c
        return out if out.ndim else float(out)

    def slope(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        for k in range(self.degree, 0, -1):
            out = out * y + k * self.coefficients[k]
        return out if out.ndim else float(out)

    def curvature_term(self, y):
        """Second derivative of the lateral offset."""
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        for k in range(self.degree, 1, -1):
            out = out * y + k * (k - 1) * self.coefficients[k]
        return out if out.ndim else float(out)

    def heading(self, y):
        """Tangent angle relative to the +y axis (radians, positive towards +x)."""
        return np.arctan(self.slope(y))

    def point(self, y) -> np.ndarray:
        return np.array([self.lateral(y), y], dtype=float)

    def heading_range(self, y0: float, y1: float) -> tuple[float, float]:
        """Exact min/max tangent heading over ``[y0, y1]``."""
        lo, hi = min(y0, y1), max(y0, y1)
        ys = [lo, hi]
        if self.degree >= 3:
            second = [k * (k - 1) * self.coefficients[k] for k in range(2, self.degree + 1)]
            roots = np.polynomial.polynomial.polyroots(second) if any(second[1:]) else []
            for r in np.atleast_1d(roots):
                if abs(r.imag) < 1e-12 and lo < r.real < hi:
                    ys.append(float(r.real))
        h = self.heading(np.array(ys))
        return float(h.min()), float(h.max())


def fit_centerline(samples, degree: int = 3) -> CenterlineSpec:
    """Least-squares polynomial fit of calibration positions.

    ``samples`` is an ``(n, 2)`` array of ``(x, y)`` top-view positions; the
    fit expresses ``x`` as a polynomial in ``y``.
    """
    pts = np.asarray(samples, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise GeometryError(f"samples must have shape (n, 2), got {pts.shape}")
    if degree < 1:
        raise GeometryError(f"degree must be >= 1, got {degree}")
    if not np.all(np.isfinite(pts)):
        raise GeometryError("calibration samples contain non-finite values")
    x, y = pts[:, 0], pts[:, 1]
    n_distinct = len(np.unique(y))
    if len(y) < degree + 1 or n_distinct < degree + 1:
        raise GeometryError(
            f"underdetermined fit: degree {degree} needs {degree + 1} distinct "
            f"longitudinal positions, got {n_distinct} of {len(y)} samples")

    # centre and scale y so the Vandermonde columns stay well conditioned
    shift = 0.5 * (y.min() + y.max())
    scale = max(0.5 * (y.max() - y.min()), 1.0)
    t = (y - shift) / scale
    vander = np.vander(t, degree + 1, increasing=True)
    coef_t, *_ = np.linalg.lstsq(vander, x, rcond=None)

    # expand sum c_k ((y - shift)/scale)^k back into powers of y
    poly = np.polynomial.Polynomial(coef_t)
    expanded = poly(np.polynomial.Polynomial([-shift / scale, 1.0 / scale]))
    coeffs = np.zeros(degree + 1)
    coeffs[: len(expanded.coef)] = expanded.coef
    resid = x - vander @ coef_t
    rms = float(np.sqrt(np.mean(resid ** 2)))
    return CenterlineSpec(tuple(coeffs), residual_rms=rms,
                          valid_range=(float(y.min()), float(y.max())))


@dataclass(frozen=True)
class RoofSegment:
    """One roof chord in the cross-section frame.

    ``index`` runs 1..N starting at the right wall (``u > 0``) and going over
    the roof to the left wall.
    """

    index: int
    start: tuple[float, float]
    end: tuple[float, float]
    normal: tuple[float, float]  # unit, pointing into the tunnel
    sector_angle: float
    start_angle: float
    end_angle: float

    @cached_property
    def lateral_band(self) -> tuple[float, float]:
        return min(self.start[0], self.end[0]), max(self.start[0], self.end[0])

    @property
    def midpoint(self) -> tuple[float, float]:
        return (0.5 * (self.start[0] + self.end[0]), 0.5 * (self.start[1] + self.end[1]))


def segment_cross_section(spec: CrossSectionSpec, sector_count: int) -> tuple[RoofSegment, ...]:
    """Split the roof arc into ``sector_count`` equal chords."""
    if sector_count < 1:
        raise GeometryError(f"sector count must be >= 1, got {sector_count}")
    r, h = spec.tunnel_radius, spec.center_height
    theta = spec.roof_arc_angle / sector_count
    base = -math.asin(h / r)
    segments = []
    for i in range(1, sector_count + 1):
        a0 = base + (i - 1) * theta
        a1 = base + i * theta
        p0 = (r * math.cos(a0), h + r * math.sin(a0))
        p1 = (r * math.cos(a1), h + r * math.sin(a1))
        mid = 0.5 * (a0 + a1)
        normal = (-math.cos(mid), -math.sin(mid))
        segments.append(RoofSegment(i, p0, p1, normal, theta, a0, a1))
    return tuple(segments)


@dataclass(frozen=True)
class PathSegment:
    """Straight piece of the centerline, ``x = slope * y + intercept``."""

    index: int
    start: tuple[float, float]
    end: tuple[float, float]
    slope: float
    intercept: float
    length: float

    @property
    def direction(self) -> tuple[float, float]:
        dx, dy = self.end[0] - self.start[0], self.end[1] - self.start[1]
        n = math.hypot(dx, dy)
        return dx / n, dy / n

    @property
    def right_normal(self) -> tuple[float, float]:
        tx, ty = self.direction
        return ty, -tx

    def offset(self, x: float, y: float) -> float:
        """Signed lateral offset of ``(x, y)`` from the segment line (right positive)."""
        return (x - self.slope * y - self.intercept) / math.sqrt(1.0 + self.slope ** 2)


@dataclass(frozen=True)
class PathSegmentation:
    segments: tuple[PathSegment, ...]
    warnings: tuple[str, ...] = ()

    def __iter__(self) -> Iterator[PathSegment]:
        return iter(self.segments)

    def __len__(self) -> int:
        return len(self.segments)

    def __getitem__(self, k) -> PathSegment:
        return self.segments[k]


def _make_path_segment(index: int, p0, p1) -> PathSegment:
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    if dy <= 0:
        raise GeometryError("path segments must advance along +y")
    slope = dx / dy
    return PathSegment(index, (float(p0[0]), float(p0[1])), (float(p1[0]), float(p1[1])),
                       slope, p0[0] - slope * p0[1], math.hypot(dx, dy))


def segment_tunnel_path(centerline: CenterlineSpec, max_angle: float,
                        max_length: float = 100.0,
                        extent: tuple[float, float] = (0.0, 360.0)) -> PathSegmentation:
    """Divide the centerline into chords.

    Each chord is extended as far as possible while the tangent heading over
    its span varies by at most ``max_angle`` and its length stays within
    ``max_length``.  The first dividing point sits at ``extent[0]``.
    """
    if not max_angle > 0:
        raise GeometryError(f"tangent threshold must be positive, got {max_angle}")
    if not max_length > 0:
        raise GeometryError(f"max segment length must be positive, got {max_length}")
    y_start, y_end = map(float, extent)
    if not y_end > y_start:
        raise GeometryError(f"empty extent {extent}")

    warns = []
    if centerline.valid_range is not None:
        lo, hi = centerline.valid_range
        if y_start < lo - 1e-9 or y_end > hi + 1e-9:
            warns.append(f"extent [{y_start}, {y_end}] exceeds fitted range [{lo}, {hi}]")

    def admissible(y0: float, y1: float) -> bool:
        hmin, hmax = centerline.heading_range(y0, y1)
        if hmax - hmin > max_angle:
            return False
        return math.dist(centerline.point(y0), centerline.point(y1)) <= max_length

    segments = []
    y0 = y_start
    while y0 < y_end - 1e-9:
        hi = min(y_end, y0 + max_length)
        if admissible(y0, hi):
            y1 = hi
        else:
            lo = y0
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if admissible(y0, mid):
                    lo = mid
                else:
                    hi = mid
                if hi - lo < 1e-9:
                    break
            y1 = lo
            if y1 - y0 < 1e-6:
                raise GeometryError(f"centerline too curved to segment near y={y0}")
        segments.append(_make_path_segment(len(segments) + 1, centerline.point(y0),
                                           centerline.point(y1)))
        y0 = y1
    return PathSegmentation(tuple(segments), tuple(warns))


@dataclass(frozen=True)
class SegmentationParams:
    """Segmentation controls.

    ``sector_angle`` is the largest admissible sector angle; the roof is then
    split into ``sector_count`` equal chords whose actual angle
    (``roof_arc / sector_count``) never exceeds it.
    """

    sector_count: int
    sector_angle: float
    tangent_threshold: float
    max_segment_length: float = 100.0

    def __post_init__(self):
        if self.sector_count < 1:
            raise GeometryError("sector count must be >= 1")
        if not (self.sector_angle > 0 and self.tangent_threshold > 0):
            raise GeometryError("sector angle and tangent threshold must be positive")
        if not self.max_segment_length > 0:
            raise GeometryError("max segment length must be positive")


@dataclass(frozen=True)
class ErrorBudget:
    cross_section_bound: float
    path_bound: float

    @property
    def total(self) -> float:
        return self.cross_section_bound + self.path_bound


def cross_section_error(radius: float, sector_angle: float) -> float:
    s = math.sin(sector_angle / 2)
    return 2 * radius * (s + s * s)


def path_error(max_length: float, tangent_threshold: float) -> float:
    return max_length * math.tan(tangent_threshold)


def segmentation_error_bounds(spec: CrossSectionSpec, params: SegmentationParams) -> ErrorBudget:
    return ErrorBudget(cross_section_error(spec.tunnel_radius, params.sector_angle),
                       path_error(params.max_segment_length, params.tangent_threshold))


def optimize_segmentation_params(spec: CrossSectionSpec, resolution_limit: float = 2.0,
                                 max_length: float = 100.0,
                                 max_sectors: int = 10_000) -> SegmentationParams:
    """Largest sector angle and tangent threshold whose error stays within the limit."""
    if not resolution_limit > 0:
        raise GeometryError(f"resolution limit must be positive, got {resolution_limit}")
    r = spec.tunnel_radius
    lo, hi = 0.0, math.pi
    if cross_section_error(r, hi) <= resolution_limit:
        lo = hi
    else:
        while hi - lo > 1e-9:
            mid = 0.5 * (lo + hi)
            if cross_section_error(r, mid) <= resolution_limit:
                lo = mid
            else:
                hi = mid
    theta = lo
    if theta <= 0:
        raise GeometryError(f"resolution limit {resolution_limit} too small")
    n = math.ceil(spec.roof_arc_angle / theta - 1e-12)
    if n > max_sectors:
        raise GeometryError(
            f"resolution limit {resolution_limit} m needs {n} sectors, above the cap of {max_sectors}")
    dphi = math.atan(resolution_limit / max_length)
    return SegmentationParams(n, theta, dphi, max_length)


@dataclass(frozen=True)
class PointClass:
    label: str  # "ghost" | "normal"
    side: str  # "left" | "right" | "on-lane"
    path_segment_index: int
    dist_center: float
    offset: float


@dataclass(frozen=True)
class SegmentedTunnelModel:
    cross_section: CrossSectionSpec
    centerline: CenterlineSpec
    roof_segments: tuple[RoofSegment, ...]
    path_segments: tuple[PathSegment, ...]
    params: SegmentationParams
    lane_boundaries: tuple[float, float]  # (left, right) signed offsets, left < right
    extent: tuple[float, float]
    warnings: tuple[str, ...] = ()
    _breaks: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        left, right = self.lane_boundaries
        half = self.cross_section.road_width / 2
        if not (-half - 1e-9 <= left < right <= half + 1e-9):
            raise GeometryError(
                f"lane boundaries {self.lane_boundaries} must lie within the road width")
        if len(self.roof_segments) != self.params.sector_count:
            raise GeometryError("roof segment count does not match the sector count")
        breaks = [s.start[1] for s in self.path_segments] + [self.path_segments[-1].end[1]]
        object.__setattr__(self, "_breaks", tuple(float(b) for b in breaks))

    @property
    def sector_count(self) -> int:
        return len(self.roof_segments)

    @property
    def sector_angle(self) -> float:
        """Actual chord angle of the built roof segmentation."""
        return self.roof_segments[0].sector_angle

    def error_budget(self) -> ErrorBudget:
        """Bounds for the segmentation actually built (not the admissible limits)."""
        return ErrorBudget(cross_section_error(self.cross_section.tunnel_radius, self.sector_angle),
                           path_error(self.params.max_segment_length, self.params.tangent_threshold))

    def path_segment_at(self, y: float) -> PathSegment:
        b = self._breaks
        if not (b[0] - 1e-9 <= y <= b[-1] + 1e-9):
            raise OutOfExtentError(f"longitudinal position {y:.3f} outside [{b[0]}, {b[-1]}]")
        k = bisect.bisect_right(b, y) - 1
        return self.path_segments[min(max(k, 0), len(self.path_segments) - 1)]

    def lateral_offset(self, x: float, y: float) -> float:
        return self.path_segment_at(y).offset(x, y)

    def in_lanes(self, x: float, y: float) -> bool:
        u = self.lateral_offset(x, y)
        return self.lane_boundaries[0] <= u <= self.lane_boundaries[1]

    def plane(self, roof_index: int, path_index: int):
        """World-frame plane of roof chord ``roof_index`` on path segment ``path_index``."""
        return roof_plane(self.roof_segments[roof_index - 1], self.path_segments[path_index - 1])

    def to_dict(self) -> dict:
        cs = self.cross_section
        return {
            "cross_section": {"tunnel_radius": cs.tunnel_radius, "center_height": cs.center_height,
                              "road_width": cs.road_width},
            "centerline": {"coefficients": list(self.centerline.coefficients),
                           "residual_rms": self.centerline.residual_rms},
            "params": {"sector_count": self.params.sector_count,
                       "sector_angle_deg": math.degrees(self.params.sector_angle),
                       "tangent_threshold_deg": math.degrees(self.params.tangent_threshold),
                       "max_segment_length": self.params.max_segment_length},
            "error_budget": {"cross_section_bound": self.error_budget().cross_section_bound,
                             "path_bound": self.error_budget().path_bound},
            "lane_boundaries": list(self.lane_boundaries),
            "extent": list(self.extent),
            "roof_segments": [{"index": s.index, "start": list(s.start), "end": list(s.end),
                               "normal": list(s.normal),
                               "sector_angle_deg": math.degrees(s.sector_angle)}
                              for s in self.roof_segments],
            "path_segments": [{"index": s.index, "start": list(s.start), "end": list(s.end),
                               "slope": s.slope, "intercept": s.intercept, "length": s.length}
                              for s in self.path_segments],
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class Plane:
    point: tuple[float, float, float]
    normal: tuple[float, float, float]


def roof_plane(roof: RoofSegment, path: PathSegment) -> Plane:
    rx, ry = path.right_normal
    u, z = roof.start
    nu, nz = roof.normal
    sx, sy = path.start
    return Plane((sx + u * rx, sy + u * ry, z), (nu * rx, nu * ry, nz))


def build_tunnel_model(cross_section: CrossSectionSpec | None = None,
                       centerline: CenterlineSpec | None = None,
                       params: SegmentationParams | None = None,
                       resolution_limit: float = 2.0,
                       max_segment_length: float = 100.0,
                       extent: Sequence[float] = (0.0, 360.0),
                       lane_boundaries: Sequence[float] | None = None,
                       sector_count: int | None = None) -> SegmentedTunnelModel:
    cross_section = cross_section or CrossSectionSpec()
    centerline = centerline or CenterlineSpec.straight()
    if params is None:
        params = optimize_segmentation_params(cross_section, resolution_limit, max_segment_length)
    if sector_count is not None:
        params = SegmentationParams(sector_count, params.sector_angle, params.tangent_threshold,
                                    params.max_segment_length)
    if lane_boundaries is None:
        half = cross_section.road_width / 2
        lane_boundaries = (-half, half)
    roof = segment_cross_section(cross_section, params.sector_count)
    paths = segment_tunnel_path(centerline, params.tangent_threshold,
                                params.max_segment_length, tuple(extent))
    return SegmentedTunnelModel(cross_section, centerline, roof, paths.segments, params,
                                (float(lane_boundaries[0]), float(lane_boundaries[1])),
                                (float(extent[0]), float(extent[1])), paths.warnings)


def classify_point(model: SegmentedTunnelModel, point) -> PointClass:
    """Ghost/normal label from the lane-boundary test on the local path segment."""
    x, y = float(point.x), float(point.y)
    seg = model.path_segment_at(y)
    u = seg.offset(x, y)
    left, right = model.lane_boundaries
    if left <= u <= right:
        return PointClass("normal", "on-lane", seg.index, abs(u), u)
    return PointClass("ghost", "right" if u > 0 else "left", seg.index, abs(u), u)
