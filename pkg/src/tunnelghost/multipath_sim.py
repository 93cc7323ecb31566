"""Forward simulator for direct and single-bounce multipath radar returns.

Every vehicle scatters from a few facets at roof height.  A facet produces a
direct return when the line of sight is clear, and one ghost return for every
roof/path plane that admits a valid specular path radar -> plane -> facet.  The
ghost sits at the mirror image of the facet across that plane, which is where
the radar places a target whose echo arrives along the reflected path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .points import GroundTruth, RadarPoint, SimFrame
from .tunnel_model import Plane, SegmentedTunnelModel


class ScenarioError(ValueError):
    """Invalid scenario or vehicle script."""


def mirror_point_across_plane(point, plane: Plane) -> np.ndarray:
    p = np.asarray(point, dtype=float)
    n = np.asarray(plane.normal, dtype=float)
    a = np.asarray(plane.point, dtype=float)
    return p - 2.0 * np.dot(p - a, n) * n


@dataclass(frozen=True)
class RadarConfig:
    position: tuple[float, float, float] = (0.0, 0.0, 5.1)
    range_gate: tuple[float, float] = (50.0, 350.0)
    range_resolution: float = 2.0
    frame_rate: float = 10.0
    sigma_range: float = 0.3
    sigma_azimuth_deg: float = 0.2
    sigma_doppler: float = 0.0
    dropout: float = 0.2
    projection: str = "orthographic"  # or "slant-range"
    emit_ghosts: bool = True
    facet_offsets: tuple[float, ...] = (-0.25, 0.0, 0.25)  # roof scatterers, fractions of length

    def __post_init__(self):
        lo, hi = self.range_gate
        if not 0 < lo < hi:
            raise ScenarioError(f"range gate must be positive and ordered, got {self.range_gate}")
        if not self.frame_rate > 0:
            raise ScenarioError("frame rate must be positive")
        if self.projection not in ("orthographic", "slant-range"):
            raise ScenarioError(f"unknown projection mode {self.projection!r}")
        if not 0 <= self.dropout < 1:
            raise ScenarioError("dropout must lie in [0, 1)")

    def noiseless(self) -> "RadarConfig":
        return RadarConfig(self.position, self.range_gate, self.range_resolution,
                           self.frame_rate, 0.0, 0.0, 0.0, 0.0, self.projection,
                           self.emit_ghosts, self.facet_offsets)


@dataclass(frozen=True)
class VehicleState:
    id: int
    position: tuple[float, float]
    velocity: tuple[float, float]
    length: float = 4.5
    width: float = 1.8
    roof_height: float = 1.5
    kind: str = "car"

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0 and self.roof_height > 0):
            raise ScenarioError(f"vehicle {self.id}: footprint and height must be positive")

    @property
    def heading(self) -> float:
        vx, vy = self.velocity
        if vx == 0 and vy == 0:
            return 0.0
        return math.atan2(vx, vy)

    def facets(self, offsets: Sequence[float]) -> list[tuple[float, float, float]]:
        s, c = math.sin(self.heading), math.cos(self.heading)
        x, y = self.position
        return [(x + k * self.length * s, y + k * self.length * c, self.roof_height)
                for k in offsets]

    def ground_truth(self) -> GroundTruth:
        h = self.heading
        if h > math.pi / 2:
            h -= math.pi
        elif h < -math.pi / 2:
            h += math.pi
        return GroundTruth(self.id, self.position[0], self.position[1], self.length,
                           self.width, h, self.kind, self.velocity[0], self.velocity[1])


VEHICLE_TYPES = {
    "car": {"length": 4.5, "width": 1.8, "roof_height": 1.5},
    "truck": {"length": 10.0, "width": 2.5, "roof_height": 3.5},
}


@dataclass(frozen=True)
class VehicleScript:
    """Vehicle moving along the centerline.

    ``waypoints`` are ``(y, lateral_offset)`` pairs in driving order;
    ``speed`` is the longitudinal rate in m/s.  The vehicle appears at
    ``start_time`` on the first waypoint and vanishes after the last one.
    """

    id: int
    waypoints: tuple[tuple[float, float], ...]
    speed: float
    kind: str = "car"
    start_time: float = 0.0
    length: float | None = None
    width: float | None = None
    roof_height: float | None = None

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise ScenarioError(f"vehicle {self.id}: need at least two waypoints")
        if not self.speed > 0:
            raise ScenarioError(f"vehicle {self.id}: speed must be positive")
        ys = [w[0] for w in self.waypoints]
        steps = np.diff(ys)
        if not (np.all(steps > 0) or np.all(steps < 0)):
            raise ScenarioError(f"vehicle {self.id}: waypoints must be monotone in y")
        if self.kind not in VEHICLE_TYPES and None in (self.length, self.width, self.roof_height):
            raise ScenarioError(f"vehicle {self.id}: unknown kind {self.kind!r}")

    def dims(self) -> tuple[float, float, float]:
        base = VEHICLE_TYPES.get(self.kind, {})
        return (self.length or base["length"], self.width or base["width"],
                self.roof_height or base["roof_height"])

    @property
    def direction(self) -> int:
        return 1 if self.waypoints[-1][0] > self.waypoints[0][0] else -1

    @property
    def duration(self) -> float:
        return abs(self.waypoints[-1][0] - self.waypoints[0][0]) / self.speed

    def _track(self, t: float) -> tuple[float, float] | None:
        dt = t - self.start_time
        if dt < 0 or dt > self.duration + 1e-9:
            return None
        y = self.waypoints[0][0] + self.direction * self.speed * dt
        ys = [w[0] for w in self.waypoints]
        offs = [w[1] for w in self.waypoints]
        if self.direction < 0:
            ys, offs = ys[::-1], offs[::-1]
        return y, float(np.interp(y, ys, offs))

    def state(self, t: float, model: SegmentedTunnelModel) -> VehicleState | None:
        here = self._track(t)
        if here is None:
            return None
        length, width, height = self.dims()
        cl = model.centerline

        def place(yc, off):
            m = cl.slope(yc)
            k = 1.0 / math.sqrt(1 + m * m)
            return cl.lateral(yc) + off * k, yc - off * m * k

        yc, off = here
        x, y = place(yc, off)
        eps = 1e-3
        ahead = self._track(t + eps) or here
        behind = self._track(t - eps) or here
        xa, ya = place(*ahead)
        xb, yb = place(*behind)
        span = eps * ((ahead is not here) + (behind is not here))
        vel = ((xa - xb) / span, (ya - yb) / span) if span else (0.0, 0.0)
        return VehicleState(self.id, (x, y), vel, length, width, height, self.kind)

    def check_in_lanes(self, model: SegmentedTunnelModel):
        _, width, _ = self.dims()
        left, right = model.lane_boundaries
        for y, off in self.waypoints:
            if off - width / 2 < left - 1e-9 or off + width / 2 > right + 1e-9:
                raise ScenarioError(
                    f"vehicle {self.id} leaves the lanes at y={y}: offset {off} with width {width}")


@dataclass
class ScenarioConfig:
    name: str
    model: SegmentedTunnelModel
    vehicles: list[VehicleScript]
    radar: RadarConfig = field(default_factory=RadarConfig)
    duration: float = 20.0
    seed: int = 0

    def __post_init__(self):
        ids = [v.id for v in self.vehicles]
        if len(set(ids)) != len(ids):
            raise ScenarioError("vehicle ids must be unique")
        for v in self.vehicles:
            v.check_in_lanes(self.model)


# ---------------------------------------------------------------- geometry

def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@dataclass(frozen=True)
class _Box:
    vid: int
    cx: float
    cy: float
    s: float
    c: float
    half_len: float
    half_wid: float
    height: float


def _boxes(vehicles: Sequence[VehicleState]) -> list[_Box]:
    out = []
    for v in vehicles:
        h = v.heading
        out.append(_Box(v.id, v.position[0], v.position[1], math.sin(h), math.cos(h),
                        v.length / 2, v.width / 2, v.roof_height))
    return out


def segment_blocked(p, q, boxes: Sequence[_Box], exclude: int | None = None) -> bool:
    """Whether the 3D segment ``p -> q`` passes through any vehicle body.

    Bodies are footprints extruded from the road to the roof height.
    """
    for b in boxes:
        if b.vid == exclude:
            continue
        px, py = p[0] - b.cx, p[1] - b.cy
        qx, qy = q[0] - b.cx, q[1] - b.cy
        a0 = px * b.s + py * b.c
        a1 = qx * b.s + qy * b.c
        c0 = px * b.c - py * b.s
        c1 = qx * b.c - qy * b.s
        t0, t1 = 0.0, 1.0
        ok = True
        for start, end, lim in ((a0, a1, b.half_len), (c0, c1, b.half_wid)):
            d = end - start
            if abs(d) < 1e-15:
                if abs(start) > lim:
                    ok = False
                    break
                continue
            ta, tb = (-lim - start) / d, (lim - start) / d
            if ta > tb:
                ta, tb = tb, ta
            t0, t1 = max(t0, ta), min(t1, tb)
            if t0 > t1:
                ok = False
                break
        if not ok:
            continue
        z0 = p[2] + t0 * (q[2] - p[2])
        z1 = p[2] + t1 * (q[2] - p[2])
        if min(z0, z1) < b.height:
            return True
    return False


@dataclass(frozen=True)
class SpecularPath:
    roof_index: int
    path_index: int
    reflection: tuple[float, float, float]
    mirrored: tuple[float, float, float]
    l1: float
    l2: float


def planar_paths(model: SegmentedTunnelModel, radar, target) -> list[SpecularPath]:
    """All valid single-bounce specular paths radar -> plane -> target."""
    o = tuple(map(float, radar))
    t = tuple(map(float, target))
    out = []
    for seg in model.path_segments:
        rx, ry = seg.right_normal
        tx, ty = seg.direction
        sx, sy = seg.start
        for roof in model.roof_segments:
            nu, nz = roof.normal
            n = (nu * rx, nu * ry, nz)
            a = (sx + roof.start[0] * rx, sy + roof.start[0] * ry, roof.start[1])
            dist = _dot(_sub(t, a), n)
            g = (t[0] - 2 * dist * n[0], t[1] - 2 * dist * n[1], t[2] - 2 * dist * n[2])
            d = _sub(g, o)
            den = _dot(d, n)
            if abs(den) < 1e-12:
                continue
            s = _dot(_sub(a, o), n) / den
            if not 0.0 < s < 1.0:
                continue
            r = (o[0] + s * d[0], o[1] + s * d[1], o[2] + s * d[2])
            along = (r[0] - sx) * tx + (r[1] - sy) * ty
            if not -1e-9 <= along <= seg.length + 1e-9:
                continue
            u = (r[0] - sx) * rx + (r[1] - sy) * ry
            cu, cz = roof.end[0] - roof.start[0], roof.end[1] - roof.start[1]
            w = ((u - roof.start[0]) * cu + (r[2] - roof.start[1]) * cz) / (cu * cu + cz * cz)
            if not -1e-9 <= w <= 1 + 1e-9:
                continue
            l1 = math.dist(o, r)
            l2 = math.dist(r, t)
            out.append(SpecularPath(roof.index, seg.index, r, g, l1, l2))
    return out


def _measure(radar: RadarConfig, p3, rng, noisy: bool) -> tuple[float, float, float] | None:
    """Project a 3D apparent position to a top-view detection with polar noise."""
    ox, oy, oz = radar.position
    dx, dy = p3[0] - ox, p3[1] - oy
    rng_top = math.hypot(dx, dy)
    az = math.atan2(dx, dy)
    if radar.projection == "slant-range":
        rng_top = math.sqrt(dx * dx + dy * dy + (p3[2] - oz) ** 2)
    if noisy:
        rng_top += rng.normal(0.0, radar.sigma_range) if radar.sigma_range else 0.0
        az += rng.normal(0.0, math.radians(radar.sigma_azimuth_deg)) if radar.sigma_azimuth_deg else 0.0
    lo, hi = radar.range_gate
    if not lo <= rng_top <= hi:
        return None
    return ox + rng_top * math.sin(az), oy + rng_top * math.cos(az), rng_top


def _unit(v):
    n = math.sqrt(_dot(v, v))
    return (v[0] / n, v[1] / n, v[2] / n)


def simulate_frame(model: SegmentedTunnelModel, radar: RadarConfig,
                   vehicles: Sequence[VehicleState], rng: np.random.Generator,
                   frame_index: int = 0, timestamp: float = 0.0) -> SimFrame:
    o = tuple(map(float, radar.position))
    lo, hi = radar.range_gate
    active = [v for v in vehicles
              if lo <= math.hypot(v.position[0] - o[0], v.position[1] - o[1]) <= hi]
    boxes = _boxes(vehicles)
    noisy = True
    points: list[RadarPoint] = []

    def emit(vid, apparent, vel, leg_dir, path, roof=None, seg=None):
        keep = rng.random() >= radar.dropout if radar.dropout else True
        meas = _measure(radar, apparent, rng, noisy)
        if not keep or meas is None:
            return
        doppler = vel[0] * leg_dir[0] + vel[1] * leg_dir[1]
        if radar.sigma_doppler:
            doppler += rng.normal(0.0, radar.sigma_doppler)
        points.append(RadarPoint(meas[0], meas[1], doppler, vid, path, roof, seg))

    for v in active:
        vel = v.velocity
        for facet in v.facets(radar.facet_offsets):
            if not segment_blocked(o, facet, boxes, exclude=v.id):
                emit(v.id, facet, vel, _unit(_sub(facet, o)), "direct")
            if not radar.emit_ghosts:
                continue
            for path in planar_paths(model, o, facet):
                if segment_blocked(o, path.reflection, boxes, exclude=None):
                    continue
                if segment_blocked(path.reflection, facet, boxes, exclude=v.id):
                    continue
                emit(v.id, path.mirrored, vel, _unit(_sub(path.reflection, o)), "ghost",
                     path.roof_index, path.path_index)

    gt = tuple(v.ground_truth() for v in active)
    return SimFrame(frame_index, timestamp, tuple(points), gt)


def frame_rng(seed: int, frame_index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(frame_index)])


def vehicles_at(scenario: ScenarioConfig, t: float) -> list[VehicleState]:
    out = []
    for script in scenario.vehicles:
        s = script.state(t, scenario.model)
        if s is not None:
            out.append(s)
    return out


def simulate_scenario(scenario: ScenarioConfig) -> list[SimFrame]:
    """Frames at ``1 / frame_rate`` spacing; each frame carries its ground truth."""
    dt = 1.0 / scenario.radar.frame_rate
    n = int(round(scenario.duration * scenario.radar.frame_rate))
    frames = []
    for k in range(n):
        t = k * dt
        rng = frame_rng(scenario.seed, k)
        frames.append(simulate_frame(scenario.model, scenario.radar, vehicles_at(scenario, t),
                                     rng, k, round(t, 9)))
    return frames


# ------------------------------------------------------- curved surface

def _tube_point(cl, radius, center_h, s, phi):
    m = cl.slope(s)
    k = 1.0 / np.sqrt(1.0 + m * m)
    rx, ry = k, -m * k
    u = radius * np.cos(phi)
    return np.stack([cl.lateral(s) + u * rx, s + u * ry, center_h + radius * np.sin(phi)], axis=-1)


def _inward_normal(model, s, phi):
    m = model.centerline.slope(s)
    k = 1.0 / math.sqrt(1.0 + m * m)
    return -np.array([math.cos(phi) * k, -math.cos(phi) * m * k, math.sin(phi)])


def _specular_residual(cl, radius, center_h, radar, targets, s, phi):
    p = _tube_point(cl, radius, center_h, s, phi)
    a = radar[None, :] - p
    b = targets - p
    ab = a / np.linalg.norm(a, axis=1, keepdims=True) + b / np.linalg.norm(b, axis=1, keepdims=True)
    m = cl.slope(s)
    k = 1.0 / np.sqrt(1.0 + m * m)
    t = np.stack([m * k, k, np.zeros_like(s)], axis=-1)
    e_phi = np.stack([-np.sin(phi) * k, np.sin(phi) * m * k, np.cos(phi)], axis=-1)
    return np.stack([np.sum(ab * t, axis=1), np.sum(ab * e_phi, axis=1)], axis=-1)


def solve_curved_specular(model: SegmentedTunnelModel, radar, targets, s0, phi0,
                          iterations: int = 40, tol: float = 1e-12):
    """Vectorised Newton solve for specular points on the exact curved tunnel surface.

    The surface is the circular cross-section swept along the polynomial
    centerline.  ``s`` is the longitudinal parameter of the cross-section
    plane, ``phi`` the angle on the circle (0 = right wall at centre height).
    Returns ``(s, phi, converged)``.
    """
    cl = model.centerline
    rad, hc = model.cross_section.tunnel_radius, model.cross_section.center_height
    radar = np.asarray(radar, dtype=float)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    s = np.array(s0, dtype=float)
    phi = np.array(phi0, dtype=float)
    h = 1e-6
    for _ in range(iterations):
        f = _specular_residual(cl, rad, hc, radar, targets, s, phi)
        fs = (_specular_residual(cl, rad, hc, radar, targets, s + h, phi) - f) / h
        fp = (_specular_residual(cl, rad, hc, radar, targets, s, phi + h) - f) / h
        det = fs[:, 0] * fp[:, 1] - fp[:, 0] * fs[:, 1]
        det = np.where(np.abs(det) < 1e-300, 1e-300, det)
        ds = (f[:, 0] * fp[:, 1] - fp[:, 0] * f[:, 1]) / det
        dp = (fs[:, 0] * f[:, 1] - f[:, 0] * fs[:, 1]) / det
        step = np.clip(np.abs(dp), 0.2, None) / 0.2
        s -= ds / step
        phi -= dp / step
        if np.all(np.abs(f) < tol):
            break
    f = _specular_residual(cl, rad, hc, radar, targets, s, phi)
    return s, phi, np.all(np.abs(f) < 1e-9, axis=1)


@dataclass(frozen=True)
class CurvedGhost:
    target: tuple[float, float, float]
    reflection: tuple[float, float, float]
    apparent: tuple[float, float, float]
    roof_index: int
    path_index: int
    l1: float
    l2: float


def curved_surface_ghosts(model: SegmentedTunnelModel, radar, targets) -> list[CurvedGhost]:
    """Ghosts of ``targets`` reflected once off the exact curved tunnel surface.

    Seeds come from every roof chord on the target's own path segment; each
    seed is refined on the curved surface and duplicate roots are merged.
    """
    radar = np.asarray(radar, dtype=float)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    cs = model.cross_section
    rows, s0, p0 = [], [], []
    for k, tgt in enumerate(targets):
        try:
            seg = model.path_segment_at(float(tgt[1]))
        except ValueError:
            continue
        for roof in model.roof_segments:
            plane = model.plane(roof.index, seg.index)
            n = np.asarray(plane.normal)
            g = mirror_point_across_plane(tgt, plane)
            den = float(np.dot(g - radar, n))
            frac = float(np.dot(np.asarray(plane.point) - radar, n)) / den if abs(den) > 1e-12 else 0.5
            frac = min(max(frac, 0.02), 0.98)
            rows.append(k)
            s0.append(radar[1] + frac * (g[1] - radar[1]))
            p0.append(0.5 * (roof.start_angle + roof.end_angle))
    rows = np.array(rows)
    # seeds far from a root can diverge; those rows come back with ok=False
    with np.errstate(over="ignore", invalid="ignore"):
        s, phi, ok = solve_curved_specular(model, radar, targets[rows], np.array(s0), np.array(p0))
    lo_ang = -math.asin(cs.center_height / cs.tunnel_radius)
    hi_ang = math.pi - lo_ang
    theta = model.sector_angle
    seen = set()
    out = []
    for row, sv, pv, good in zip(rows, s, phi, ok):
        if not good:
            continue
        pv = (pv - lo_ang) % (2 * math.pi) + lo_ang
        if not lo_ang < pv < hi_ang:
            continue
        if not model.extent[0] <= sv <= model.extent[1]:
            continue
        key = (int(row), round(float(sv), 6), round(float(pv), 6))
        if key in seen:
            continue
        seen.add(key)
        tgt = targets[row]
        r = _tube_point(model.centerline, cs.tunnel_radius, cs.center_height,
                        np.array([sv]), np.array([pv]))[0]
        l1 = float(np.linalg.norm(r - radar))
        l2 = float(np.linalg.norm(tgt - r))
        bisector = (radar - r) / l1 + (tgt - r) / l2
        if not np.dot(bisector, _inward_normal(model, sv, pv)) > 0:
            continue
        apparent = radar + (l1 + l2) * (r - radar) / l1
        roof_index = min(int((pv - lo_ang) // theta) + 1, model.sector_count)
        try:
            seg = model.path_segment_at(float(r[1]))
        except ValueError:
            continue
        out.append(CurvedGhost(tuple(map(float, tgt)), tuple(map(float, r)),
                               tuple(map(float, apparent)), roof_index, seg.index, l1, l2))
    return out
