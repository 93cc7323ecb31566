"""Ghost point correction by planar ray tracing.

Stage one unfolds a ghost through every plausible roof/path plane under the
assumption that the echo came off a vehicle roof at a fixed height, giving one
true-point candidate per plane.  Stage two keeps the candidate with the
smallest path-loss product ``L1 * L2`` and, when a vehicle was detected close
by in the previous frame, averages it with the candidate nearest that vehicle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

from .points import RadarPoint, SimFrame
from .tunnel_model import OutOfExtentError, SegmentedTunnelModel, classify_point

POLICIES = ("full", "least_path_loss", "least_distance")


class CandidateRejected(Exception):
    """A reflection hypothesis that yields no admissible true point."""

    def __init__(self, reason: str, roof_index: int, path_index: int):
        super().__init__(f"{reason} for segment ({roof_index}, {path_index})")
        self.reason = reason
        self.roof_index = roof_index
        self.path_index = path_index


class NoCandidateError(ValueError):
    pass


@dataclass(frozen=True)
class CorrectionConfig:
    car_height: float = 1.5
    association_gate: float = 4.0
    radar_position: tuple[float, float, float] = (0.0, 0.0, 5.1)
    degeneracy_eps: float = 1e-6
    # how far (m) a rebuilt reflection point may sit outside its roof/path facet
    reflection_margin: float = 0.0

    def __post_init__(self):
        if not self.car_height > 0:
            raise ValueError("vehicle roof height must be positive")
        if not self.association_gate > 0:
            raise ValueError("association gate must be positive")
        if not self.reflection_margin >= 0:
            raise ValueError("reflection margin must be non-negative")

    @property
    def radar_height(self) -> float:
        return self.radar_position[2]


@dataclass(frozen=True)
class PathLossModel:
    """Radar-equation constants.

    They scale every candidate's received power by the same factor, so the
    ranking only depends on ``L1 * L2``.
    """

    transmit_power: float = 1.0
    gain_tx: float = 1.0
    gain_rx: float = 1.0
    rcs_vehicle: float = 1.0
    rcs_surface: float = 1.0
    wavelength: float = 3.9e-3  # 77 GHz

    def received_power(self, l0: float, l1: float, l2: float) -> float:
        num = (self.transmit_power * self.gain_tx * self.gain_rx * self.rcs_vehicle
               * self.rcs_surface * self.wavelength ** 2)
        return num / ((4 * math.pi) ** 4 * (l0 * l1 * l2) ** 2)


@dataclass(frozen=True)
class TruePointCandidate:
    position: tuple[float, float]
    roof_index: int
    path_index: int
    l1: float
    l2: float
    reflection: tuple[float, float, float]
    mirrored_ghost: tuple[float, float, float]

    @property
    def path_loss_product(self) -> float:
        return self.l1 * self.l2

    @property
    def key(self) -> tuple[int, int]:
        return (self.roof_index, self.path_index)


@lru_cache(maxsize=256)
def _triangle_terms(sector_count: int, sector_angle: float, radius: float, center_height: float,
                    car_height: float, relative_index: int, eps: float):
    """Constants of the unfolding triangle for one roof chord.

    Returns ``(|CD|, (H_center - H_car) / tan(alpha), (1 - cos 2b) / cos 2b)``
    or ``None`` when the triangle degenerates.
    """
    alpha = relative_index * sector_angle - math.asin(center_height / radius)
    gamma = (math.pi - sector_angle) / 2
    beta = math.pi - alpha - gamma
    sin_a, sin_b, cos_2b = math.sin(alpha), math.sin(beta), math.cos(2 * beta)
    if abs(sin_a) < eps or abs(sin_b) < eps or abs(cos_2b) < eps:
        return None
    drop = center_height - car_height
    ad = radius + drop / sin_a
    cd = ad * math.sin(gamma) / sin_b
    return cd, drop / math.tan(alpha), (1 - cos_2b) / cos_2b


def relative_roof_index(roof_index: int, side: int, sector_count: int) -> int:
    """Roof index counted from the wall on the ghost's side."""
    return roof_index if side > 0 else sector_count + 1 - roof_index


def unfold_position(model: SegmentedTunnelModel, config: CorrectionConfig, ghost: RadarPoint,
                    roof_index: int, path_index: int, slope: float,
                    intercept: float) -> tuple[float, float]:
    """Top-view true position for a ghost unfolded through roof chord ``roof_index``.

    The tunnel direction is the line ``x = slope*y + intercept``.
    """
    cs = model.cross_section
    k = 1.0 / math.sqrt(1.0 + slope * slope)
    u_g = (ghost.x - slope * ghost.y - intercept) * k
    side = 1 if u_g > 0 else -1
    dist_center = abs(u_g)
    terms = _triangle_terms(model.sector_count, model.sector_angle, cs.tunnel_radius,
                            cs.center_height, config.car_height,
                            relative_roof_index(roof_index, side, model.sector_count),
                            config.degeneracy_eps)
    if terms is None:
        raise CandidateRejected("degenerate", roof_index, path_index)
    cd, k_alpha, f_beta = terms
    dg = dist_center + k_alpha
    dist_g2t = (cd - dg) * f_beta
    # move towards the centerline, perpendicular to it
    return (ghost.x - side * dist_g2t * k, ghost.y + side * dist_g2t * slope * k)


def unfold_through_line(model: SegmentedTunnelModel, config: CorrectionConfig, ghost: RadarPoint,
                        roof_index: int, path_index: int, slope: float,
                        intercept: float) -> TruePointCandidate:
    """Unfold ``ghost`` and rebuild the 3D reflection path through the chord plane.

    No lane admissibility check; see :func:`candidate_from_line`.
    """
    xt, yt = unfold_position(model, config, ghost, roof_index, path_index, slope, intercept)
    return _path_through_plane(model, config, xt, yt, roof_index, path_index, slope, intercept)


def _path_through_plane(model, config, xt, yt, roof_index, path_index, slope, intercept):
    k = 1.0 / math.sqrt(1.0 + slope * slope)
    rx, ry = k, -slope * k
    roof = model.roof_segments[roof_index - 1]
    nu, nz = roof.normal
    n = (nu * rx, nu * ry, nz)
    p0 = (intercept + roof.start[0] * rx, roof.start[0] * ry, roof.start[1])
    t3 = (xt, yt, config.car_height)
    o = config.radar_position
    dist = (t3[0] - p0[0]) * n[0] + (t3[1] - p0[1]) * n[1] + (t3[2] - p0[2]) * n[2]
    g = (t3[0] - 2 * dist * n[0], t3[1] - 2 * dist * n[1], t3[2] - 2 * dist * n[2])
    d = (g[0] - o[0], g[1] - o[1], g[2] - o[2])
    den = d[0] * n[0] + d[1] * n[1] + d[2] * n[2]
    if abs(den) < 1e-12:
        raise CandidateRejected("no_reflection", roof_index, path_index)
    s = ((p0[0] - o[0]) * n[0] + (p0[1] - o[1]) * n[1] + (p0[2] - o[2]) * n[2]) / den
    if not 0.0 < s < 1.0:
        raise CandidateRejected("no_reflection", roof_index, path_index)
    r = (o[0] + s * d[0], o[1] + s * d[1], o[2] + s * d[2])
    if not _on_facet(model, roof, path_index, r, config.reflection_margin):
        raise CandidateRejected("off_facet", roof_index, path_index)
    return TruePointCandidate((xt, yt), roof_index, path_index,
                              math.dist(o, r), math.dist(r, t3), r, g)


_FACET_EPS = 1e-9


def _on_facet(model, roof, path_index, r, margin) -> bool:
    """Whether reflection point ``r`` lies on the chord band of path segment ``path_index``.

    The plane equation alone admits reflections anywhere on the infinite plane,
    which would let a hypothesis explain a ghost through a facet it never hit.
    """
    seg = model.path_segments[path_index - 1]
    tol = margin + _FACET_EPS
    tx, ty = seg.direction
    along = (r[0] - seg.start[0]) * tx + (r[1] - seg.start[1]) * ty
    if not -tol <= along <= seg.length + tol:
        return False
    u = seg.offset(r[0], r[1])
    (u0, z0), (u1, z1) = roof.start, roof.end
    cu, cz = u1 - u0, z1 - z0
    chord = math.hypot(cu, cz)
    w = ((u - u0) * cu + (r[2] - z0) * cz) / chord
    return -tol <= w <= chord + tol


def _check_position(model: SegmentedTunnelModel, x: float, y: float, roof_index: int,
                    path_index: int) -> None:
    try:
        inside = model.in_lanes(x, y)
    except OutOfExtentError:
        raise CandidateRejected("out_of_extent", roof_index, path_index) from None
    if not inside:
        raise CandidateRejected("outside_lanes", roof_index, path_index)


def check_admissible(model: SegmentedTunnelModel, cand: TruePointCandidate) -> TruePointCandidate:
    """Discard candidates that are off the road."""
    _check_position(model, *cand.position, cand.roof_index, cand.path_index)
    return cand


def candidate_from_line(model, config, ghost, roof_index, path_index, slope, intercept):
    # lane test first: it is cheap and discards most hypotheses
    xt, yt = unfold_position(model, config, ghost, roof_index, path_index, slope, intercept)
    _check_position(model, xt, yt, roof_index, path_index)
    return _path_through_plane(model, config, xt, yt, roof_index, path_index, slope, intercept)


def generate_candidate(model: SegmentedTunnelModel, config: CorrectionConfig, ghost: RadarPoint,
                       segment: tuple[int, int]) -> TruePointCandidate:
    """True-point candidate for ``ghost`` reflected off roof/path plane ``segment``."""
    roof_index, path_index = segment
    seg = model.path_segments[path_index - 1]
    return candidate_from_line(model, config, ghost, roof_index, path_index,
                               seg.slope, seg.intercept)


def enumerate_reflection_segments(model: SegmentedTunnelModel, ghost: RadarPoint,
                                  radar_position) -> list[tuple[int, int]]:
    """Roof/path planes crossed by the top-view ray from the radar to the ghost.

    A plane qualifies when the ray passes over its lateral band inside the
    path segment's longitudinal span, on the ghost's side of the tunnel.
    """
    ox, oy = float(radar_position[0]), float(radar_position[1])
    gx, gy = ghost.x, ghost.y
    out = []
    dy = gy - oy
    for seg in model.path_segments:
        y0, y1 = seg.start[1], seg.end[1]
        if abs(dy) < 1e-12:
            if not y0 <= oy <= y1:
                continue
            ta, tb = 0.0, 1.0
        else:
            ta, tb = (y0 - oy) / dy, (y1 - oy) / dy
            if ta > tb:
                ta, tb = tb, ta
            ta, tb = max(ta, 0.0), min(tb, 1.0)
            if ta >= tb:
                continue
        # side is judged against the same line the candidate will be unfolded from
        side = 1 if seg.offset(gx, gy) > 0 else -1
        ua = seg.offset(ox + ta * (gx - ox), oy + ta * dy)
        ub = seg.offset(ox + tb * (gx - ox), oy + tb * dy)
        lo, hi = min(ua, ub), max(ua, ub)
        # keep only the ghost's side of the tunnel
        if side > 0:
            lo = max(lo, 0.0)
        else:
            hi = min(hi, 0.0)
        if lo >= hi:
            continue
        for roof in model.roof_segments:
            blo, bhi = roof.lateral_band
            if min(hi, bhi) > max(lo, blo):
                out.append((roof.index, seg.index))
    out.sort()
    return out


def select_by_path_loss(candidates: Sequence[TruePointCandidate]) -> TruePointCandidate:
    if not candidates:
        raise NoCandidateError("no candidates to rank by path loss")
    return min(candidates, key=lambda c: (c.l1 * c.l2, c.roof_index, c.path_index))


def select_by_spatial_distance(candidates: Sequence[TruePointCandidate],
                               previous_detections: Sequence[tuple[float, float]],
                               max_distance: float = 4.0) -> TruePointCandidate | None:
    """Candidate closest to any previous-frame vehicle, if closer than ``max_distance``."""
    if not candidates or not previous_detections:
        return None
    best, best_key = None, None
    for c in candidates:
        x, y = c.position
        d = min(math.hypot(x - vx, y - vy) for vx, vy in previous_detections)
        key = (d, c.roof_index, c.path_index)
        if best_key is None or key < best_key:
            best, best_key = c, key
    return best if best_key[0] < max_distance else None


def fuse_true_position(t_signal, t_dist=None) -> tuple[float, float]:
    """Least-squares combination of the two selections: their midpoint."""
    if t_signal is None:
        raise ValueError("signal-domain selection is required")
    sx, sy = t_signal.position if hasattr(t_signal, "position") else t_signal
    if t_dist is None:
        return (sx, sy)
    dx, dy = t_dist.position if hasattr(t_dist, "position") else t_dist
    return ((sx + dx) / 2, (sy + dy) / 2)


CandidateFn = Callable[[SegmentedTunnelModel, CorrectionConfig, RadarPoint, tuple[int, int]],
                       TruePointCandidate]


@dataclass
class CorrectionRecord:
    """Everything decided for one ghost point; serialised into candidate dumps."""

    ghost: RadarPoint
    candidates: list[TruePointCandidate] = field(default_factory=list)
    rejections: list[CandidateRejected] = field(default_factory=list)
    by_signal: TruePointCandidate | None = None
    by_distance: TruePointCandidate | None = None
    position: tuple[float, float] | None = None

    @property
    def correctable(self) -> bool:
        return self.position is not None

    def to_dict(self) -> dict:
        return {
            "ghost": self.ghost.to_dict(),
            "position": list(self.position) if self.position else None,
            "candidates": [
                {"segment": [c.roof_index, c.path_index], "l1": c.l1, "l2": c.l2,
                 "position": list(c.position),
                 "by_signal": c is self.by_signal, "by_distance": c is self.by_distance}
                for c in self.candidates],
            "rejections": [{"segment": [r.roof_index, r.path_index], "reason": r.reason}
                           for r in self.rejections],
        }


def correct_point(model: SegmentedTunnelModel, config: CorrectionConfig, ghost: RadarPoint,
                  previous_detections: Sequence[tuple[float, float]] = (),
                  policy: str = "full",
                  candidate_fn: CandidateFn = generate_candidate) -> CorrectionRecord:
    if policy not in POLICIES:
        raise ValueError(f"unknown correction policy {policy!r}")
    rec = CorrectionRecord(ghost)
    for seg in enumerate_reflection_segments(model, ghost, config.radar_position):
        try:
            rec.candidates.append(candidate_fn(model, config, ghost, seg))
        except CandidateRejected as exc:
            rec.rejections.append(exc)
    if not rec.candidates:
        return rec
    if policy in ("full", "least_path_loss"):
        rec.by_signal = select_by_path_loss(rec.candidates)
    if policy in ("full", "least_distance"):
        rec.by_distance = select_by_spatial_distance(rec.candidates, previous_detections,
                                                     config.association_gate)
    if policy == "least_distance":
        rec.position = rec.by_distance.position if rec.by_distance else None
    else:
        rec.position = fuse_true_position(rec.by_signal, rec.by_distance)
    return rec


@dataclass
class CorrectedFrame:
    frame: SimFrame
    points: tuple[RadarPoint, ...]
    records: list[CorrectionRecord]
    flagged: tuple[RadarPoint, ...]  # uncorrectable ghosts (kept or dropped)


def correct_frame(model: SegmentedTunnelModel, config: CorrectionConfig, frame: SimFrame,
                  previous_detections: Sequence[tuple[float, float]] = (),
                  policy: str = "full", uncorrectable: str = "drop",
                  candidate_fn: CandidateFn = generate_candidate) -> CorrectedFrame:
    """Replace every ghost by its fused true position; normal points pass through."""
    if uncorrectable not in ("drop", "keep"):
        raise ValueError(f"uncorrectable must be 'drop' or 'keep', got {uncorrectable!r}")
    out, records, flagged = [], [], []
    for p in frame.points:
        try:
            label = classify_point(model, p).label
        except OutOfExtentError:
            label = "ghost"
        if label == "normal":
            out.append(p)
            continue
        rec = correct_point(model, config, p, previous_detections, policy, candidate_fn)
        records.append(rec)
        if rec.correctable:
            out.append(p.moved(*rec.position))
        else:
            flagged.append(p)
            if uncorrectable == "keep":
                out.append(p)
    return CorrectedFrame(frame, tuple(out), records, tuple(flagged))
