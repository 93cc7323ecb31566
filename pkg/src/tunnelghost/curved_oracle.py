"""Curved-centerline reference correction.

Instead of the straight line of a path segment, the ghost is unfolded across
the tangent of the polynomial centerline at the foot point ``S`` of the
reflection point.  Locating ``S`` needs a root of a scalar equation in the
longitudinal coordinate, solved with Newton's method and a bisection
fallback.  This is the slow, exact baseline the segmented model is compared
against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .ghost_correction import (CandidateRejected, CorrectionConfig, CorrectionRecord,
                               TruePointCandidate, check_admissible, correct_point,
                               unfold_position, unfold_through_line)
from .points import RadarPoint
from .tunnel_model import CenterlineSpec, SegmentedTunnelModel

MAX_NEWTON_ITERATIONS = 50
RESIDUAL_TOL = 1e-9


class CurvedSolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class CurvedReflectionProblem:
    """Find the centerline foot point of a reflection point on the radar-ghost line.

    The line is ``x = b1*y + b0`` (lateral as a function of longitudinal).  When
    the ghost and radar share a longitudinal coordinate the line is
    ``y = radar_y`` instead and ``b1``/``b0`` are unused.
    """

    radar: tuple[float, float]
    ghost: tuple[float, float]
    centerline: CenterlineSpec
    lateral_offset: float  # d, distance of the reflection point from the centerline
    side: int = 1  # +1 right of the centerline, -1 left

    def __post_init__(self):
        if self.lateral_offset < 0:
            raise ValueError("lateral offset must be non-negative")
        if self.side not in (1, -1):
            raise ValueError("side must be +1 or -1")

    @property
    def lateral_line(self) -> bool:
        return self.ghost[1] == self.radar[1]

    @property
    def b1(self) -> float:
        (xr, yr), (xg, yg) = self.radar, self.ghost
        return (xg - xr) / (yg - yr)

    @property
    def b0(self) -> float:
        (xr, yr), (xg, yg) = self.radar, self.ghost
        return (xr * yg - xg * yr) / (yg - yr)

    @property
    def target(self) -> float:
        return self.side * self.lateral_offset

    def residual(self, s: float) -> tuple[float, float]:
        """Equation value and derivative at foot coordinate ``s``."""
        cl = self.centerline
        f, fp, fpp = float(cl.lateral(s)), float(cl.slope(s)), float(cl.curvature_term(s))
        q = math.sqrt(1.0 + fp * fp)
        if self.lateral_line:
            # R = (f + target/q, radar_y), perpendicularity gives the equation
            h = self.target * fp / q + self.radar[1] - s
            dh = self.target * fpp / q ** 3 - 1.0
            return h, dh
        b1, b0 = self.b1, self.b0
        num = f - b1 * s - b0
        den = b1 * fp + 1.0
        h = num / den + self.target / q
        dh = ((fp - b1) * den - num * b1 * fpp) / den ** 2 - self.target * fp * fpp / q ** 3
        return h, dh


@dataclass(frozen=True)
class CurvedTangent:
    slope: float  # m_s
    intercept: float  # b_s
    foot: tuple[float, float]  # S
    reflection: tuple[float, float]  # R
    iterations: int
    residual: float
    method: str = "newton"


def _tangent_at(problem: CurvedReflectionProblem, s: float, iterations: int, method: str):
    cl = problem.centerline
    f, m = float(cl.lateral(s)), float(cl.slope(s))
    q = math.sqrt(1.0 + m * m)
    xr = f + problem.target / q
    yr = s - m * problem.target / q
    return CurvedTangent(m, f - m * s, (f, s), (xr, yr), iterations,
                         abs(problem.residual(s)[0]), method)


def solve_curved_tangent(problem: CurvedReflectionProblem, initial_guess: float | None = None,
                         bracket: Sequence[float] | None = None) -> CurvedTangent:
    """Newton's method from ``initial_guess`` (default: ghost longitudinal coordinate).

    Falls back to bisection over ``bracket`` when Newton does not reach the
    residual tolerance within the iteration cap.
    """
    s = problem.ghost[1] if initial_guess is None else float(initial_guess)
    for it in range(1, MAX_NEWTON_ITERATIONS + 1):
        h, dh = problem.residual(s)
        if not (math.isfinite(h) and math.isfinite(dh)) or dh == 0.0:
            break
        s -= h / dh
        if abs(problem.residual(s)[0]) < RESIDUAL_TOL:
            return _tangent_at(problem, s, it, "newton")
    if bracket is None:
        raise CurvedSolverError("Newton did not converge and no bracket was given")
    lo, hi = map(float, bracket)
    hlo, hhi = problem.residual(lo)[0], problem.residual(hi)[0]
    if hlo == 0.0:
        return _tangent_at(problem, lo, 0, "bisection")
    if hhi == 0.0:
        return _tangent_at(problem, hi, 0, "bisection")
    if hlo * hhi > 0:
        raise CurvedSolverError(f"no sign change over [{lo:.3f}, {hi:.3f}]")
    for it in range(1, 200):
        mid = 0.5 * (lo + hi)
        hm = problem.residual(mid)[0]
        if abs(hm) < RESIDUAL_TOL or hi - lo < 1e-12:
            return _tangent_at(problem, mid, it, "bisection")
        if (hm < 0) == (hlo < 0):
            lo, hlo = mid, hm
        else:
            hi = mid
    raise CurvedSolverError("bisection did not converge")


def curved_problem(model: SegmentedTunnelModel, config: CorrectionConfig, ghost: RadarPoint,
                   segment: tuple[int, int]):
    """Foot-point problem for ``ghost`` via ``segment``, its bisection bracket and the planar candidate.

    The reflection point offset ``d`` is taken from the segmented unfolding of
    the same roof chord.
    """
    roof_index, path_index = segment
    seg = model.path_segments[path_index - 1]
    planar = unfold_through_line(model, config, ghost, roof_index, path_index,
                                 seg.slope, seg.intercept)
    u_r = seg.offset(planar.reflection[0], planar.reflection[1])
    problem = CurvedReflectionProblem(
        (config.radar_position[0], config.radar_position[1]), (ghost.x, ghost.y),
        model.centerline, abs(u_r), 1 if u_r >= 0 else -1)
    return problem, (seg.start[1], seg.end[1]), planar


def generate_curved_candidate(model: SegmentedTunnelModel, config: CorrectionConfig,
                              ghost: RadarPoint, segment: tuple[int, int]) -> TruePointCandidate:
    """Candidate for ``segment`` unfolded across the local centerline tangent."""
    roof_index, path_index = segment
    problem, bracket, planar = curved_problem(model, config, ghost, segment)
    try:
        tangent = solve_curved_tangent(problem, bracket=bracket)
    except CurvedSolverError:
        raise CandidateRejected("solver_failed", roof_index, path_index) from None
    xt, yt = unfold_position(model, config, ghost, roof_index, path_index,
                             tangent.slope, tangent.intercept)
    o = config.radar_position
    r = (tangent.reflection[0], tangent.reflection[1], planar.reflection[2])
    t3 = (xt, yt, config.car_height)
    cand = TruePointCandidate((xt, yt), roof_index, path_index, math.dist(o, r),
                              math.dist(r, t3), r, planar.mirrored_ghost)
    return check_admissible(model, cand)


def correct_ghost_curved(model: SegmentedTunnelModel, config: CorrectionConfig, ghost: RadarPoint,
                         previous_detections: Sequence[tuple[float, float]] = (),
                         policy: str = "full") -> CorrectionRecord:
    return correct_point(model, config, ghost, previous_detections, policy,
                         candidate_fn=generate_curved_candidate)
