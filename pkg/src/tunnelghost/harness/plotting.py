"""Figures for the CLI report path.  Uses the non-interactive Agg backend."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Polygon  # noqa: E402

from ..points import RadarPoint, SimFrame  # noqa: E402
from ..tunnel_model import SegmentedTunnelModel  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def _lane_lines(ax, model: SegmentedTunnelModel):
    ys = np.linspace(*model.extent, 200)
    xs = np.asarray(model.centerline.lateral(ys), dtype=float)
    ax.plot(xs, ys, color="0.6", lw=0.8, ls="--")
    for off in model.lane_boundaries:
        pts = []
        for y in ys:
            seg = model.path_segment_at(y)
            rx, ry = seg.right_normal
            pts.append((model.centerline.lateral(y) + off * rx, y + off * ry))
        pts = np.array(pts)
        ax.plot(pts[:, 0], pts[:, 1], color="0.3", lw=1.0)


def _footprint(g):
    s, c = math.sin(g.heading), math.cos(g.heading)
    hl, hw = g.length / 2, g.width / 2
    corners = []
    for a, b in ((hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)):
        corners.append((g.x + a * s + b * c, g.y + a * c - b * s))
    return corners


def plot_frame(model: SegmentedTunnelModel, frame: SimFrame, path,
               corrected: Sequence[RadarPoint] = (), tracks: Sequence[tuple[float, float]] = (),
               title: str | None = None) -> Path:
    """Top view of one frame: raw points, corrected points, tracks and true footprints."""
    fig, ax = plt.subplots(figsize=(4, 8))
    _lane_lines(ax, model)
    for g in frame.ground_truth:
        ax.add_patch(Polygon(_footprint(g), closed=True, fill=False, ec="tab:green", lw=1.2))
    raw = np.array([p.xy for p in frame.points]).reshape(-1, 2)
    if len(raw):
        ax.scatter(raw[:, 0], raw[:, 1], s=8, c="0.5", label="raw")
    cor = np.array([p.xy for p in corrected]).reshape(-1, 2)
    if len(cor):
        ax.scatter(cor[:, 0], cor[:, 1], s=10, c="tab:blue", marker="x", label="corrected")
    trk = np.array(tracks, dtype=float).reshape(-1, 2)
    if len(trk):
        ax.scatter(trk[:, 0], trk[:, 1], s=40, facecolors="none", edgecolors="tab:red",
                   label="tracks")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(title or f"frame {frame.index}")
    ax.legend(loc="upper right", fontsize=7)
    return _save(fig, path)


def plot_variant_scores(rows: Sequence[dict], path, metric: str = "f1") -> Path:
    """Grouped bars of one metric per scenario and variant (rows as in the metrics CSV)."""
    scenarios = sorted({r["scenario"] for r in rows})
    variants = list(dict.fromkeys(r["variant"] for r in rows))
    table = {(r["scenario"], r["variant"]): r[metric] for r in rows}
    fig, ax = plt.subplots(figsize=(max(6, 1.1 * len(scenarios)), 4))
    w = 0.8 / max(len(variants), 1)
    x = np.arange(len(scenarios))
    for k, v in enumerate(variants):
        vals = [table.get((s, v), np.nan) for s in scenarios]
        ax.bar(x + (k - (len(variants) - 1) / 2) * w, vals, w, label=v)
    ax.set_xticks(x)
    ax.set_xticklabels(scenarios, rotation=40, ha="right", fontsize=7)
    ax.set_ylim(0, 1.02)
    ax.set_ylabel(metric)
    ax.legend(fontsize=7, ncol=3)
    return _save(fig, path)


def plot_tunnel_model(model: SegmentedTunnelModel, path) -> Path:
    """Roof chords over the true arc, and the path segmentation over the centerline."""
    fig, (a, b) = plt.subplots(1, 2, figsize=(10, 4), gridspec_kw={"width_ratios": [1, 2]})
    cs = model.cross_section
    phi = np.linspace(0, 2 * np.pi, 400)
    arc_u = cs.tunnel_radius * np.cos(phi)
    arc_z = cs.center_height + cs.tunnel_radius * np.sin(phi)
    keep = arc_z >= 0
    a.plot(arc_u[keep], arc_z[keep], color="0.6", lw=1)
    for r in model.roof_segments:
        a.plot([r.start[0], r.end[0]], [r.start[1], r.end[1]], marker="o", ms=2)
    lo, hi = model.lane_boundaries
    a.plot([lo, hi], [0, 0], color="k", lw=3)
    a.set_aspect("equal")
    a.set_title(f"cross-section, N={model.sector_count}")
    a.set_xlabel("u (m)")
    a.set_ylabel("z (m)")

    ys = np.linspace(*model.extent, 400)
    b.plot(ys, model.centerline.lateral(ys), color="0.6", lw=1, label="centerline")
    for s in model.path_segments:
        b.plot([s.start[1], s.end[1]], [s.start[0], s.end[0]], marker="|")
    b.set_title(f"path, M={len(model.path_segments)}")
    b.set_xlabel("y (m)")
    b.set_ylabel("x (m)")
    return _save(fig, path)


def plot_bench(report: dict, path) -> Path:
    fig, ax = plt.subplots(figsize=(4, 3))
    vals = [report["segmented_per_point"] * 1e3, report["curved_per_point"] * 1e3]
    ax.bar(["segmented", "curved"], vals, color=["tab:blue", "tab:orange"])
    ax.set_ylabel("ms per ghost point")
    ax.set_title(f"{report['projected_fps']:.1f} fps at {report['frame_size']} points/frame")
    return _save(fig, path)
