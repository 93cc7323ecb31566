"""Line-delimited artifact formats.

Every file starts with a header line naming its schema.  JSONL files carry a
JSON object header ``{"schema": ...}``; the metrics CSV carries a
``# schema: ...`` comment line before the column row.  Floats are written
with ``repr`` precision so a write/read cycle is lossless.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Sequence

from ..ghost_correction import CorrectionRecord
from ..points import GroundTruth, RadarPoint, SimFrame

FRAMES_SCHEMA = "tunnelghost.frames/1"
TRUTH_SCHEMA = "tunnelghost.ground_truth/1"
TRACKS_SCHEMA = "tunnelghost.tracks/1"
CANDIDATES_SCHEMA = "tunnelghost.candidates/1"
METRICS_SCHEMA = "tunnelghost.metrics/1"
TIMING_SCHEMA = "tunnelghost.timing/1"

# stable column order of the metrics CSV
METRICS_COLUMNS = ("scenario", "variant", "tp", "fp", "fn", "precision", "recall", "f1",
                   "mean_lag", "fps")


class RecordError(ValueError):
    """Malformed artifact file; the message carries ``path:line`` context."""


def write_jsonl(path, schema: str, rows: Iterable[dict], **meta) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema": schema, **meta}) + "\n")
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return path


def read_jsonl(path, schema: str) -> tuple[dict, list[dict]]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise RecordError(f"{path}: {exc.strerror or exc}") from exc
    if not lines:
        raise RecordError(f"{path}:1: empty file, expected a {schema!r} header")
    rows = []
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordError(f"{path}:{n}: invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise RecordError(f"{path}:{n}: expected a JSON object")
        rows.append((n, obj))
    header = rows[0][1]
    if header.get("schema") != schema:
        raise RecordError(f"{path}:{rows[0][0]}: schema {header.get('schema')!r}, expected {schema!r}")
    return header, [obj for _, obj in rows[1:]]


def frame_to_dict(frame: SimFrame) -> dict:
    return {"index": frame.index, "timestamp": frame.timestamp,
            "points": [p.to_dict() for p in frame.points]}


def write_frames(path, frames: Sequence[SimFrame], **meta) -> Path:
    return write_jsonl(path, FRAMES_SCHEMA, (frame_to_dict(f) for f in frames), **meta)


def write_ground_truth(path, frames: Sequence[SimFrame], **meta) -> Path:
    rows = ({"index": f.index, "timestamp": f.timestamp,
             "vehicles": [g.to_dict() for g in f.ground_truth]} for f in frames)
    return write_jsonl(path, TRUTH_SCHEMA, rows, **meta)


def read_frames(path, truth_path=None) -> list[SimFrame]:
    """Frames from a frame log, with ground truth merged in by index when given."""
    _, rows = read_jsonl(path, FRAMES_SCHEMA)
    truth: dict[int, tuple[GroundTruth, ...]] = {}
    if truth_path is not None:
        _, trows = read_jsonl(truth_path, TRUTH_SCHEMA)
        for r in trows:
            truth[int(r["index"])] = tuple(GroundTruth.from_dict(v) for v in r["vehicles"])
    frames = []
    for n, r in enumerate(rows, start=2):
        try:
            pts = tuple(RadarPoint.from_dict(p) for p in r["points"])
            k = int(r["index"])
            frames.append(SimFrame(k, float(r["timestamp"]), pts, truth.get(k, ())))
        except (KeyError, TypeError, ValueError) as exc:
            raise RecordError(f"{path}:{n}: bad frame record ({exc})") from exc
    return frames


def write_tracks(path, rows: Iterable, **meta) -> Path:
    return write_jsonl(path, TRACKS_SCHEMA, (r.to_dict() for r in rows), **meta)


def write_candidates(path, records: Iterable[tuple[int, CorrectionRecord]], **meta) -> Path:
    """Per-ghost candidate dump: every (i, j) tried, its path lengths and selection flags."""
    return write_jsonl(path, CANDIDATES_SCHEMA,
                       ({"frame": k, **rec.to_dict()} for k, rec in records), **meta)


def metrics_row(result) -> dict:
    rep = result.report
    lag = rep.lag.mean if rep.lag is not None else float("nan")
    return {"scenario": result.scenario, "variant": result.variant, "tp": rep.tp, "fp": rep.fp,
            "fn": rep.fn, "precision": rep.precision, "recall": rep.recall, "f1": rep.f1,
            "mean_lag": lag, "fps": result.fps}


def metrics_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {METRICS_SCHEMA}\n")
    w = csv.DictWriter(buf, fieldnames=METRICS_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r[k] for k in METRICS_COLUMNS})
    return buf.getvalue()


def write_metrics_csv(path, rows: Iterable[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(metrics_csv(rows), encoding="utf-8")
    return path


def read_metrics_csv(path) -> list[dict]:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != f"# schema: {METRICS_SCHEMA}":
        raise RecordError(f"{path}:1: missing '# schema: {METRICS_SCHEMA}' header")
    reader = csv.DictReader(lines[1:])
    if tuple(reader.fieldnames or ()) != METRICS_COLUMNS:
        raise RecordError(f"{path}:2: columns {reader.fieldnames}, expected {list(METRICS_COLUMNS)}")
    out = []
    for r in reader:
        out.append({k: (v if k in ("scenario", "variant") else
                        int(v) if k in ("tp", "fp", "fn") else float(v)) for k, v in r.items()})
    return out


def write_timing(path, report: dict) -> Path:
    return write_jsonl(path, TIMING_SCHEMA, [report])


def read_timing(path) -> dict:
    _, rows = read_jsonl(path, TIMING_SCHEMA)
    if len(rows) != 1:
        raise RecordError(f"{path}: expected one timing record, found {len(rows)}")
    return rows[0]
