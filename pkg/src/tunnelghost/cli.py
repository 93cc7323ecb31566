"""Command line entry point: ``tunnelghost <command> [options]``.

Exit status is 0 on success, 2 for configuration or input-file errors and 3
for failures while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .harness import plotting
from .harness.bench import bench, ghost_batch
from .harness.config import (ConfigError, LoadedConfig, load_config, pipeline_from_config,
                             radar_from_config, scenario_from_config, tunnel_from_config)
from .harness.evaluate import run_suite
from .harness.pipeline import VARIANTS, PipelineConfig, process_frames
from .harness.records import (FRAMES_SCHEMA, RecordError, metrics_csv, metrics_row, read_frames,
                              read_jsonl, write_candidates, write_frames, write_ground_truth,
                              write_metrics_csv, write_timing, write_tracks)
from .harness.scenarios import DEPLOYMENTS, MIXED_SUITE, SESSIONS, SUITE
from .multipath_sim import simulate_scenario

log = logging.getLogger("tunnelghost")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _config(args) -> LoadedConfig:
    return load_config(args.config) if args.config else LoadedConfig({})


def _pipeline_cfg(cfg: LoadedConfig, header: dict) -> PipelineConfig:
    pcfg = pipeline_from_config(cfg)
    corr = pcfg.correction
    if "radar_position" in header:
        corr = replace(corr, radar_position=tuple(float(v) for v in header["radar_position"]))
    tracker = pcfg.tracker
    if "frame_rate" in header:
        tracker = replace(tracker, dt=1.0 / float(header["frame_rate"]))
    return replace(pcfg, correction=corr, tracker=tracker)


def _frames_and_model(args, cfg: LoadedConfig):
    header, _ = read_jsonl(args.frames, FRAMES_SCHEMA)
    truth = args.truth
    if truth is None:
        guess = Path(args.frames).with_name("ground_truth.jsonl")
        truth = guess if guess.exists() else None
    frames = read_frames(args.frames, truth)
    data = dict(cfg.data)
    if args.tunnel:
        data["tunnel"] = args.tunnel
    elif "tunnel" not in data and "tunnel" in header:
        data["tunnel"] = header["tunnel"]
    _, model = tunnel_from_config(replace(cfg, data=data))
    return header, frames, model


def cmd_simulate(args) -> int:
    cfg = _config(args)
    sc = scenario_from_config(cfg, args.scenario, args.tunnel, args.deployment, args.seed)
    frames = simulate_scenario(sc)
    out = Path(args.out_dir)
    meta = {"scenario": sc.name, "seed": sc.seed,
            "tunnel": args.tunnel or cfg.data.get("tunnel", "straight"),
            "radar_position": list(sc.radar.position), "frame_rate": sc.radar.frame_rate}
    write_frames(out / "frames.jsonl", frames, **meta)
    write_ground_truth(out / "ground_truth.jsonl", frames, scenario=sc.name, seed=sc.seed)
    n_pts = sum(len(f.points) for f in frames)
    n_ghost = sum(p.path == "ghost" for f in frames for p in f.points)
    print("scenario\tframes\tpoints\tghost_points")
    print(f"{sc.name}\t{len(frames)}\t{n_pts}\t{n_ghost}")
    return EXIT_OK


def _variant(args, default: str) -> str:
    v = args.variant[-1] if args.variant else default
    if v not in VARIANTS:
        raise ConfigError(f"unknown variant {v!r}; choose from {list(VARIANTS)}")
    return v


def cmd_correct(args) -> int:
    cfg = _config(args)
    header, frames, model = _frames_and_model(args, cfg)
    variant = "curve_model" if args.model == "curved" else _variant(args, "full")
    if variant in ("raw_points", "ghost_removal"):
        raise ConfigError(f"variant {variant!r} does not correct ghost points")
    res = process_frames(model, frames, variant, _pipeline_cfg(cfg, header), header.get("scenario", ""))
    out = Path(args.out_dir)
    corrected = [f.with_points(p) for f, p in zip(frames, res.processed)]
    meta = {k: v for k, v in header.items() if k != "schema"}
    write_frames(out / "corrected.jsonl", corrected, **{**meta, "variant": variant})
    write_candidates(out / "candidates.jsonl", res.records, variant=variant)
    n_ok = sum(r.position is not None for _, r in res.records)
    print("variant\tghosts\tcorrected\tuncorrectable")
    print(f"{variant}\t{len(res.records)}\t{n_ok}\t{len(res.records) - n_ok}")
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = _config(args)
    header, frames, model = _frames_and_model(args, cfg)
    variant = _variant(args, "full")
    res = process_frames(model, frames, variant, _pipeline_cfg(cfg, header), header.get("scenario", ""))
    out = Path(args.out_dir)
    write_tracks(out / "tracks.jsonl", res.tracks, variant=variant)
    row = metrics_row(res)
    write_metrics_csv(out / "metrics.csv", [row])
    sys.stdout.write(metrics_csv([row]))
    if args.plot and frames:
        k = len(frames) // 2
        plotting.plot_frame(model, frames[k], out / "frame.png", res.processed[k],
                            [(t.x, t.y) for t in res.tracks if t.frame == k and t.status == "confirmed"])
    return EXIT_OK


def _parse_suite(items) -> tuple:
    if not items or items == ["default"]:
        return SUITE
    if items == ["mixed"]:
        return MIXED_SUITE
    out = []
    for it in items:
        parts = it.split(":")
        if not 1 <= len(parts) <= 3:
            raise ConfigError(f"suite entry {it!r} must be scenario[:tunnel[:deployment]]")
        parts += ["straight", "entrance"][len(parts) - 1:]
        if parts[2] not in DEPLOYMENTS:
            raise ConfigError(f"unknown deployment {parts[2]!r} in suite entry {it!r}")
        out.append(tuple(parts))
    return tuple(out)


def cmd_eval(args) -> int:
    cfg = _config(args)
    suite = _parse_suite(args.suite)
    seeds = [args.seed] if args.seed is not None else list(args.seeds or SESSIONS)
    variants = args.variant or list(VARIANTS)
    for v in variants:
        if v not in VARIANTS:
            raise ConfigError(f"unknown variant {v!r}; choose from {list(VARIANTS)}")
    pcfg = pipeline_from_config(cfg)
    radar = radar_from_config(cfg) if "radar" in cfg.data else None
    try:
        result = run_suite(suite, seeds, variants, radar, pcfg,
                           progress=lambda r: log.info("%s %s f1=%.4f", r.scenario, r.variant, r.report.f1))
    except KeyError as exc:
        raise ConfigError(str(exc.args[0]) if exc.args else str(exc)) from exc
    out = Path(args.out_dir)
    rows = result.rows() + result.total_rows()
    write_metrics_csv(out / "metrics.csv", rows)
    sys.stdout.write(metrics_csv(rows))
    summary = {"seeds": seeds, "suite": [list(s) for s in suite],
               "f1": result.f1()}
    if "full" in variants:
        rel = result.relocation("full")
        summary["relocation"] = {"corrected": rel.corrected, "inside": int(rel.inside),
                                 "rate": rel.rate}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    if not args.no_plot:
        plotting.plot_variant_scores(rows, out / "f1_by_scenario.png")
        first = next((r for r in result.results if r.variant == variants[-1]), None)
        if first is not None and first.frames:
            k = len(first.frames) // 2
            plotting.plot_frame(first.model, first.frames[k], out / "frame.png", first.processed[k],
                                [(t.x, t.y) for t in first.tracks
                                 if t.frame == k and t.status == "confirmed"],
                                title=f"{first.scenario} {first.variant} frame {k}")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config(args)
    data = dict(cfg.data)
    if args.tunnel:
        data["tunnel"] = args.tunnel
    _, model = tunnel_from_config(replace(cfg, data=data))
    if args.points < 1:
        raise ConfigError("--points must be positive")
    ghosts = ghost_batch(model, args.points, args.seed or 0)
    rep = bench(model, ghosts, args.frame_size, pipeline_from_config(cfg).correction).to_dict()
    out = Path(args.out_dir)
    write_timing(out / "timing.jsonl", rep)
    print("points\tframe_size\tsegmented_ms\tcurved_ms\tspeedup\tprojected_fps")
    print(f"{rep['points']}\t{rep['frame_size']}\t{rep['segmented_per_point'] * 1e3:.4f}\t"
          f"{rep['curved_per_point'] * 1e3:.4f}\t{rep['speedup']:.2f}\t{rep['projected_fps']:.2f}")
    if not args.no_plot:
        plotting.plot_bench(rep, out / "bench.png")
    return EXIT_OK


def cmd_model(args) -> int:
    cfg = _config(args)
    data = dict(cfg.data)
    if args.tunnel:
        data["tunnel"] = args.tunnel
    name, model = tunnel_from_config(replace(cfg, data=data))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    d = model.to_dict()
    (out / "model.json").write_text(json.dumps({"schema": "tunnelghost.model/1", "name": name, **d},
                                               indent=2) + "\n", encoding="utf-8")
    eb = model.error_budget()
    print("tunnel\tN\tM\tsector_angle_deg\tE_c\tE_p")
    print(f"{name}\t{model.sector_count}\t{len(model.path_segments)}\t"
          f"{d['roof_segments'][0]['sector_angle_deg']:.3f}\t{eb.cross_section_bound:.4f}\t"
          f"{eb.path_bound:.4f}")
    if not args.no_plot:
        plotting.plot_tunnel_model(model, out / "model.png")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="simulator seed")
    common.add_argument("--variant", action="append", default=None,
                        help=f"pipeline variant, one of {', '.join(VARIANTS)} (repeatable for eval)")
    common.add_argument("--config", default=None, help="YAML run configuration")
    common.add_argument("--out-dir", default="out", help="directory for output artifacts")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="tunnelghost", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate radar frames for a scenario")
    s.add_argument("--scenario", default=None)
    s.add_argument("--tunnel", default=None)
    s.add_argument("--deployment", default=None, choices=DEPLOYMENTS)
    s.set_defaults(func=cmd_simulate)

    for name, func, hlp in (("correct", cmd_correct, "correct ghost points in a frame log"),
                            ("detect", cmd_detect, "cluster and track a frame log")):
        c = sub.add_parser(name, parents=[common], help=hlp)
        c.add_argument("--frames", required=True)
        c.add_argument("--truth", default=None, help="ground-truth log (default: next to frames)")
        c.add_argument("--tunnel", default=None)
        if name == "correct":
            c.add_argument("--model", choices=("segmented", "curved"), default="segmented")
        else:
            c.add_argument("--plot", action="store_true", help="render a mid-run frame figure")
        c.set_defaults(func=func)

    e = sub.add_parser("eval", parents=[common], help="run the scenario suite and report metrics")
    e.add_argument("--suite", nargs="*", default=None,
                   help="'default', 'mixed' or scenario[:tunnel[:deployment]] entries")
    e.add_argument("--seeds", type=int, nargs="*", default=None)
    e.add_argument("--no-plot", action="store_true")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", parents=[common], help="time segmented vs curved correction")
    b.add_argument("--points", type=int, default=2000)
    b.add_argument("--frame-size", type=int, default=200)
    b.add_argument("--tunnel", default=None)
    b.add_argument("--no-plot", action="store_true")
    b.set_defaults(func=cmd_bench)

    m = sub.add_parser("model", parents=[common], help="build and inspect a tunnel model")
    m.add_argument("--tunnel", default=None)
    m.add_argument("--no-plot", action="store_true")
    m.set_defaults(func=cmd_model)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, RecordError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
