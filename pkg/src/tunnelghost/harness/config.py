"""YAML run configuration: tunnel, radar, traffic and pipeline settings.

A config file is a mapping; every section is optional.  ``EXAMPLE_CONFIG``
shows all of them.  A tunnel mapping accepts ``cross_section``
(tunnel_radius, center_height, road_width), ``centerline`` (polynomial
coefficients, lowest order first), ``extent``, ``lane_boundaries``,
``resolution_limit`` and ``max_segment_length``.

Errors carry ``file:line`` context and are raised as :class:`ConfigError`.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

import yaml

from ..detection import ClusterConfig, TrackerConfig
from ..ghost_correction import CorrectionConfig
from ..multipath_sim import RadarConfig, ScenarioConfig, ScenarioError, VehicleScript
from ..tunnel_model import (CenterlineSpec, CrossSectionSpec, GeometryError,
                            SegmentedTunnelModel, build_tunnel_model)
from .metrics import MatchConfig
from .pipeline import PipelineConfig
from .scenarios import BUILDERS, DEPLOYMENTS, TUNNELS, build_scenario, reversed_traffic

EXAMPLE_CONFIG = """\
scenario: mixed            # named traffic script
tunnel: curved             # straight | curved | mapping
deployment: entrance       # entrance | exit
seed: 0
duration: 15.0
radar: {sigma_range: 0.3, sigma_azimuth_deg: 0.2, dropout: 0.2}
# vehicles:                # explicit scripts replace the named scenario's traffic
#   - {id: 1, waypoints: [[40, 1.0], [360, 1.0]], speed: 20.0, kind: car}
pipeline:
  correction: {car_height: 1.5, association_gate: 4.0}
  cluster: {weights: [1.0, 0.5, 4.0], distance_threshold: 4.0}
  tracker: {association_gate: 5.0, confirm_hits: 3, max_misses: 5}
  match: {lateral_threshold: 1.5, longitudinal_threshold: 5.0}
  uncorrectable: drop
"""

TOP_LEVEL = ("scenario", "tunnel", "deployment", "seed", "duration", "radar", "vehicles",
             "pipeline")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with ``file:line`` when known."""


@dataclass
class LoadedConfig:
    data: dict
    source: str = "<config>"
    lines: dict | None = None  # key path tuple -> 1-based line

    def where(self, *path) -> str:
        line = (self.lines or {}).get(tuple(path))
        return f"{self.source}:{line}" if line else self.source

    def error(self, path: tuple, msg: str) -> ConfigError:
        key = ".".join(str(p) for p in path)
        return ConfigError(f"{self.where(*path)}: {key + ': ' if key else ''}{msg}")

    def get(self, key: str, default=None):
        return self.data.get(key, default)


def _line_map(node, prefix=(), out=None) -> dict:
    out = {} if out is None else out
    out.setdefault(prefix, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = prefix + (k.value,)
            out[key] = k.start_mark.line + 1
            _line_map(v, key, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, prefix + (i,), out)
    return out


def parse_config(text: str, source: str = "<config>") -> LoadedConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark is not None else source
        raise ConfigError(f"{where}: invalid YAML ({getattr(exc, 'problem', exc)})") from exc
    if data is None:
        data = {}
    cfg = LoadedConfig(data, source, _line_map(node) if node is not None else {})
    if not isinstance(data, dict):
        raise cfg.error((), "top level must be a mapping")
    for key in data:
        if key not in TOP_LEVEL:
            raise cfg.error((key,), f"unknown key; expected one of {list(TOP_LEVEL)}")
    return cfg


def load_config(path) -> LoadedConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror or exc})") from exc
    return parse_config(text, str(path))


def _build(cfg: LoadedConfig, path: tuple, cls, values, **extra):
    if values is None:
        values = {}
    if not isinstance(values, dict):
        raise cfg.error(path, f"expected a mapping for {cls.__name__}")
    names = {f.name for f in fields(cls)}
    for k in values:
        if k not in names:
            raise cfg.error(path + (k,), f"unknown field; expected one of {sorted(names)}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
    try:
        return cls(**{**extra, **kw})
    except (TypeError, ValueError) as exc:
        raise cfg.error(path, str(exc)) from exc


def tunnel_from_config(cfg: LoadedConfig) -> tuple[str, SegmentedTunnelModel]:
    spec = cfg.get("tunnel", "straight")
    if isinstance(spec, str):
        if spec not in TUNNELS:
            raise cfg.error(("tunnel",), f"unknown tunnel {spec!r}; choose from {sorted(TUNNELS)}")
        return spec, TUNNELS[spec]()
    if not isinstance(spec, dict):
        raise cfg.error(("tunnel",), "expected a tunnel name or mapping")
    allowed = {"name", "cross_section", "centerline", "extent", "lane_boundaries",
               "resolution_limit", "max_segment_length"}
    for k in spec:
        if k not in allowed:
            raise cfg.error(("tunnel", k), f"unknown key; expected one of {sorted(allowed)}")
    try:
        cs = _build(cfg, ("tunnel", "cross_section"), CrossSectionSpec, spec.get("cross_section"))
        coeffs = spec.get("centerline", [0.0, 0.0])
        cl = CenterlineSpec(tuple(float(c) for c in coeffs))
        kw = {k: spec[k] for k in ("extent", "lane_boundaries", "resolution_limit",
                                   "max_segment_length") if k in spec}
        model = build_tunnel_model(cs, cl, **kw)
    except ConfigError:
        raise
    except (GeometryError, TypeError, ValueError) as exc:
        raise cfg.error(("tunnel",), str(exc)) from exc
    return str(spec.get("name", "custom")), model


def radar_from_config(cfg: LoadedConfig) -> RadarConfig:
    try:
        return _build(cfg, ("radar",), RadarConfig, cfg.get("radar"))
    except ScenarioError as exc:
        raise cfg.error(("radar",), str(exc)) from exc


def _vehicles(cfg: LoadedConfig) -> list[VehicleScript]:
    items = cfg.get("vehicles")
    if not isinstance(items, list) or not items:
        raise cfg.error(("vehicles",), "expected a non-empty list of vehicle scripts")
    out = []
    for n, v in enumerate(items):
        if not isinstance(v, dict):
            raise cfg.error(("vehicles", n), "expected a mapping")
        try:
            wps = tuple((float(y), float(off)) for y, off in v.get("waypoints", ()))
            out.append(_build(cfg, ("vehicles", n), VehicleScript, {**v, "waypoints": wps}))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise cfg.error(("vehicles", n), str(exc)) from exc
    return out


def scenario_from_config(cfg: LoadedConfig, scenario: str | None = None,
                         tunnel: str | None = None, deployment: str | None = None,
                         seed: int | None = None) -> ScenarioConfig:
    """Scenario described by ``cfg``; explicit arguments override file values."""
    data = dict(cfg.data)
    for key, val in (("scenario", scenario), ("tunnel", tunnel), ("deployment", deployment),
                     ("seed", seed)):
        if val is not None:
            data[key] = val
    cfg = replace(cfg, data=data)
    tunnel_name, model = tunnel_from_config(cfg)
    radar = radar_from_config(cfg)
    dep = data.get("deployment", "entrance")
    if dep not in DEPLOYMENTS:
        raise cfg.error(("deployment",), f"unknown deployment {dep!r}; choose from {list(DEPLOYMENTS)}")
    try:
        seed_v = int(data.get("seed", 0))
    except (TypeError, ValueError):
        raise cfg.error(("seed",), "seed must be an integer") from None
    name = data.get("scenario", "custom" if "vehicles" in data else "mixed")
    try:
        if "vehicles" in data:
            vehicles = _vehicles(cfg)
            if dep == "exit":
                vehicles = reversed_traffic(vehicles)
            sc = ScenarioConfig(f"{name}-{tunnel_name}-{dep}", model, vehicles, radar,
                                float(data.get("duration", 15.0)), seed_v)
        else:
            if name not in BUILDERS:
                raise cfg.error(("scenario",), f"unknown scenario {name!r}; choose from {sorted(BUILDERS)}")
            kw = {"duration": float(data["duration"])} if "duration" in data else {}
            sc = build_scenario(name, tunnel_name, dep, seed_v, radar, model, **kw)
    except ScenarioError as exc:
        raise cfg.error(("vehicles",) if "vehicles" in data else ("scenario",), str(exc)) from exc
    return sc


def pipeline_from_config(cfg: LoadedConfig) -> PipelineConfig:
    p = cfg.get("pipeline") or {}
    if not isinstance(p, dict):
        raise cfg.error(("pipeline",), "expected a mapping")
    allowed = {"correction", "cluster", "tracker", "match", "uncorrectable", "predict_previous"}
    for k in p:
        if k not in allowed:
            raise cfg.error(("pipeline", k), f"unknown key; expected one of {sorted(allowed)}")
    out = PipelineConfig(
        correction=_build(cfg, ("pipeline", "correction"), CorrectionConfig, p.get("correction")),
        cluster=_build(cfg, ("pipeline", "cluster"), ClusterConfig, p.get("cluster")),
        tracker=_build(cfg, ("pipeline", "tracker"), TrackerConfig, p.get("tracker")),
        match=_build(cfg, ("pipeline", "match"), MatchConfig, p.get("match")),
    )
    if "uncorrectable" in p:
        if p["uncorrectable"] not in ("drop", "keep"):
            raise cfg.error(("pipeline", "uncorrectable"), "expected 'drop' or 'keep'")
        out = replace(out, uncorrectable=p["uncorrectable"])
    if "predict_previous" in p:
        out = replace(out, predict_previous=bool(p["predict_previous"]))
    return out
