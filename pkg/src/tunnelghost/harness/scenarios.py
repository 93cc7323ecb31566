"""Tunnel fixtures and scripted traffic scenarios used by the evaluation suite.

Lane convention: the 4 m road carries two 2 m lanes whose centres sit at
offset -1 (left) and +1 (right) from the centerline.  Departing traffic
(moving away from the radar, +y) uses the right lane.

Builders script traffic as seen by a radar at the tunnel entrance.  The
``exit`` deployment replays every vehicle backwards along its route, so the
same traffic approaches the radar instead (lanes swap sides because the
radar now faces the other way).
"""

from __future__ import annotations

from dataclasses import replace
from typing import Callable

from ..multipath_sim import RadarConfig, ScenarioConfig, VehicleScript
from ..tunnel_model import CenterlineSpec, SegmentedTunnelModel, build_tunnel_model

RIGHT, LEFT = 1.0, -1.0
TRUCK_RIGHT, TRUCK_LEFT = 0.75, -0.75
CURVED_COEFFICIENTS = (0.0, 0.0, 1.12e-4, 1.34e-7)


def straight_tunnel(**kw) -> SegmentedTunnelModel:
    return build_tunnel_model(centerline=CenterlineSpec.straight(), **kw)


def curved_tunnel(**kw) -> SegmentedTunnelModel:
    """Cubic bend drifting about 19 m sideways over 350 m; 7 path segments of 14 to 78 m."""
    kw.setdefault("extent", (0.0, 350.0))
    return build_tunnel_model(centerline=CenterlineSpec(CURVED_COEFFICIENTS), **kw)


def _depart(vid, y0, y1, speed, lane=RIGHT, kind="car", start=0.0):
    return VehicleScript(vid, ((y0, lane), (y1, lane)), speed, kind, start)


def _approach(vid, y0, y1, speed, lane=LEFT, kind="car", start=0.0):
    return VehicleScript(vid, ((y0, lane), (y1, lane)), speed, kind, start)


def cars(model, seed=0, radar=None, duration=15.0) -> ScenarioConfig:
    v = [_depart(1, 40, 360, 20.0), _approach(2, 355, 40, 22.0),
         _depart(3, 40, 360, 18.0, start=5.0)]
    return ScenarioConfig("cars", model, v, radar or RadarConfig(), duration, seed)


def trucks(model, seed=0, radar=None, duration=15.0) -> ScenarioConfig:
    # trucks are 2.5 m wide, so they hug the centerline side of their lane
    v = [_depart(1, 40, 360, 16.0, TRUCK_RIGHT, "truck"), _approach(2, 355, 40, 20.0),
         _depart(3, 40, 360, 15.0, TRUCK_RIGHT, "truck", start=6.0)]
    return ScenarioConfig("trucks", model, v, radar or RadarConfig(), duration, seed)


def congestion(model, seed=0, radar=None, duration=15.0) -> ScenarioConfig:
    """Two cars crawling below 10 km/h with a 1.5 m bumper gap."""
    speed = 2.5
    v = [_depart(1, 120.0, 200.0, speed), _depart(2, 114.0, 194.0, speed)]
    return ScenarioConfig("congestion", model, v, radar or RadarConfig(), duration, seed)


def occlusion(model, seed=0, radar=None, duration=14.0) -> ScenarioConfig:
    """A car ahead of a truck in the same lane, both departing.

    The truck drives at 55% of the car's speed so it stays between the radar
    and the car: the car's direct line of sight passes through the truck
    body while the roof-reflected paths clear it.
    """
    car = _depart(1, 60.0, 340.0, 20.0)
    truck = _depart(2, 33.0, 187.0, 11.0, TRUCK_RIGHT, "truck")
    return ScenarioConfig("occlusion", model, [car, truck], radar or RadarConfig(), duration, seed)


def mixed(model, seed=0, radar=None, duration=15.0) -> ScenarioConfig:
    v = [_depart(1, 40, 360, 20.0),
         _approach(2, 355, 40, 17.0, TRUCK_LEFT, "truck"),
         _approach(3, 355, 40, 15.0, start=3.0),
         _depart(4, 40, 360, 14.0, TRUCK_RIGHT, "truck", start=2.0),
         _depart(5, 40, 360, 22.0, start=7.0)]
    return ScenarioConfig("mixed", model, v, radar or RadarConfig(), duration, seed)


def facing(model, seed=0, radar=None, duration=16.0) -> ScenarioConfig:
    """Traffic approaching the radar: it enters the detection region at its far edge."""
    v = [_approach(k + 1, 355.0, 40.0, 20.0, start=3.0 * k) for k in range(3)]
    return ScenarioConfig("facing", model, v, radar or RadarConfig(), duration, seed)


def behind(model, seed=0, radar=None, duration=16.0) -> ScenarioConfig:
    """Traffic moving away from the radar: it enters the detection region at its near edge."""
    v = [_depart(k + 1, 40.0, 355.0, 20.0, start=3.0 * k) for k in range(3)]
    return ScenarioConfig("behind", model, v, radar or RadarConfig(), duration, seed)


def single_car(model, seed=0, radar=None, duration=10.0) -> ScenarioConfig:
    return ScenarioConfig("single_car", model, [_depart(1, 60, 300, 20.0)],
                          radar or RadarConfig(), duration, seed)


BUILDERS: dict[str, Callable[..., ScenarioConfig]] = {
    "cars": cars, "trucks": trucks, "congestion": congestion, "occlusion": occlusion,
    "mixed": mixed, "facing": facing, "behind": behind, "single_car": single_car,
}
TUNNELS: dict[str, Callable[..., SegmentedTunnelModel]] = {
    "straight": straight_tunnel, "curved": curved_tunnel,
}

DEPLOYMENTS = ("entrance", "exit")

# evaluation suite: (scenario, tunnel, deployment)
SUITE = tuple((s, t, d) for s in ("cars", "trucks", "congestion", "occlusion")
              for t in ("straight", "curved") for d in DEPLOYMENTS)
MIXED_SUITE = tuple(("mixed", t, d) for t in ("straight", "curved") for d in DEPLOYMENTS)


def reversed_traffic(vehicles) -> list[VehicleScript]:
    """Each vehicle driven backwards along its route, lateral offsets mirrored."""
    return [replace(v, waypoints=tuple((y, -off) for y, off in reversed(v.waypoints)))
            for v in vehicles]


def build_scenario(name: str, tunnel: str = "straight", deployment: str = "entrance",
                   seed: int = 0, radar: RadarConfig | None = None, model=None,
                   **kw) -> ScenarioConfig:
    if name not in BUILDERS:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(BUILDERS)}")
    if deployment not in DEPLOYMENTS:
        raise KeyError(f"unknown deployment {deployment!r}; choose from {DEPLOYMENTS}")
    if model is None:
        if tunnel not in TUNNELS:
            raise KeyError(f"unknown tunnel {tunnel!r}; choose from {sorted(TUNNELS)}")
        model = TUNNELS[tunnel]()
    sc = BUILDERS[name](model, seed=seed, radar=radar, **kw)
    vehicles = sc.vehicles if deployment == "entrance" else reversed_traffic(sc.vehicles)
    return replace(sc, name=f"{name}-{tunnel}-{deployment}", vehicles=vehicles)

# independent collection sessions per suite entry (simulator seeds)
SESSIONS = (0, 1, 2)
