"""Multipath ghost correction for automotive radar in road tunnels."""

from .curved_oracle import correct_ghost_curved, generate_curved_candidate
from .detection import ClusterConfig, MultiTracker, TrackerConfig, cluster_frame
from .ghost_correction import (CorrectionConfig, TruePointCandidate, correct_frame, correct_point,
                               generate_candidate)
from .multipath_sim import RadarConfig, ScenarioConfig, VehicleScript, simulate_scenario
from .points import GroundTruth, RadarPoint, SimFrame
from .tunnel_model import (CenterlineSpec, CrossSectionSpec, SegmentedTunnelModel,
                           build_tunnel_model, classify_point)

__version__ = "0.1.0"

__all__ = [
    "CenterlineSpec", "ClusterConfig", "CorrectionConfig", "CrossSectionSpec", "GroundTruth",
    "MultiTracker", "RadarConfig", "RadarPoint", "ScenarioConfig", "SegmentedTunnelModel",
    "SimFrame", "TrackerConfig", "TruePointCandidate", "VehicleScript", "build_tunnel_model",
    "classify_point", "cluster_frame", "correct_frame", "correct_ghost_curved", "correct_point",
    "generate_candidate", "generate_curved_candidate", "simulate_scenario",
]
