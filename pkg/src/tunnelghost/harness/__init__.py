"""Scenarios, end-to-end pipeline variants, metrics and run records."""

from .evaluate import SuiteResult, run_suite
from .metrics import MatchConfig, MetricsReport, compute_metrics, match_frame
from .pipeline import VARIANTS, PipelineConfig, PipelineResult, relocation, run_pipeline
from .scenarios import MIXED_SUITE, SESSIONS, SUITE, build_scenario, curved_tunnel, straight_tunnel

__all__ = [
    "MIXED_SUITE", "MatchConfig", "MetricsReport", "PipelineConfig", "PipelineResult", "SESSIONS",
    "SUITE", "SuiteResult", "VARIANTS", "build_scenario", "compute_metrics", "curved_tunnel",
    "match_frame", "relocation", "run_pipeline", "run_suite", "straight_tunnel",
]
