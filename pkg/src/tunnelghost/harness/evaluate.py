"""Scenario-suite runs: every variant over shared simulated frames."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..multipath_sim import RadarConfig, simulate_scenario
from .metrics import MetricsReport
from .pipeline import VARIANTS, PipelineConfig, PipelineResult, RelocationReport, relocation, run_pipeline
from .records import metrics_row
from .scenarios import build_scenario


@dataclass
class SuiteResult:
    results: list[PipelineResult] = field(default_factory=list)

    def totals(self) -> dict[str, MetricsReport]:
        out: dict[str, MetricsReport] = {}
        for r in self.results:
            out[r.variant] = r.report if r.variant not in out else out[r.variant].merged(r.report)
        return out

    def f1(self) -> dict[str, float]:
        return {v: rep.f1 for v, rep in self.totals().items()}

    def relocation(self, variant: str = "full") -> RelocationReport:
        total = RelocationReport(0, 0, 0)
        for r in self.results:
            if r.variant == variant:
                total = total.merged(relocation(r))
        return total

    def rows(self) -> list[dict]:
        return [metrics_row(r) for r in self.results]

    def total_rows(self) -> list[dict]:
        out = []
        for v, rep in self.totals().items():
            runs = [r for r in self.results if r.variant == v]
            secs = sum(r.seconds for r in runs)
            frames = sum(len(r.frames) for r in runs)
            lags = [x for r in runs if r.report.lag for x in r.report.lag.per_vehicle.values()]
            out.append({"scenario": "TOTAL", "variant": v, "tp": rep.tp, "fp": rep.fp, "fn": rep.fn,
                        "precision": rep.precision, "recall": rep.recall, "f1": rep.f1,
                        "mean_lag": sum(lags) / len(lags) if lags else float("nan"),
                        "fps": frames / secs if secs > 0 else float("inf")})
        return out


def run_suite(suite: Iterable[Sequence[str]], seeds: Sequence[int] = (0,),
              variants: Sequence[str] = VARIANTS, radar: RadarConfig | None = None,
              cfg: PipelineConfig | None = None, progress=None) -> SuiteResult:
    """Run each (scenario, tunnel, deployment) entry once per seed and variant.

    Frames are simulated once per entry and seed and shared by all variants.
    """
    out = SuiteResult()
    for entry in suite:
        for seed in seeds:
            sc = build_scenario(*entry, seed=seed, radar=radar)
            frames = simulate_scenario(sc)
            if len(seeds) > 1:
                sc.name = f"{sc.name}-s{seed}"
            for v in variants:
                res = run_pipeline(sc, v, cfg, frames)
                out.results.append(res)
                if progress is not None:
                    progress(res)
    return out
