"""Dominance verdict along an N ladder, with the analytic prediction alongside."""

import logging
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd

from ssmc_lab.dominance import (
    DominanceReport,
    RatioThresholds,
    Verdict,
    analyze,
    predict_sserw_dominance,
    weak_convergence_distance,
)
from ssmc_lab.errors import ConfigError
from ssmc_lab.expcli.analyses.base import AnalysisResult, BaseAnalysis, RunContext, map_cells
from ssmc_lab.expcli.schema import MuSection
from ssmc_lab.occupation import Binning, MeasureKind, OccupationMeasure, limiting_occupation
from ssmc_lab.sserw import SserwModel, log_mean_time

logger = logging.getLogger(__name__)


def _limit_masses(job: Tuple[str, int, Dict[str, Any], int]) -> np.ndarray:
    kind, n, mu_dump, bins = job
    model = SserwModel(kind, n)
    mu = MuSection.model_validate(mu_dump).build()
    binning = Binning.for_distribution(mu, bins)
    measure = limiting_occupation(mu, lambda th: log_mean_time(model, th), binning, log_scale=True, size=n)
    return measure.masses


def _target(report: DominanceReport):
    if report.verdict is Verdict.DOMINANCE:
        return report.mixture
    return report.limit_measure


def _agrees(report: DominanceReport, prediction: DominanceReport, tol: float = 1e-6) -> bool:
    if report.verdict is not prediction.verdict:
        return False
    if report.verdict is Verdict.DOMINANCE:
        return len(report.points) == len(prediction.points) and bool(
            np.allclose(report.points, prediction.points, atol=tol)
        )
    return True


class DominanceAnalysis(BaseAnalysis):

    @property
    def name(self) -> str:
        return "dominance"

    def compute(self, ctx: RunContext) -> AnalysisResult:
        cfg = ctx.config
        section = cfg.analysis
        ladder = cfg.model.sizes
        if len(ladder) < 2:
            raise ConfigError("dominance needs a model ladder with at least two sizes")
        mu = cfg.mu.build()
        binning = Binning.for_distribution(mu, section.bins)

        report = analyze(
            cfg.model.kind, mu, ladder,
            thresholds=RatioThresholds(section.zero_factor, section.stable_tolerance),
            grid_size=section.grid_size,
            max_refinements=section.max_refinements,
            margin_factor=section.margin_factor,
            binning=binning,
        )
        prediction = predict_sserw_dominance(cfg.model.kind, mu)

        jobs = [(cfg.model.kind.value, n, cfg.mu.model_dump(mode="json"), section.bins) for n in ladder]
        masses = map_cells(_limit_masses, jobs, ctx.threads)
        target = _target(report)
        rows = []
        for n, m in zip(ladder, masses):
            distance: Optional[float] = None
            if target is not None:
                distance = weak_convergence_distance(OccupationMeasure(binning, m, MeasureKind.LIMITING, n), target)
            for point, mass in zip(binning.points, m):
                rows.append({"n": n, "point": point, "mass": mass, "bl_distance": distance})
        table = pd.DataFrame(rows, columns=["n", "point", "mass", "bl_distance"])

        result = AnalysisResult(analysis=self.name)
        result.tables["dominance_ladder"] = table
        result.documents["report"] = {
            "report": report.to_dict(),
            "prediction": prediction.to_dict(),
            "agrees_with_prediction": _agrees(report, prediction),
        }
        result.summary.append(("verdict", report.verdict.value))
        result.summary.append(("theorem", report.theorem_used.value))
        if report.points:
            pts = ", ".join(f"{p:.6g} (w={w:.6g})" for p, w in zip(report.points, report.weights))
            result.summary.append(("dominant points", pts))
        if report.reason:
            result.summary.append(("reason", report.reason))
        result.summary.append(("prediction", f"{prediction.verdict.value}/{prediction.theorem_used.value}"))
        return result
