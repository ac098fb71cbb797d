"""Limit-law verdicts per theta along the N ladder, with survival curves and the Fernandez check."""

import logging
from typing import List, Tuple

import pandas as pd

from ssmc_lab.core import replica_seeds
from ssmc_lab.errors import ConfigError, DomainError
from ssmc_lab.expcli.analyses.base import AnalysisResult, BaseAnalysis, RunContext, map_cells
from ssmc_lab.metastability import (
    LimitThresholds,
    LimitVerdict,
    classify_samples,
    fernandez_check,
    proof_threshold,
    sample_scaled_times,
    survival_curve,
)
from ssmc_lab.sserw import SserwModel

logger = logging.getLogger(__name__)

CellJob = Tuple[str, float, Tuple[int, ...], str, int, int, LimitThresholds, float]


def _metastability_cell(job: CellJob) -> Tuple[LimitVerdict, pd.DataFrame, List[dict]]:
    kind, theta, ladder, source, k, seed, thresholds, eps = job
    seeds = replica_seeds(seed, len(ladder))
    samples = [
        sample_scaled_times(SserwModel(kind, n), theta, k=k, seed=s, source=source)
        for n, s in zip(ladder, seeds)
    ]
    verdict = classify_samples(samples, thresholds)

    curves = []
    for sample in samples:
        curve = survival_curve(sample)
        curve.insert(0, "n", sample.n)
        curve.insert(0, "theta", theta)
        curves.append(curve)

    checks = []
    for n in ladder:
        model = SserwModel(kind, n)
        try:
            threshold, bound = proof_threshold(model, theta, eps)
        except DomainError:
            continue
        check = fernandez_check(model, theta, threshold, bound)
        checks.append({
            "theta": theta,
            "n": n,
            "threshold": check.threshold,
            "sup_survival": check.sup_survival,
            "bound": bound,
            "ratio": check.ratio,
        })
    return verdict, pd.concat(curves, ignore_index=True), checks


class MetastabilityAnalysis(BaseAnalysis):

    @property
    def name(self) -> str:
        return "metastability"

    def compute(self, ctx: RunContext) -> AnalysisResult:
        cfg = ctx.config
        section = cfg.analysis
        ladder = tuple(cfg.model.sizes)
        if len(ladder) < 2:
            raise ConfigError("metastability needs a model ladder with at least two sizes")

        seeds = replica_seeds(ctx.seed, len(section.thetas))
        jobs = [
            (cfg.model.kind.value, theta, ladder, section.source.value, section.samples, s,
             section.thresholds, section.eps)
            for theta, s in zip(section.thetas, seeds)
        ]
        cells = map_cells(_metastability_cell, jobs, ctx.threads)

        result = AnalysisResult(analysis=self.name)
        verdict_frames = []
        for verdict, _, _ in cells:
            frame = verdict.to_frame()
            frame["verdict"] = verdict.kind.value
            verdict_frames.append(frame)
            result.summary.append((f"theta={verdict.theta:g}", f"{verdict.kind.value} (ks={verdict.ks_distance:.4g}, "
                                   f"coverage={verdict.final_coverage:.4g})"))
        result.tables["metastability"] = pd.concat(verdict_frames, ignore_index=True)
        result.tables["survival"] = pd.concat([c for _, c, _ in cells], ignore_index=True)
        checks = [row for _, _, rows in cells for row in rows]
        if checks:
            result.tables["fernandez"] = pd.DataFrame(checks)
        result.documents["verdicts"] = {
            "source": section.source.value,
            "verdicts": [v.to_dict() for v, _, _ in cells],
        }
        return result
