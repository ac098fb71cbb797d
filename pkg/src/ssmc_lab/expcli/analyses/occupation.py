"""Empirical (or renewal) occupation measures against the limiting measure at fixed N."""

import logging
from typing import Any, Dict, Tuple

import numpy as np
import pandas as pd

from ssmc_lab.core import replica_seeds, simulate_steps, simulate_switches
from ssmc_lab.expcli.analyses.base import AnalysisResult, BaseAnalysis, RunContext, map_cells
from ssmc_lab.expcli.schema import MuSection
from ssmc_lab.occupation import (
    Binning,
    OccupationMeasure,
    empirical_occupation,
    limiting_occupation,
    renewal_occupation,
    tv_distance,
)
from ssmc_lab.sserw import SserwModel, log_mean_time

logger = logging.getLogger(__name__)


def _occupation_replica(job: Tuple[str, int, Dict[str, Any], str, int, int, int, int]) -> np.ndarray:
    kind, n, mu_dump, method, steps, cycles, bins, seed = job
    spec = SserwModel(kind, n).chain_spec()
    mu = MuSection.model_validate(mu_dump).build()
    binning = Binning.for_distribution(mu, bins)
    if method == "empirical":
        measure = empirical_occupation(simulate_steps(spec, mu, steps, seed), binning)
    else:
        measure = renewal_occupation(simulate_switches(spec, mu, cycles, seed), steps, binning).to_measure()
    return measure.masses


class OccupationAnalysis(BaseAnalysis):
    """p_n per replica next to P_N = E_mu[1_A m_N] / E_mu[m_N]."""

    @property
    def name(self) -> str:
        return "occupation"

    def compute(self, ctx: RunContext) -> AnalysisResult:
        cfg = ctx.config
        section = cfg.analysis
        n = cfg.model.sizes[0]
        model = SserwModel(cfg.model.kind, n)
        mu = cfg.mu.build()
        binning = Binning.for_distribution(mu, section.bins)

        limit = limiting_occupation(
            mu, lambda th: log_mean_time(model, th), binning, log_scale=True, size=n
        )
        seeds = replica_seeds(ctx.seed, cfg.run.replicas)
        jobs = [
            (cfg.model.kind.value, n, cfg.mu.model_dump(mode="json"), section.method,
             cfg.run.steps, cfg.run.cycles, section.bins, s)
            for s in seeds
        ]
        masses = map_cells(_occupation_replica, jobs, ctx.threads)

        base = limit.to_frame().rename(columns={"mass": "limit_mass"})
        frames = []
        distances = []
        for replica, m in enumerate(masses):
            frame = base.copy()
            frame.insert(0, "replica", replica)
            frame["mass"] = m
            frames.append(frame)
            empirical = OccupationMeasure(binning, m, limit.kind, cfg.run.steps)
            distances.append(tv_distance(empirical, limit))
        table = pd.concat(frames, ignore_index=True)

        result = AnalysisResult(analysis=self.name)
        result.tables["occupation"] = table
        result.documents["summary"] = {
            "n_steps": cfg.run.steps,
            "method": section.method,
            "system_size": n,
            "tv_distance": distances,
            "mean_tv_distance": float(np.mean(distances)),
            "limit_points": binning.points.tolist(),
            "limit_masses": limit.masses.tolist(),
        }
        result.summary.append(("replicas", str(len(masses))))
        result.summary.append(("mean TV to limit", f"{np.mean(distances):.4g}"))
        if binning.is_atomic:
            for atom, lim, emp in zip(binning.atoms, limit.masses, np.mean(masses, axis=0)):
                result.summary.append((f"mass at {atom:g}", f"{emp:.4f} (limit {lim:.4f})"))
        return result
