"""Raw SSMC trajectories or renewal records, one block per replica."""

import logging
from typing import Any, Dict, Tuple

import numpy as np
import pandas as pd

from ssmc_lab.core import replica_seeds, simulate_steps, simulate_switches
from ssmc_lab.expcli.analyses.base import AnalysisResult, BaseAnalysis, RunContext, map_cells
from ssmc_lab.expcli.schema import MuSection
from ssmc_lab.sserw import SserwModel

logger = logging.getLogger(__name__)


def _simulate_replica(job: Tuple[int, str, int, Dict[str, Any], str, int, int]) -> pd.DataFrame:
    replica, kind, n, mu_dump, mode, count, seed = job
    model = SserwModel(kind, n)
    spec = model.chain_spec()
    mu = MuSection.model_validate(mu_dump).build()
    labels = np.asarray(spec.labels)

    if mode == "switches":
        records = simulate_switches(spec, mu, count, seed)
        return pd.DataFrame({
            "replica": replica,
            "cycle": np.arange(1, len(records) + 1),
            "theta": [r.theta for r in records],
            "tau": [r.tau for r in records],
            "exit_position": [int(labels[r.exit_state]) for r in records],
        })

    trajectory = simulate_steps(spec, mu, count, seed)
    return pd.DataFrame({
        "replica": replica,
        "step": np.arange(trajectory.n_steps + 1),
        "position": labels[trajectory.locations],
        "theta": trajectory.states,
    })


class SimulateAnalysis(BaseAnalysis):
    """Simulate cycles (or steps) for every replica under spawned seeds."""

    @property
    def name(self) -> str:
        return "simulate"

    def compute(self, ctx: RunContext) -> AnalysisResult:
        cfg = ctx.config
        section = cfg.analysis
        count = cfg.run.cycles if section.mode == "switches" else cfg.run.steps
        seeds = replica_seeds(ctx.seed, cfg.run.replicas)
        jobs = [
            (i, cfg.model.kind.value, cfg.model.sizes[0], cfg.mu.model_dump(mode="json"), section.mode, count, s)
            for i, s in enumerate(seeds)
        ]
        frames = map_cells(_simulate_replica, jobs, ctx.threads)
        table = pd.concat(frames, ignore_index=True)

        result = AnalysisResult(analysis=self.name)
        result.tables[section.mode] = table
        result.summary.append(("replicas", str(cfg.run.replicas)))
        if section.mode == "switches":
            result.summary.append(("cycles per replica", str(count)))
            result.summary.append(("mean tau", f"{table['tau'].mean():.6g}"))
        else:
            result.summary.append(("steps per replica", str(count)))
        return result
