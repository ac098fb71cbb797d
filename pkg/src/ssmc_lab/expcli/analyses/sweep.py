"""theta grid x N ladder of closed-form m_N(theta) against the banded oracle."""

import logging
import math
from typing import List, Tuple

import numpy as np
import pandas as pd

from ssmc_lab.errors import DomainError
from ssmc_lab.expcli.analyses.base import AnalysisResult, BaseAnalysis, RunContext, map_cells
from ssmc_lab.sserw import SserwModel, log_mean_time, m_exact

logger = logging.getLogger(__name__)


def _sweep_cell(job: Tuple[str, int, Tuple[float, ...]]) -> List[dict]:
    kind, n, thetas = job
    model = SserwModel(kind, n)
    rows = []
    for theta in thetas:
        row = {"n": n, "theta": theta, "log_m_closed": math.nan, "m_closed": math.nan,
               "m_exact": math.nan, "rel_error": math.nan, "h_n": math.nan, "domain_error": ""}
        try:
            log_m = float(log_mean_time(model, theta)[0])
        except DomainError as exc:
            row["domain_error"] = str(exc)
            rows.append(row)
            continue
        row["log_m_closed"] = log_m
        row["h_n"] = log_m / n
        if log_m < 709.0:
            row["m_closed"] = math.exp(log_m)
            oracle = m_exact(model, theta)
            row["m_exact"] = oracle
            row["rel_error"] = abs(row["m_closed"] - oracle) / oracle
        rows.append(row)
    return rows


class SweepAnalysis(BaseAnalysis):

    @property
    def name(self) -> str:
        return "sweep"

    def compute(self, ctx: RunContext) -> AnalysisResult:
        cfg = ctx.config
        thetas = tuple(sorted(cfg.analysis.thetas))
        jobs = [(cfg.model.kind.value, n, thetas) for n in cfg.model.sizes]
        cells = map_cells(_sweep_cell, jobs, ctx.threads)
        table = pd.DataFrame([row for rows in cells for row in rows])
        table = table.sort_values(["n", "theta"], kind="stable").reset_index(drop=True)

        max_error = float(np.nanmax(table["rel_error"])) if table["rel_error"].notna().any() else math.nan
        result = AnalysisResult(analysis=self.name)
        result.tables["sweep"] = table
        result.documents["summary"] = {
            "rows": int(len(table)),
            "max_rel_error": max_error,
            "domain_errors": int((table["domain_error"] != "").sum()),
        }
        result.summary.append(("cells", str(len(table))))
        result.summary.append(("max relative error", f"{max_error:.3e}"))
        return result
