"""Definitional checks of the chain built from a config."""

import logging
from functools import partial
from typing import Dict, List

import numpy as np
import pandas as pd

from ssmc_lab.core import ChainSpec, TransitionFamily, validate
from ssmc_lab.errors import ChainSpecError, ConfigError
from ssmc_lab.expcli.analyses.base import AnalysisResult, BaseAnalysis, RunContext
from ssmc_lab.expcli.schema import ChainOverride, ExperimentConfig

logger = logging.getLogger(__name__)


def _override_rows(base: TransitionFamily, rows: Dict[int, np.ndarray], theta: float) -> np.ndarray:
    q = np.array(base(theta), dtype=float)
    for index, row in rows.items():
        q[index] = row
    return q


def apply_override(spec: ChainSpec, override: ChainOverride) -> ChainSpec:
    """Spec with origin, targets and rows given in position labels."""
    try:
        rows = {}
        for label, values in override.rows.items():
            if len(values) != spec.n_states:
                raise ConfigError(f"chain.rows.{label}: expected {spec.n_states} entries, got {len(values)}")
            rows[spec.index_of(label)] = np.asarray(values, dtype=float)
        return ChainSpec(
            n_states=spec.n_states,
            origin=spec.index_of(override.origin),
            targets=frozenset(spec.index_of(t) for t in override.targets),
            transition_family=partial(_override_rows, spec.transition_family, rows) if rows else spec.transition_family,
            param_space=spec.param_space,
            labels=spec.labels,
            name=f"{spec.name} (override)",
        )
    except ChainSpecError as exc:
        raise ConfigError(f"chain: {exc}") from exc


def default_thetas(config: ExperimentConfig) -> List[float]:
    if config.analysis.kind == "validate":
        return list(config.analysis.thetas)
    if config.mu is not None and config.mu.atoms is not None:
        return [a.theta for a in config.mu.atoms]
    if config.mu is not None:
        return [config.mu.density.lower, 0.5 * (config.mu.density.lower + config.mu.density.upper), config.mu.density.upper]
    return [0.5]


class ValidateAnalysis(BaseAnalysis):

    @property
    def name(self) -> str:
        return "validate"

    def compute(self, ctx: RunContext) -> AnalysisResult:
        cfg = ctx.config
        result = AnalysisResult(analysis=self.name)
        frames = []
        for n in cfg.model.sizes:
            spec = cfg.model.build(n).chain_spec()
            if cfg.chain is not None:
                spec = apply_override(spec, cfg.chain)
            report = validate(spec, default_thetas(cfg))
            table = pd.DataFrame(report.rows(), columns=["theta", "reason"])
            table.insert(0, "n", n)
            frames.append(table)
            result.summary.append((spec.name, "valid" if report.valid else "; ".join(report.reasons)))
            if not report.valid and result.error is None:
                result.error = ConfigError(f"{spec.name} invalid: {'; '.join(report.reasons)}")
        result.tables["validation"] = pd.concat(frames, ignore_index=True)
        result.documents["validation"] = {
            "valid": result.error is None,
            "reasons": sorted(set(result.tables["validation"]["reason"].tolist())),
        }
        return result
