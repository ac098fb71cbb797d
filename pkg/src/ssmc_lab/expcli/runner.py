"""
Analysis registry and artifact writer.

Tables are written as CSV in full-precision scientific notation, documents
as JSON with sorted keys, so that a rerun of the same config reproduces the
numeric artifacts byte for byte. The manifest lists every artifact with its
sha256 next to the config hash, seed, package versions and wall time.
"""

import hashlib
import json
import logging
import math
import time
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd
import scipy

import ssmc_lab
from ssmc_lab.config import settings
from ssmc_lab.errors import ConfigError
from ssmc_lab.expcli.analyses import (
    AnalysisResult,
    BaseAnalysis,
    DominanceAnalysis,
    MetastabilityAnalysis,
    OccupationAnalysis,
    RunContext,
    SimulateAnalysis,
    SweepAnalysis,
    ValidateAnalysis,
)
from ssmc_lab.expcli.schema import ExperimentConfig

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.16e"
MANIFEST_NAME = "manifest.json"


# =============================================================================
# ANALYSES
# =============================================================================

# Registry of analyses by config kind
ANALYSES = {
    "simulate": SimulateAnalysis,
    "occupation": OccupationAnalysis,
    "dominance": DominanceAnalysis,
    "metastability": MetastabilityAnalysis,
    "validate": ValidateAnalysis,
    "sweep": SweepAnalysis,
}


def get_analysis(kind: str) -> BaseAnalysis:
    """Get the analysis registered for a config kind."""
    analysis_class = ANALYSES.get(kind)
    if analysis_class is None:
        raise ConfigError(f"Unknown analysis: {kind}")
    return analysis_class()


# =============================================================================
# ARTIFACTS
# =============================================================================

def _clean(value: Any) -> Any:
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats spelled out."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_table(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")


def write_document(document: Dict[str, Any], path: Path) -> None:
    path.write_text(json.dumps(_clean(document), sort_keys=True, indent=2) + "\n", encoding="utf-8")


def versions() -> Dict[str, str]:
    return {
        "ssmc_lab": ssmc_lab.__version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
    }


def write_artifacts(result: AnalysisResult, ctx: RunContext, wall_time: float) -> Path:
    """Write tables, documents and the manifest; return the manifest path."""
    out_dir = ctx.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, frame in sorted(result.tables.items()):
        path = out_dir / f"{name}.csv"
        write_table(frame, path)
        files[path.name] = _sha256(path)
    for name, document in sorted(result.documents.items()):
        path = out_dir / f"{name}.json"
        write_document(document, path)
        files[path.name] = _sha256(path)

    manifest = {
        "analysis": result.analysis,
        "config_sha256": ctx.config.digest(),
        "seed": ctx.seed,
        "versions": versions(),
        "wall_time_seconds": wall_time,
        "files": files,
    }
    manifest_path = out_dir / MANIFEST_NAME
    write_document(manifest, manifest_path)
    logger.info(f"Wrote {len(files)} artifacts to {out_dir}")
    return manifest_path


# =============================================================================
# EXECUTION
# =============================================================================

def resolve_context(
    config: ExperimentConfig,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    out_dir: Optional[Path] = None,
) -> RunContext:
    """CLI overrides first, then the config's run section, then settings."""
    seed = config.run.seed if seed is None else seed
    threads = threads or config.run.threads or settings.threads
    if out_dir is None:
        out_dir = config.run.out_dir or settings.out_dir / f"{config.analysis.kind}-{config.digest()[:12]}"
    return RunContext(config=config, seed=seed, threads=threads, out_dir=Path(out_dir))


def execute(
    config: ExperimentConfig,
    kind: Optional[str] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    out_dir: Optional[Path] = None,
) -> Tuple[AnalysisResult, Path]:
    """
    Run one analysis and write its artifacts.

    Args:
        config: Validated experiment config
        kind: Analysis to run; defaults to the config's own. Only validate
            may differ from the config's analysis kind.
        seed: Master seed override
        threads: Worker processes override
        out_dir: Output directory override

    Returns:
        (result, manifest path)

    Raises:
        ConfigError: Subcommand does not match the config, or validation failed
    """
    kind = kind or config.analysis.kind
    if kind != config.analysis.kind and kind != "validate":
        raise ConfigError(f"config describes a {config.analysis.kind} analysis, not {kind}")

    ctx = resolve_context(config, seed, threads, out_dir)
    analysis = get_analysis(kind)
    started = time.perf_counter()
    result = analysis.run(ctx)
    manifest_path = write_artifacts(result, ctx, time.perf_counter() - started)
    if result.error is not None:
        raise result.error
    return result, manifest_path
