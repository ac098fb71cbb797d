"""
Base Analysis - Abstract interface for every CLI analysis.

All analyses share:
1. RunContext carrying the validated config, seed, worker count and output directory
2. map_cells() for seeded, order-preserving parallel execution

Each analysis implements:
1. compute() - Produce tables, documents and summary rows
"""

import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import pandas as pd

from ssmc_lab.errors import SsmcError
from ssmc_lab.expcli.schema import ExperimentConfig

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


@dataclass
class RunContext:
    """Resolved run parameters after CLI overrides."""
    config: ExperimentConfig
    seed: int
    threads: int
    out_dir: Path


@dataclass
class AnalysisResult:
    """Result of one analysis before it is written to disk."""
    analysis: str
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    documents: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    summary: List[Tuple[str, str]] = field(default_factory=list)
    error: Optional[SsmcError] = None  # raised after artifacts are written


def map_cells(fn: Callable[[T], R], jobs: Sequence[T], threads: int) -> List[R]:
    """
    Run fn over jobs, in a process pool when threads > 1.

    Results come back in job order whatever the worker count; fn must be a
    module-level function and jobs picklable.
    """
    jobs = list(jobs)
    if threads <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with Pool(processes=min(threads, len(jobs))) as pool:
        return pool.map(fn, jobs)


class BaseAnalysis(ABC):
    """
    Abstract base class for all analyses.

    Implements the Template Method pattern:
    - compute() is abstract - each analysis implements its own computation
    - run() is concrete - shared timing and logging
    """

    @property
    @abstractmethod
    def name(self) -> str:
        """Return the analysis identifier (e.g., 'occupation', 'sweep')."""
        pass

    @abstractmethod
    def compute(self, ctx: RunContext) -> AnalysisResult:
        """
        Run the analysis.

        Args:
            ctx: Resolved run context

        Returns:
            AnalysisResult with tables keyed by file stem
        """
        pass

    def run(self, ctx: RunContext) -> AnalysisResult:
        logger.info(f"Running {self.name} on {ctx.config.model.kind.value} (seed={ctx.seed}, threads={ctx.threads})")
        started = time.perf_counter()
        result = self.compute(ctx)
        logger.info(f"Finished {self.name} in {time.perf_counter() - started:.2f}s")
        return result
