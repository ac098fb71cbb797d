"""
ssmc-lab analyses

Each analysis turns a validated experiment config into tables and JSON
documents; the runner writes them and the manifest.

Available analyses:
- SimulateAnalysis: raw renewal records or step trajectories
- OccupationAnalysis: empirical occupation against the fixed-N limit
- DominanceAnalysis: dominance verdict along an N ladder
- MetastabilityAnalysis: Exp(1) / cut-off verdicts and the Fernandez check
- ValidateAnalysis: definitional checks of the chain
- SweepAnalysis: closed forms against the linear-solve oracle
"""

from .base import AnalysisResult, BaseAnalysis, RunContext, map_cells
from .dominance import DominanceAnalysis
from .metastability import MetastabilityAnalysis
from .occupation import OccupationAnalysis
from .simulate import SimulateAnalysis
from .sweep import SweepAnalysis
from .validate import ValidateAnalysis

__all__ = [
    "AnalysisResult",
    "BaseAnalysis",
    "RunContext",
    "map_cells",
    "DominanceAnalysis",
    "MetastabilityAnalysis",
    "OccupationAnalysis",
    "SimulateAnalysis",
    "SweepAnalysis",
    "ValidateAnalysis",
]
