"""Experiment configuration: YAML validated into pydantic models with line-anchored errors."""

import hashlib
import json
import logging
from pathlib import Path
from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ssmc_lab.core import StateDistribution
from ssmc_lab.errors import ConfigError
from ssmc_lab.metastability import LimitThresholds, SampleSource
from ssmc_lab.sserw import ModelKind, SserwModel

logger = logging.getLogger(__name__)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


# =============================================================================
# MODEL AND MU
# =============================================================================

class ModelSection(_Section):
    kind: ModelKind
    n: Optional[int] = Field(default=None, ge=1, description="System size N")
    ladder: Optional[List[int]] = Field(default=None, description="Increasing N ladder")

    @model_validator(mode="after")
    def _check_sizes(self):
        if self.n is None and not self.ladder:
            raise ValueError("model needs n or ladder")
        if self.ladder is not None:
            if any(v < 1 for v in self.ladder) or any(b <= a for a, b in zip(self.ladder, self.ladder[1:])):
                raise ValueError("ladder must be strictly increasing positive integers")
        return self

    @property
    def sizes(self) -> List[int]:
        return list(self.ladder) if self.ladder else [self.n]

    def build(self, n: Optional[int] = None) -> SserwModel:
        return SserwModel(self.kind, n if n is not None else self.sizes[0])


class AtomSpec(_Section):
    theta: float = Field(ge=0.0, le=1.0)
    weight: float = Field(gt=0.0)


class DensitySpec(_Section):
    family: Literal["uniform", "beta"] = "uniform"
    lower: float = Field(default=0.0, ge=0.0, le=1.0)
    upper: float = Field(default=1.0, ge=0.0, le=1.0)
    alpha: float = Field(default=1.0, gt=0.0)
    beta: float = Field(default=1.0, gt=0.0)

    @model_validator(mode="after")
    def _check_bounds(self):
        if not self.lower < self.upper:
            raise ValueError("density needs lower < upper")
        return self


class MuSection(_Section):
    atoms: Optional[List[AtomSpec]] = None
    density: Optional[DensitySpec] = None

    @model_validator(mode="after")
    def _exactly_one(self):
        if (self.atoms is None) == (self.density is None):
            raise ValueError("mu needs exactly one of atoms or density")
        if self.atoms is not None:
            total = sum(a.weight for a in self.atoms)
            if not self.atoms or abs(total - 1.0) > 1e-12:
                raise ValueError(f"atom weights must sum to 1, got {total}")
        return self

    def build(self) -> StateDistribution:
        if self.atoms is not None:
            return StateDistribution.discrete([a.theta for a in self.atoms], [a.weight for a in self.atoms])
        d = self.density
        if d.family == "uniform":
            return StateDistribution.uniform(d.lower, d.upper)
        return StateDistribution.beta(d.alpha, d.beta, d.lower, d.upper)


# =============================================================================
# ANALYSES
# =============================================================================

class SimulateSection(_Section):
    kind: Literal["simulate"]
    mode: Literal["switches", "steps"] = "switches"


class OccupationSection(_Section):
    kind: Literal["occupation"]
    method: Literal["empirical", "renewal"] = "empirical"
    bins: int = Field(default=64, ge=1)


class DominanceSection(_Section):
    kind: Literal["dominance"]
    zero_factor: float = Field(default=0.1, gt=0.0, lt=1.0)
    stable_tolerance: float = Field(default=0.05, gt=0.0)
    grid_size: int = Field(default=201, ge=3)
    max_refinements: int = Field(default=3, ge=0)
    margin_factor: float = Field(default=3.0, gt=0.0)
    bins: int = Field(default=64, ge=1)


class MetastabilitySection(_Section):
    kind: Literal["metastability"]
    thetas: List[float] = Field(min_length=1)
    source: SampleSource = SampleSource.EXACT
    samples: int = Field(default=10_000, ge=1)
    ks_max: float = Field(default=0.1, gt=0.0, le=1.0)
    coverage_min: float = Field(default=0.95, gt=0.0, le=1.0)
    c1: float = Field(default=0.9, gt=0.0, lt=1.0)
    c2: float = Field(default=1.1, gt=1.0)
    eps: float = Field(default=0.5, gt=0.0, description="Exponent margin of the Fernandez threshold")

    @field_validator("thetas")
    @classmethod
    def _in_unit_interval(cls, value: List[float]) -> List[float]:
        if any(not 0.0 <= t <= 1.0 for t in value):
            raise ValueError("thetas must lie in [0, 1]")
        return value

    @property
    def thresholds(self) -> LimitThresholds:
        return LimitThresholds(self.ks_max, self.coverage_min, self.c1, self.c2)


class ValidateSection(_Section):
    kind: Literal["validate"]
    thetas: List[float] = Field(default_factory=lambda: [0.5], min_length=1)


class SweepSection(_Section):
    kind: Literal["sweep"]
    thetas: List[float] = Field(min_length=1)

    @field_validator("thetas")
    @classmethod
    def _in_unit_interval(cls, value: List[float]) -> List[float]:
        if any(not 0.0 <= t <= 1.0 for t in value):
            raise ValueError("thetas must lie in [0, 1]")
        return value


AnalysisSection = Annotated[
    Union[
        SimulateSection,
        OccupationSection,
        DominanceSection,
        MetastabilitySection,
        ValidateSection,
        SweepSection,
    ],
    Field(discriminator="kind"),
]

ANALYSES_NEEDING_MU = ("simulate", "occupation", "dominance")


# =============================================================================
# RUN AND CHAIN OVERRIDE
# =============================================================================

class RunSection(_Section):
    seed: int = Field(default=0, ge=0)
    replicas: int = Field(default=1, ge=1)
    steps: int = Field(default=1_000_000, gt=0, description="Steps per replica (occupation, simulate)")
    cycles: int = Field(default=10_000, gt=0, description="Cycles per replica (renewal, simulate)")
    out_dir: Optional[Path] = None
    threads: Optional[int] = Field(default=None, ge=1)


class ChainOverride(_Section):
    """Origin, targets and rows in position labels, replacing the model's own."""
    origin: int
    targets: List[int] = Field(min_length=1)
    rows: Dict[int, List[float]] = Field(default_factory=dict)


class ExperimentConfig(_Section):
    model: ModelSection
    mu: Optional[MuSection] = None
    analysis: AnalysisSection
    run: RunSection = Field(default_factory=RunSection)
    chain: Optional[ChainOverride] = None

    @model_validator(mode="after")
    def _mu_when_needed(self):
        if self.mu is None and self.analysis.kind in ANALYSES_NEEDING_MU:
            raise ValueError(f"analysis {self.analysis.kind} needs a mu section")
        return self

    def digest(self) -> str:
        """sha256 of the canonical JSON form of the validated config."""
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# =============================================================================
# LOADING
# =============================================================================

def _anchor(root: Optional[yaml.Node], loc: Tuple) -> Tuple[Optional[int], Optional[int]]:
    """1-based (line, column) of the deepest YAML node along a pydantic error location."""
    node = root
    best = node
    for part in loc:
        if isinstance(node, yaml.MappingNode):
            match = None
            for key_node, value_node in node.value:
                if key_node.value == str(part):
                    match = (key_node, value_node)
                    break
            if match is None:
                continue
            best, node = match
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            node = node.value[part]
            best = node
        else:
            continue
    if best is None:
        return None, None
    return best.start_mark.line + 1, best.start_mark.column + 1


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """
    Validate YAML text into an ExperimentConfig.

    Raises:
        ConfigError: YAML syntax or schema violation, anchored to a line when possible
    """
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        line = mark.line + 1 if mark else None
        column = mark.column + 1 if mark else None
        raise ConfigError(f"{source}: {exc.problem}", line, column) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping", 1, 1)

    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = tuple(first["loc"])
        line, column = _anchor(root, loc)
        where = ".".join(str(p) for p in loc) or "<root>"
        raise ConfigError(f"{source}: {where}: {first['msg']}", line, column) from exc


def load_config(path: Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    config = parse_config(path.read_text(encoding="utf-8"), source=str(path))
    logger.info(f"Loaded {config.analysis.kind} config from {path}")
    return config
