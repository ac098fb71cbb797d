"""
Limit laws of the scaled switching time tau_N / m_N(theta).

A walk is metastable when the scaled time approaches Exp(1) and shows
cut-off when it concentrates around 1. Samples come either from renewal-cycle
Monte Carlo under mu = delta_theta or from the exact survival curve of the
absorbed chain; the exact path is the only feasible one once m_N grows
exponentially in N.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from ssmc_lab.config import settings
from ssmc_lab.core import StateDistribution, replica_seeds, simulate_switches
from ssmc_lab.errors import BudgetExceededError, DomainError, PreconditionError
from ssmc_lab.hitting import DEFAULT_HORIZON_MEANS, HittingDistribution, hitting_distribution, min_hitting_survival
from ssmc_lab.sserw import ModelKind, SserwModel, m_closed, m_exact

logger = logging.getLogger(__name__)

MIN_MC_SAMPLES = 100
MC_CYCLE_GUARD_MEANS = 1000


class SampleSource(str, Enum):
    MONTE_CARLO = "monte_carlo"
    EXACT = "exact"


class LimitKind(str, Enum):
    EXP_ONE = "ExpOne"
    CUT_OFF = "CutOff"
    NEITHER = "Neither"


@dataclass(frozen=True)
class LimitThresholds:
    """Finite-N proxies for the two limit laws."""
    ks_max: float = 0.1
    coverage_min: float = 0.95
    c1: float = 0.9
    c2: float = 1.1


@dataclass(frozen=True)
class ScaledTimeSample:
    """
    tau_N / m_N(theta) for one walk and state.

    Monte Carlo samples carry values; exact samples carry the survival curve
    of tau_N and report its truncated mass.
    """
    kind: ModelKind
    theta: float
    n: int
    source: SampleSource
    mean: float
    values: Optional[np.ndarray] = None
    distribution: Optional[HittingDistribution] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.source is SampleSource.MONTE_CARLO:
            if self.values is None or np.any(self.values <= 0):
                raise PreconditionError("Monte Carlo scaled times must be positive")
        elif self.distribution is None:
            raise PreconditionError("exact sample needs a survival curve")

    @property
    def size(self) -> Optional[int]:
        return None if self.values is None else int(self.values.size)

    @property
    def truncated_mass(self) -> float:
        return 0.0 if self.distribution is None else self.distribution.truncated_mass

    def survival(self, t) -> np.ndarray:
        """P(tau_N / m_N > t)."""
        t = np.asarray(t, dtype=float)
        if self.values is not None:
            ordered = np.sort(self.values)
            return 1.0 - np.searchsorted(ordered, t, side="right") / ordered.size
        return self.distribution.survival_at(t * self.mean)

    def std(self) -> float:
        if self.values is not None:
            return float(np.std(self.values, ddof=1))
        dist = self.distribution
        if dist.stride != 1:
            raise PreconditionError("standard deviation needs a unit-stride survival curve")
        t = dist.times[:-1].astype(float)
        s = dist.survival[:-1]
        first = math.fsum(s.tolist())
        second = math.fsum(((2.0 * t + 1.0) * s).tolist())
        return math.sqrt(max(second - first * first, 0.0)) / self.mean


def _simulate_cycle_lengths(model: SserwModel, theta: float, k: int, seed: int, mean: float) -> np.ndarray:
    """Cycle lengths of k renewal cycles under mu = delta_theta, one seeded stream."""
    max_tau = int(math.ceil(MC_CYCLE_GUARD_MEANS * mean))
    records = simulate_switches(model.chain_spec(), StateDistribution.dirac(theta), k, seed, max_tau=max_tau)
    return np.fromiter((r.tau for r in records), dtype=np.int64, count=k)


def sample_scaled_times(
    model: SserwModel,
    theta: float,
    k: int = 10_000,
    seed: int = 0,
    source: SampleSource = SampleSource.MONTE_CARLO,
    budget: Optional[float] = None,
    step_limit: Optional[int] = None,
    grid_points: Optional[int] = None,
) -> ScaledTimeSample:
    """
    Scaled switching times under mu = delta_theta.

    Monte Carlo samples are the cycle lengths of core.simulate_switches with
    the given seed, so they match a direct simulation record for record.

    Raises:
        BudgetExceededError: Monte Carlo requested while m_N(theta) exceeds the
            budget, or a single cycle runs past MC_CYCLE_GUARD_MEANS means
    """
    source = SampleSource(source)
    budget = budget or settings.mc_budget_steps

    if source is SampleSource.EXACT:
        mean = m_exact(model, theta)
        horizon = int(math.ceil(DEFAULT_HORIZON_MEANS * mean))
        dist = hitting_distribution(
            model.chain_spec(), theta, horizon=horizon, step_limit=step_limit, grid_points=grid_points
        )
        logger.debug(f"Exact scaled-time law for {model.kind.value} N={model.n} theta={theta}: m={mean:.6g}")
        return ScaledTimeSample(model.kind, float(theta), model.n, source, mean, distribution=dist)

    mean = m_closed(model, theta).value
    if mean is None or mean > budget:
        raise BudgetExceededError(
            "mc_budget_steps",
            f"m_N({theta}) = exp({m_closed(model, theta).log_value:.4g}) exceeds the Monte Carlo "
            f"budget of {budget:.3g} steps per sample; use the exact source instead",
        )
    if k < 1:
        raise PreconditionError("need at least one sample")
    tau = _simulate_cycle_lengths(model, float(theta), k, seed, mean)
    logger.debug(f"Simulated {k} cycles of {model.kind.value} N={model.n} theta={theta}")
    return ScaledTimeSample(
        model.kind, float(theta), model.n, source, mean, values=tau / mean, seed=seed,
    )


def ks_to_exp1(sample: ScaledTimeSample) -> float:
    """
    sup_t |F(t) - (1 - e^{-t})| for the scaled time.

    For an exact sample every node of the survival curve is compared with
    the exponential CDF at the node and just before the next node; strided
    curves are bracketed cell by cell. The tail beyond the horizon and the
    truncated mass are added as an upper bound.
    """
    if sample.values is not None:
        if sample.values.size < MIN_MC_SAMPLES:
            raise PreconditionError(f"KS distance needs at least {MIN_MC_SAMPLES} samples")
        return float(stats.kstest(sample.values, "expon").statistic)

    dist = sample.distribution
    s_nodes = dist.times.astype(float) / sample.mean
    f_nodes = 1.0 - dist.survival
    g_left = -np.expm1(-s_nodes)
    g_next = -np.expm1(-(s_nodes + dist.stride / sample.mean))
    if dist.stride == 1:
        inner = np.maximum(np.abs(f_nodes - g_left), np.abs(f_nodes - g_next))
    else:
        f_upper = np.append(f_nodes[1:], 1.0)
        inner = np.maximum(f_upper - g_left, g_next - f_nodes)
    tail = max(dist.truncated_mass, math.exp(-s_nodes[-1]))
    distance = float(max(inner[:-1].max(initial=0.0), tail)) + dist.truncated_mass
    return min(distance, 1.0)


def cutoff_coverage(sample: ScaledTimeSample, c1: float = 0.9, c2: float = 1.1) -> float:
    """P(c1 < tau_N / m_N < c2)."""
    if not 0.0 < c1 < 1.0 < c2:
        raise PreconditionError(f"coverage window needs 0 < c1 < 1 < c2, got ({c1}, {c2})")
    if sample.values is not None:
        v = sample.values
        return float(np.mean((v > c1) & (v < c2)))
    m = sample.mean
    above_lower = sample.distribution.survival_at(math.floor(c1 * m))
    at_least_upper = sample.distribution.survival_at(math.ceil(c2 * m) - 1)
    return float(np.clip(above_lower - at_least_upper, 0.0, 1.0))


def survival_curve(sample: ScaledTimeSample, points: int = 512) -> pd.DataFrame:
    """Rows (t, empirical_survival, exp_survival) ready for CSV output."""
    if sample.values is not None:
        t = np.linspace(0.0, float(sample.values.max()), points)
    else:
        s_nodes = sample.distribution.times / sample.mean
        idx = np.unique(np.linspace(0, s_nodes.size - 1, points).astype(np.int64))
        t = s_nodes[idx].astype(float)
    return pd.DataFrame({
        "t": t,
        "empirical_survival": sample.survival(t),
        "exp_survival": np.exp(-t),
    })


# =============================================================================
# FERNANDEZ CRITERION
# =============================================================================

@dataclass(frozen=True)
class FernandezCheck:
    """sup over starts of P(min(tau_N, tau_origin) > R), and R / m_N(theta)."""
    kind: ModelKind
    theta: float
    n: int
    threshold: float
    sup_survival: float
    ratio: float
    bound: Optional[float] = None

    @property
    def within_bound(self) -> Optional[bool]:
        return None if self.bound is None else self.sup_survival <= self.bound


def proof_threshold(model: SserwModel, theta: float, eps: float = 0.5) -> Tuple[float, float]:
    """
    (R_N, r_N) with sup-survival at R_N at most r_N, from Markov's inequality.

    Defined for the single well below 1/2 and the alternating wells off 1/2.
    """
    theta = float(theta)
    if eps <= 0:
        raise PreconditionError("eps must be positive")
    if model.kind is ModelKind.SINGLE_WELL and 0.0 < theta < 0.5:
        if model.n < 2:
            raise DomainError("single-well threshold needs N >= 2")
        base = (model.n - 1) / (1.0 - 2.0 * theta)
    elif model.kind is ModelKind.ALTERNATING_WELLS and 0.0 < theta < 1.0 and theta != 0.5:
        base = model.n / abs(2.0 * theta - 1.0)
    else:
        raise DomainError(f"no metastability threshold for {model.kind.value} at theta={theta}")
    return base ** (1.0 + eps), base ** (-eps)


def fernandez_check(model: SserwModel, theta: float, threshold: float, bound: Optional[float] = None) -> FernandezCheck:
    """Exact sup-over-starts survival at R with the origin added to the absorbers."""
    if threshold < 1:
        raise PreconditionError("threshold R must be at least 1")
    spec = model.chain_spec()
    curves = min_hitting_survival(spec, theta, [spec.origin], horizon=threshold)
    sup = curves.sup_at(int(math.floor(threshold)))
    ratio = threshold / m_exact(model, theta)
    logger.debug(f"Fernandez check {model.kind.value} N={model.n} theta={theta}: sup={sup:.4g} R/m={ratio:.4g}")
    return FernandezCheck(model.kind, float(theta), model.n, float(threshold), sup, ratio, bound)


# =============================================================================
# VERDICTS
# =============================================================================

@dataclass
class LimitVerdict:
    kind: LimitKind
    theta: float
    ladder: Tuple[int, ...]
    ks: List[float]
    coverage: List[float]
    c1: float
    c2: float
    truncated_mass: List[float] = field(default_factory=list)

    @property
    def ks_distance(self) -> float:
        return self.ks[-1]

    @property
    def final_coverage(self) -> float:
        return self.coverage[-1]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "n": list(self.ladder),
            "theta": self.theta,
            "ks": self.ks,
            "coverage": self.coverage,
            "truncated_mass": self.truncated_mass or [0.0] * len(self.ladder),
        })

    def to_dict(self) -> Dict[str, Any]:
        return {
            "verdict": self.kind.value,
            "theta": self.theta,
            "ladder": list(self.ladder),
            "ks": list(self.ks),
            "coverage": list(self.coverage),
            "c1": self.c1,
            "c2": self.c2,
        }


def _strictly(values: Sequence[float], increasing: bool) -> bool:
    steps = np.diff(np.asarray(values, dtype=float))
    return bool(np.all(steps > 0) if increasing else np.all(steps < 0))


def classify_samples(samples: Sequence[ScaledTimeSample], thresholds: LimitThresholds = LimitThresholds()) -> LimitVerdict:
    """Verdict from samples ordered along an increasing N ladder."""
    if len(samples) < 2:
        raise PreconditionError("classification needs at least two ladder entries")
    ks = [ks_to_exp1(s) for s in samples]
    coverage = [cutoff_coverage(s, thresholds.c1, thresholds.c2) for s in samples]
    if _strictly(ks, increasing=False) and ks[-1] < thresholds.ks_max:
        kind = LimitKind.EXP_ONE
    elif _strictly(coverage, increasing=True) and coverage[-1] > thresholds.coverage_min:
        kind = LimitKind.CUT_OFF
    else:
        kind = LimitKind.NEITHER
    theta = samples[0].theta
    logger.info(f"theta={theta}: {kind.value} (ks={ks[-1]:.4g}, coverage={coverage[-1]:.4g})")
    return LimitVerdict(
        kind=kind,
        theta=theta,
        ladder=tuple(s.n for s in samples),
        ks=ks,
        coverage=coverage,
        c1=thresholds.c1,
        c2=thresholds.c2,
        truncated_mass=[s.truncated_mass for s in samples],
    )


def classify_limit(
    kind: ModelKind,
    theta: float,
    ladder: Sequence[int],
    source: SampleSource = SampleSource.EXACT,
    k: int = 10_000,
    seed: int = 0,
    thresholds: LimitThresholds = LimitThresholds(),
) -> LimitVerdict:
    """Sample every ladder entry (Monte Carlo seeds spawned from seed) and classify."""
    seeds = replica_seeds(seed, len(ladder))
    samples = [
        sample_scaled_times(SserwModel(kind, n), theta, k=k, seed=s, source=source)
        for n, s in zip(ladder, seeds)
    ]
    return classify_samples(samples, thresholds)
