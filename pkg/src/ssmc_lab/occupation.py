"""
Occupation measures of the state process.

Empirical measures count eta_k over k = 1..n. Renewal estimates rebuild the
occupation from switch records in movement-step time, with the partial last
cycle reported as a remainder. Limiting measures weight mu by m(theta), in
log space so that exponentially large expectations stay representable.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import optimize, stats
from scipy.special import logsumexp

from ssmc_lab.core import StateDistribution, SwitchRecord, Trajectory
from ssmc_lab.errors import (
    BinningError,
    BudgetExceededError,
    DivergentNormalizerError,
    NumericalError,
    PreconditionError,
)
from ssmc_lab.quadrature import DEFAULT_EPSREL, grid_shift, integrate_pieces

logger = logging.getLogger(__name__)

DEFAULT_BINS = 64
MASS_TOL = 1e-9
ATOM_TOL = 1e-12


# =============================================================================
# BINNING
# =============================================================================

@dataclass(frozen=True, eq=False)
class Binning:
    """Either the atom list of a discrete mu or uniform edges over [a*, b*]."""
    atoms: Optional[np.ndarray] = None
    edges: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.atoms is None) == (self.edges is None):
            raise PreconditionError("binning needs exactly one of atoms or edges")
        if self.atoms is not None:
            atoms = np.asarray(self.atoms, dtype=float)
            if np.any(np.diff(atoms) <= 0):
                raise PreconditionError("binning atoms must be sorted and distinct")
            object.__setattr__(self, "atoms", atoms)
        else:
            edges = np.asarray(self.edges, dtype=float)
            if edges.size < 2 or np.any(np.diff(edges) <= 0):
                raise PreconditionError("binning edges must be increasing")
            object.__setattr__(self, "edges", edges)

    @classmethod
    def for_atoms(cls, atoms: Sequence[float]) -> "Binning":
        return cls(atoms=np.asarray(atoms, dtype=float))

    @classmethod
    def uniform(cls, lower: float, upper: float, bins: int = DEFAULT_BINS) -> "Binning":
        return cls(edges=np.linspace(lower, upper, bins + 1))

    @classmethod
    def for_distribution(cls, mu: StateDistribution, bins: int = DEFAULT_BINS) -> "Binning":
        if mu.is_discrete:
            return cls.for_atoms(mu.atoms)
        lower, upper = mu.support_bounds
        return cls.uniform(lower, upper, bins)

    @property
    def is_atomic(self) -> bool:
        return self.atoms is not None

    @property
    def n_bins(self) -> int:
        return self.atoms.size if self.is_atomic else self.edges.size - 1

    @property
    def points(self) -> np.ndarray:
        """Atoms, or bin midpoints."""
        if self.is_atomic:
            return self.atoms.copy()
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def same_as(self, other: "Binning") -> bool:
        if self.is_atomic != other.is_atomic:
            return False
        mine = self.atoms if self.is_atomic else self.edges
        theirs = other.atoms if other.is_atomic else other.edges
        return mine.shape == theirs.shape and bool(np.allclose(mine, theirs, rtol=0.0, atol=ATOM_TOL))

    def locate(self, values: np.ndarray) -> np.ndarray:
        """Bin index of each value; raises BinningError for values outside the binning."""
        values = np.asarray(values, dtype=float)
        if self.is_atomic:
            idx = np.clip(np.searchsorted(self.atoms, values), 0, self.atoms.size - 1)
            lower = np.clip(idx - 1, 0, self.atoms.size - 1)
            nearest = np.where(
                np.abs(self.atoms[lower] - values) < np.abs(self.atoms[idx] - values), lower, idx
            )
            bad = np.abs(self.atoms[nearest] - values) > ATOM_TOL
        else:
            nearest = np.clip(np.searchsorted(self.edges, values, side="right") - 1, 0, self.n_bins - 1)
            bad = (values < self.edges[0] - ATOM_TOL) | (values > self.edges[-1] + ATOM_TOL)
        if np.any(bad):
            raise BinningError(f"state {values[bad][0]!r} outside the binning")
        return nearest


class MeasureKind(str, Enum):
    EMPIRICAL = "Empirical"
    LIMITING = "Limiting"
    ASYMPTOTIC = "Asymptotic"


@dataclass(frozen=True, eq=False)
class OccupationMeasure:
    """Masses on a binning, tagged Empirical(n), Limiting(N) or Asymptotic."""
    binning: Binning
    masses: np.ndarray
    kind: MeasureKind
    size: Optional[int] = None

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=float)
        if masses.shape != (self.binning.n_bins,):
            raise PreconditionError("one mass per bin required")
        if np.any(masses < 0) or abs(masses.sum() - 1.0) > MASS_TOL:
            raise NumericalError(f"occupation masses must be nonnegative and sum to 1 (sum={masses.sum()!r})")
        object.__setattr__(self, "masses", masses)

    def mass_at(self, atom: float) -> float:
        return float(self.masses[self.binning.locate([atom])[0]])

    def mass_between(self, lower: float, upper: float) -> float:
        """Total mass of bins lying inside [lower, upper]."""
        if self.binning.is_atomic:
            inside = (self.binning.atoms >= lower - ATOM_TOL) & (self.binning.atoms <= upper + ATOM_TOL)
        else:
            left, right = self.binning.edges[:-1], self.binning.edges[1:]
            inside = (left >= lower - ATOM_TOL) & (right <= upper + ATOM_TOL)
        return float(self.masses[inside].sum())

    def to_frame(self) -> pd.DataFrame:
        if self.binning.is_atomic:
            return pd.DataFrame({"atom": self.binning.atoms, "mass": self.masses})
        return pd.DataFrame({
            "bin_left": self.binning.edges[:-1],
            "bin_right": self.binning.edges[1:],
            "mass": self.masses,
        })


# =============================================================================
# EMPIRICAL AND RENEWAL ESTIMATES
# =============================================================================

def empirical_occupation(trajectory: Trajectory, binning: Binning) -> OccupationMeasure:
    """Fraction of k in 1..n with eta_k in each bin."""
    states = trajectory.states[1:]
    if states.size == 0:
        raise PreconditionError("trajectory has no steps")
    counts = np.bincount(binning.locate(states), minlength=binning.n_bins)
    return OccupationMeasure(
        binning=binning,
        masses=counts / states.size,
        kind=MeasureKind.EMPIRICAL,
        size=int(states.size),
    )


@dataclass(frozen=True, eq=False)
class RenewalEstimate:
    """
    Cycle-weighted masses up to M_n and the partial cycle left over.

    Cycle lengths are movement steps, so the restart step each later cycle
    spends at the origin is not counted; against a path from simulate_steps
    the estimate differs by at most M_n / n in total variation.
    weighted_masses alone and weighted_masses + remainder_mass bracket the
    renewal-time occupation bin by bin.
    """
    binning: Binning
    n: int
    cycle_count: int
    weighted_masses: np.ndarray
    remainder_mass: float
    remainder_bin: Optional[int]

    @property
    def lower_bound(self) -> np.ndarray:
        return self.weighted_masses.copy()

    @property
    def upper_bound(self) -> np.ndarray:
        return self.weighted_masses + self.remainder_mass

    def to_measure(self) -> OccupationMeasure:
        masses = self.weighted_masses.copy()
        if self.remainder_bin is not None:
            masses[self.remainder_bin] += self.remainder_mass
        return OccupationMeasure(self.binning, masses, MeasureKind.EMPIRICAL, self.n)


def renewal_occupation(records: Sequence[SwitchRecord], n: int, binning: Binning) -> RenewalEstimate:
    """
    Occupation over n steps rebuilt from switch records.

    Raises:
        BudgetExceededError: the records cover fewer than n steps
    """
    if n < 1:
        raise PreconditionError("n must be at least 1")
    taus = np.fromiter((r.tau for r in records), dtype=np.int64, count=len(records))
    ends = np.cumsum(taus)
    if ends.size == 0 or ends[-1] < n:
        covered = int(ends[-1]) if ends.size else 0
        raise BudgetExceededError("record budget", f"records cover {covered} steps, need {n}")

    cycle_count = int(np.searchsorted(ends, n, side="right"))
    thetas = np.fromiter((r.theta for r in records), dtype=float, count=len(records))
    bins = binning.locate(thetas[:cycle_count + 1])
    weighted = np.bincount(
        bins[:cycle_count], weights=taus[:cycle_count].astype(float), minlength=binning.n_bins
    ) / n
    consumed = int(ends[cycle_count - 1]) if cycle_count else 0
    remainder = (n - consumed) / n
    remainder_bin = int(bins[cycle_count]) if consumed < n else None
    return RenewalEstimate(
        binning=binning,
        n=n,
        cycle_count=cycle_count,
        weighted_masses=weighted,
        remainder_mass=remainder,
        remainder_bin=remainder_bin,
    )


# =============================================================================
# LIMITING MEASURES
# =============================================================================

def limiting_occupation(
    mu: StateDistribution,
    m_eval: Callable[[np.ndarray], np.ndarray],
    binning: Optional[Binning] = None,
    log_scale: bool = False,
    kind: MeasureKind = MeasureKind.LIMITING,
    size: Optional[int] = None,
    epsrel: float = DEFAULT_EPSREL,
) -> OccupationMeasure:
    """
    P(A) = E_mu[1_A m] / E_mu[m] on a binning.

    Args:
        mu: State distribution
        m_eval: theta -> m(theta), or log m(theta) when log_scale is set
        binning: Defaults to the atoms of mu or 64 bins over [a*, b*]
        log_scale: Interpret m_eval as returning log m
        kind: Tag of the resulting measure
        size: N for limiting measures

    Raises:
        DivergentNormalizerError: E_mu[m] is numerically infinite
    """
    binning = binning or Binning.for_distribution(mu)

    def log_m(theta: np.ndarray) -> np.ndarray:
        values = np.asarray(m_eval(theta), dtype=float)
        if log_scale:
            return values
        with np.errstate(divide="ignore"):
            return np.log(values)

    if mu.is_discrete:
        atoms = mu.atoms
        log_w = np.log(mu.weights) + log_m(atoms)
        if np.any(np.isposinf(log_w)) or np.any(np.isnan(log_w)):
            raise DivergentNormalizerError(
                "m is infinite on an atom of mu", atoms[~np.isfinite(log_w)].tolist()
            )
        weights = np.exp(log_w - logsumexp(log_w))
        masses = np.bincount(binning.locate(atoms), weights=weights, minlength=binning.n_bins)
        return OccupationMeasure(binning, masses / masses.sum(), kind, size)

    if binning.is_atomic:
        raise PreconditionError("continuous mu needs an interval binning")

    def log_integrand(theta: np.ndarray) -> np.ndarray:
        return log_m(theta) + mu.logpdf(theta)

    shift = grid_shift(log_integrand, binning.edges[0], binning.edges[-1], points=8 * binning.n_bins + 1)
    if not math.isfinite(shift):
        raise DivergentNormalizerError("m * g_mu is infinite on the support grid")
    pieces = integrate_pieces(log_integrand, binning.edges, shift=shift, epsrel=epsrel)
    total = pieces.total
    if np.any(pieces.failed) or not math.isfinite(total) or not math.isfinite(pieces.log_total()):
        bad = pieces.edges[:-1][pieces.failed].tolist()
        raise DivergentNormalizerError("E_mu[m] does not converge numerically", bad)
    if total <= 0.0:
        raise NumericalError("E_mu[m] underflowed to zero")
    return OccupationMeasure(binning, pieces.values / total, kind, size)


# =============================================================================
# DISTANCES
# =============================================================================

def tv_distance(p: OccupationMeasure, q: OccupationMeasure) -> float:
    """Total variation 1/2 sum |p - q| on a shared binning."""
    if not p.binning.same_as(q.binning):
        raise PreconditionError("total variation needs a shared binning")
    return 0.5 * float(np.abs(p.masses - q.masses).sum())


def bounded_lipschitz_distance(
    p_points: Sequence[float],
    p_weights: Sequence[float],
    q_points: Sequence[float],
    q_weights: Sequence[float],
) -> float:
    """
    sup of the integral of f d(p - q) over max(|f|_inf, Lip f) <= 1.

    On a support of diameter at most 2 the sup-norm constraint is inactive
    and the distance equals W1; otherwise the dual linear program is solved
    on the merged support.
    """
    p_points = np.asarray(p_points, dtype=float)
    q_points = np.asarray(q_points, dtype=float)
    p_weights = np.asarray(p_weights, dtype=float)
    q_weights = np.asarray(q_weights, dtype=float)
    merged = np.concatenate([p_points, q_points])
    if merged.max() - merged.min() <= 2.0:
        return float(stats.wasserstein_distance(p_points, q_points, p_weights, q_weights))

    support, inverse = np.unique(merged, return_inverse=True)
    signed = np.zeros(support.size)
    np.add.at(signed, inverse[:p_points.size], p_weights / p_weights.sum())
    np.add.at(signed, inverse[p_points.size:], -q_weights / q_weights.sum())
    gaps = np.diff(support)
    k = support.size
    rows = np.zeros((2 * (k - 1), k))
    for i in range(k - 1):
        rows[2 * i, i + 1], rows[2 * i, i] = 1.0, -1.0
        rows[2 * i + 1, i + 1], rows[2 * i + 1, i] = -1.0, 1.0
    result = optimize.linprog(
        -signed, A_ub=rows, b_ub=np.repeat(gaps, 2), bounds=[(-1.0, 1.0)] * k, method="highs"
    )
    if not result.success:
        raise NumericalError(f"bounded-Lipschitz program failed: {result.message}")
    return float(-result.fun)


def measure_points(measure: OccupationMeasure) -> Tuple[np.ndarray, np.ndarray]:
    """(points, masses) with bins represented by their midpoints."""
    return measure.binning.points, measure.masses
