"""
Emerging dominance: which states carry the limit of the occupation measures.

Finite-N ladders stand in for the limits in every statement here. A ratio
sequence "goes to 0" when its last value is below zero_factor times its
first and it decreases monotonically; it "converges" when consecutive values
differ by less than stable_tolerance, with the limit taken by linear
extrapolation in 1/N. Both thresholds are RatioThresholds fields.

Sequences of expectations are passed as log m_N(theta) so that exponentially
large values never leave log space.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from ssmc_lab.core import StateDistribution
from ssmc_lab.errors import DivergentNormalizerError, NumericalError, PreconditionError
from ssmc_lab.occupation import (
    Binning,
    MeasureKind,
    OccupationMeasure,
    bounded_lipschitz_distance,
    limiting_occupation,
)
from ssmc_lab.quadrature import grid_shift, integrate_pieces
from ssmc_lab.sserw import ModelKind, asymptotic_profile, h_sequence, log_mean_sequence

logger = logging.getLogger(__name__)

LogMeanSequence = Callable[[int, np.ndarray], np.ndarray]
HSequence = Callable[[int, np.ndarray], np.ndarray]
ScalarFn = Callable[[float], float]

DEFAULT_LADDER = (10, 20, 40, 80, 160, 320)
WEIGHT_TOL = 1e-12


class Theorem(str, Enum):
    FINITE_SUPPORT = "FiniteSupport"
    UNIQUE_MAX = "UniqueMax"
    BOUNDARY_PAIR = "BoundaryPair"
    INTERIOR_PAIR = "InteriorPair"
    MONOTONE_LIMIT = "MonotoneLimit"


class Verdict(str, Enum):
    DOMINANCE = "Dominance"
    NO_DOMINANCE = "NoDominance"
    INCONCLUSIVE = "Inconclusive"


class RatioTrend(str, Enum):
    TO_ZERO = "to_zero"
    TO_CONSTANT = "to_constant"
    TO_INFINITY = "to_infinity"
    UNRESOLVED = "unresolved"


@dataclass(frozen=True)
class RatioThresholds:
    zero_factor: float = 0.1
    stable_tolerance: float = 0.05


@dataclass(frozen=True)
class DiracMixture:
    points: Tuple[float, ...]
    weights: Tuple[float, ...]

    def __post_init__(self):
        if len(self.points) != len(self.weights) or not self.points:
            raise PreconditionError("mixture needs one weight per point")
        if any(w <= 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-9:
            raise PreconditionError("mixture weights must be positive and sum to 1")


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


@dataclass
class DominanceReport:
    """Verdict, the theorem that produced it and the numbers behind it."""
    verdict: Verdict
    theorem_used: Theorem
    points: Tuple[float, ...] = ()
    weights: Tuple[float, ...] = ()
    limit_measure: Optional[OccupationMeasure] = None
    reason: str = ""
    evidence: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict is Verdict.DOMINANCE:
            if not self.points or len(self.points) != len(self.weights):
                raise PreconditionError("dominance needs one weight per dominant point")
            if any(w <= 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > WEIGHT_TOL:
                raise PreconditionError(f"dominance weights {self.weights} are not a probability vector")

    @property
    def mixture(self) -> DiracMixture:
        return DiracMixture(self.points, self.weights)

    def to_dict(self) -> Dict[str, Any]:
        out = {
            "verdict": self.verdict.value,
            "theorem_used": self.theorem_used.value,
            "points": list(self.points),
            "weights": list(self.weights),
            "reason": self.reason,
            "evidence": self.evidence,
        }
        if self.limit_measure is not None:
            frame = self.limit_measure.to_frame()
            out["limit_measure"] = {col: frame[col].tolist() for col in frame.columns}
        return _jsonable(out)


def _inconclusive(theorem: Theorem, reason: str, **evidence) -> DominanceReport:
    logger.info(f"Dominance analysis inconclusive ({theorem.value}): {reason}")
    return DominanceReport(Verdict.INCONCLUSIVE, theorem, reason=reason, evidence=evidence)


def _check_ladder(ladder: Sequence[int]) -> Tuple[int, ...]:
    ladder = tuple(int(n) for n in ladder)
    if len(ladder) < 2 or any(b <= a for a, b in zip(ladder, ladder[1:])) or ladder[0] < 1:
        raise PreconditionError("N ladder must be increasing with at least two entries")
    return ladder


def extrapolate_inverse_n(ladder: Sequence[int], values: np.ndarray) -> np.ndarray:
    """Linear extrapolation in 1/N through the last two ladder points (along axis 0)."""
    values = np.asarray(values, dtype=float)
    n_prev, n_last = float(ladder[-2]), float(ladder[-1])
    return (n_last * values[-1] - n_prev * values[-2]) / (n_last - n_prev)


def classify_log_ratio(
    ladder: Sequence[int],
    log_ratios: np.ndarray,
    thresholds: RatioThresholds = RatioThresholds(),
) -> Tuple[RatioTrend, Optional[float]]:
    """Trend and limit of r_N = exp(log_ratios) along the ladder."""
    log_r = np.asarray(log_ratios, dtype=float)
    if not np.all(np.isfinite(log_r)):
        return RatioTrend.UNRESOLVED, None
    steps = np.diff(log_r)
    if np.all(np.abs(np.expm1(steps)) < thresholds.stable_tolerance):
        return RatioTrend.TO_CONSTANT, float(extrapolate_inverse_n(ladder, np.exp(log_r)))
    log_factor = math.log(thresholds.zero_factor)
    if log_r[-1] < log_factor + log_r[0] and np.all(steps < 0):
        return RatioTrend.TO_ZERO, 0.0
    if -log_r[-1] < log_factor - log_r[0] and np.all(steps > 0):
        return RatioTrend.TO_INFINITY, math.inf
    return RatioTrend.UNRESOLVED, None


# =============================================================================
# FINITE SUPPORT
# =============================================================================

def finite_support_weights(
    atoms: Sequence[Tuple[float, float]],
    log_mean_seq: LogMeanSequence,
    ladder: Sequence[int] = DEFAULT_LADDER,
    thresholds: RatioThresholds = RatioThresholds(),
) -> DominanceReport:
    """
    Dominant atoms of a discrete mu and their weights.

    Atoms whose expectation is negligible against another atom's drop out;
    the survivors get w_i = 1 / (1 + sum_j mu_j/mu_i d_ij) with
    d_ij = lim m_N(theta_j)/m_N(theta_i). When no atom drops out the
    occupation measures converge to mu_j d_j normalised and there is no
    dominance.
    """
    pairs = sorted((float(t), float(w)) for t, w in atoms)
    if len(pairs) < 2:
        raise PreconditionError("finite-support analysis needs at least two atoms")
    ladder = _check_ladder(ladder)
    thetas = np.array([t for t, _ in pairs])
    mus = np.array([w for _, w in pairs])
    if np.any(mus <= 0) or abs(mus.sum() - 1.0) > 1e-12:
        raise PreconditionError("atom weights must be positive and sum to 1")

    log_m = np.vstack([np.asarray(log_mean_seq(n, thetas), dtype=float) for n in ladder])
    k = thetas.size
    trends: Dict[Tuple[int, int], RatioTrend] = {}
    limits = np.ones((k, k))
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            trend, limit = classify_log_ratio(ladder, log_m[:, j] - log_m[:, i], thresholds)
            trends[i, j] = trend
            limits[i, j] = limit if limit is not None else math.nan

    dominated = {j for (i, j), t in trends.items() if t is RatioTrend.TO_ZERO}
    dominant = [i for i in range(k) if i not in dominated]
    evidence = {
        "ladder": list(ladder),
        "thetas": thetas.tolist(),
        "log_m": log_m.tolist(),
        "trends": {f"{thetas[j]}/{thetas[i]}": t.value for (i, j), t in trends.items()},
        "ratio_limits": limits.tolist(),
        "dominant": thetas[dominant].tolist(),
    }
    if not dominant:
        return _inconclusive(Theorem.FINITE_SUPPORT, "every atom is dominated", **evidence)
    for i in dominant:
        for j in range(k):
            if j in dominant:
                if j != i and trends[i, j] is not RatioTrend.TO_CONSTANT:
                    return _inconclusive(
                        Theorem.FINITE_SUPPORT,
                        f"ratio m_N({thetas[j]})/m_N({thetas[i]}) does not settle",
                        **evidence,
                    )
            elif trends[i, j] is not RatioTrend.TO_ZERO:
                return _inconclusive(
                    Theorem.FINITE_SUPPORT,
                    f"ratio m_N({thetas[j]})/m_N({thetas[i]}) does not vanish",
                    **evidence,
                )

    if len(dominant) == k:
        ref = dominant[0]
        masses = mus * limits[ref]
        masses = masses / masses.sum()
        measure = OccupationMeasure(Binning.for_atoms(thetas), masses, MeasureKind.ASYMPTOTIC)
        logger.info(f"No dominance among atoms {thetas.tolist()}: limit masses {masses.tolist()}")
        return DominanceReport(
            Verdict.NO_DOMINANCE,
            Theorem.MONOTONE_LIMIT,
            limit_measure=measure,
            reason="all expectation ratios converge to positive constants",
            evidence=evidence,
        )

    raw = np.array([
        1.0 / (1.0 + sum(mus[j] / mus[i] * limits[i, j] for j in dominant if j != i))
        for i in dominant
    ])
    weights = raw / raw.sum()
    logger.info(f"Dominance at {thetas[dominant].tolist()} with weights {weights.tolist()}")
    return DominanceReport(
        Verdict.DOMINANCE,
        Theorem.FINITE_SUPPORT,
        points=tuple(thetas[dominant].tolist()),
        weights=tuple(weights.tolist()),
        evidence=evidence,
    )


# =============================================================================
# CONTINUOUS MU: UNIQUE MAXIMUM AND PAIRS
# =============================================================================

def _runs(mask: np.ndarray) -> List[Tuple[int, int]]:
    """Inclusive index ranges of consecutive True entries."""
    runs = []
    start = None
    for i, flag in enumerate(mask.tolist()):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(mask) - 1))
    return runs


def unique_max_dominance(
    h_seq: HSequence,
    mu: StateDistribution,
    ladder: Sequence[int],
    h_limit: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    grid_size: int = 201,
    max_refinements: int = 3,
    margin_factor: float = 3.0,
) -> DominanceReport:
    """
    Dominance at the unique maximiser of h over supp(mu).

    h is the supplied limit or the 1/N extrapolation of the ladder. Grid
    points within margin_factor * slack of the maximum form candidate runs,
    slack being the largest step of h between neighbours. More than one run
    is a tie: the grid is refined x4 up to max_refinements times, then the
    report is Inconclusive with failure "tie".
    """
    if mu.is_discrete:
        raise PreconditionError("unique-maximum analysis needs a continuous mu")
    ladder = _check_ladder(ladder)
    lower, upper = mu.support_bounds

    for level in range(max_refinements + 1):
        size = (grid_size - 1) * 4 ** level + 1
        grid = np.linspace(lower, upper, size)
        h_by_n = np.vstack([np.asarray(h_seq(n, grid), dtype=float) for n in ladder])
        h_est = np.asarray(h_limit(grid), dtype=float) if h_limit is not None else extrapolate_inverse_n(ladder, h_by_n)
        sup_gap = np.max(np.abs(h_by_n - h_est), axis=1)
        best = float(h_est.max())
        slack = max(float(np.max(np.abs(np.diff(h_est)))), 1e-15)
        runs = _runs(h_est >= best - margin_factor * slack)
        if len(runs) == 1:
            break
        logger.debug(f"Tie between {len(runs)} candidate runs at grid size {size}; refining")
    else:
        tie_points = [float(grid[lo + int(np.argmax(h_est[lo:hi + 1]))]) for lo, hi in runs]
        return _inconclusive(
            Theorem.UNIQUE_MAX, "maximiser of h is not unique",
            failure="tie", tie_points=tie_points, grid_size=size, slack=slack,
        )

    evidence = {
        "ladder": list(ladder),
        "sup_gap": sup_gap.tolist(),
        "grid_size": size,
        "slack": slack,
        "refinements": level,
    }
    if not sup_gap[-1] < sup_gap[0]:
        return _inconclusive(
            Theorem.UNIQUE_MAX, "h_N does not approach its limit on the grid",
            failure="no_convergence", **evidence,
        )
    lo, hi = runs[0]
    idx = int(np.argmax(h_est))
    theta_star = float(grid[idx])
    outside = np.concatenate([h_est[:lo], h_est[hi + 1:]])
    margin = best - float(outside.max()) if outside.size else math.inf
    evidence.update(theta_star=theta_star, h_star=best, margin=margin)
    if best <= 0.0:
        return _inconclusive(
            Theorem.UNIQUE_MAX, f"h({theta_star}) = {best} is not positive",
            failure="nonpositive_limit", **evidence,
        )
    logger.info(f"Unique dominance at theta*={theta_star} (h={best:.6g})")
    return DominanceReport(
        Verdict.DOMINANCE, Theorem.UNIQUE_MAX,
        points=(theta_star,), weights=(1.0,), evidence=evidence,
    )


def _scalar(fn: Callable, x: float) -> float:
    return float(np.asarray(fn(np.asarray(x, dtype=float))).reshape(-1)[0])


def _check_density(g_mu: Callable, points: Sequence[float]) -> Tuple[float, float]:
    g = tuple(_scalar(g_mu, p) for p in points)
    if not all(math.isfinite(v) and v > 0 for v in g):
        raise PreconditionError(f"density must be positive and finite at {tuple(points)}, got {g}")
    return g


def boundary_pair_weights(
    g_mu: Callable,
    h: Callable,
    h_prime: Callable,
    points: Tuple[float, float],
    d1: float = 0.0,
    d2: float = 0.0,
    tol: float = 1e-9,
) -> Tuple[float, float]:
    """
    Weights of the two endpoints a < b when h(a) = h(b) > 0.

    w_i is proportional to e^{d_i} g_mu(theta_i) / |h'(theta_i)|, with h'
    taken one-sided from inside the support.
    """
    a, b = points
    ha, hb = _scalar(h, a), _scalar(h, b)
    if abs(ha - hb) > tol * max(1.0, abs(ha)) or ha <= 0:
        raise PreconditionError(f"requires h(a) = h(b) > 0, got {ha}, {hb}")
    slope_a, slope_b = _scalar(h_prime, a), _scalar(h_prime, b)
    if not (slope_a < 0 < slope_b):
        raise PreconditionError(f"requires h'(a) < 0 < h'(b), got {slope_a}, {slope_b}")
    if not (math.isfinite(d1) and math.isfinite(d2)):
        raise PreconditionError("offsets d1, d2 must be finite")
    ga, gb = _check_density(g_mu, points)
    t1 = math.exp(d1) * ga / -slope_a
    t2 = math.exp(d2) * gb / slope_b
    return t1 / (t1 + t2), t2 / (t1 + t2)


def interior_pair_weights(
    g_mu: Callable,
    h_second: Callable,
    points: Tuple[float, float],
    d1: float = 0.0,
    d2: float = 0.0,
    h_prime: Optional[Callable] = None,
) -> Tuple[float, float]:
    """Weights of two interior maximisers, proportional to e^{d_i} g_mu / sqrt(-h'')."""
    curvature = tuple(_scalar(h_second, p) for p in points)
    if not all(c < 0 for c in curvature):
        raise PreconditionError(f"curvature must be negative at both points, got {curvature}")
    if h_prime is not None:
        slopes = tuple(_scalar(h_prime, p) for p in points)
        if any(abs(s) > 1e-6 for s in slopes):
            raise PreconditionError(f"h' must vanish at interior maximisers, got {slopes}")
    if not (math.isfinite(d1) and math.isfinite(d2)):
        raise PreconditionError("offsets d1, d2 must be finite")
    g = _check_density(g_mu, points)
    t = [math.exp(d) * gi / math.sqrt(-c) for d, gi, c in zip((d1, d2), g, curvature)]
    return t[0] / (t[0] + t[1]), t[1] / (t[0] + t[1])


def estimate_offset(
    h_seq: HSequence,
    h_limit: Callable[[np.ndarray], np.ndarray],
    theta: float,
    ladder: Sequence[int],
) -> float:
    """d = lim N (h_N(theta) - h(theta)), extrapolated linearly in 1/N."""
    ladder = _check_ladder(ladder)
    h = _scalar(h_limit, theta)
    values = np.array([n * (_scalar(lambda t: h_seq(n, np.atleast_1d(t)), theta) - h) for n in ladder])
    return float(extrapolate_inverse_n(ladder, values))


# =============================================================================
# NO DOMINANCE AND LAPLACE RATIOS
# =============================================================================

def monotone_limit_measure(
    mu: StateDistribution,
    log_mean_seq: LogMeanSequence,
    ladder: Sequence[int],
    a_n: Callable[[int], float] = float,
    m_bar: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    binning: Optional[Binning] = None,
    grid_size: int = 201,
) -> DominanceReport:
    """
    Limit of the occupation measures when m_N / a_N converges monotonically.

    The limit is m_bar dmu normalised. A divergent E_mu[m_bar] routes to
    dominance at the singularity of m_bar.
    """
    ladder = _check_ladder(ladder)
    if mu.is_discrete and mu.atoms.size == 1:
        measure = OccupationMeasure(Binning.for_atoms(mu.atoms), np.ones(1), MeasureKind.ASYMPTOTIC)
        return DominanceReport(
            Verdict.NO_DOMINANCE, Theorem.MONOTONE_LIMIT,
            limit_measure=measure, reason="mu is a point mass",
        )

    grid = mu.atoms if mu.is_discrete else np.linspace(*mu.support_bounds, grid_size)
    scaled = np.vstack([np.exp(log_mean_seq(n, grid) - math.log(a_n(n))) for n in ladder])
    steps = np.diff(scaled, axis=0)
    tol = 1e-12 * np.abs(scaled[1:])
    monotone = np.all(steps >= -tol, axis=0) | np.all(steps <= tol, axis=0)
    evidence = {"ladder": list(ladder), "monotone_fraction": float(monotone.mean())}
    if not np.all(monotone):
        bad = grid[~monotone].tolist()
        return _inconclusive(Theorem.MONOTONE_LIMIT, f"m_N/a_N not monotone at {bad[:5]}", **evidence)

    if m_bar is None:
        n_last = ladder[-1]
        limit_eval = lambda th: log_mean_seq(n_last, th) - math.log(a_n(n_last))
        log_scale = True
    else:
        limit_eval = m_bar
        log_scale = False

    try:
        measure = limiting_occupation(
            mu, limit_eval, binning, log_scale=log_scale, kind=MeasureKind.ASYMPTOTIC
        )
    except DivergentNormalizerError as exc:
        values = np.asarray(m_bar(grid) if m_bar is not None else np.exp(limit_eval(grid)), dtype=float)
        singular = grid[~np.isfinite(values)]
        point = float(singular[0]) if singular.size else float(grid[int(np.argmax(values))])
        logger.info(f"E_mu[m_bar] diverges; dominance at the singularity {point}")
        return DominanceReport(
            Verdict.DOMINANCE, Theorem.MONOTONE_LIMIT,
            points=(point,), weights=(1.0,),
            reason=f"E_mu[m_bar] diverges: {exc}",
            evidence=evidence,
        )
    return DominanceReport(
        Verdict.NO_DOMINANCE, Theorem.MONOTONE_LIMIT,
        limit_measure=measure, reason="m_N/a_N converges monotonically", evidence=evidence,
    )


def laplace_ratio(
    f: Callable,
    g_seq: HSequence,
    mu: StateDistribution,
    n: int,
    pieces: int = 128,
) -> float:
    """
    Integral of f e^{N g_N} dmu over the integral of e^{N g_N} dmu.

    Raises:
        NumericalError: the normalizer is zero or not finite
    """
    if mu.is_discrete:
        atoms = mu.atoms
        log_w = n * np.asarray(g_seq(n, atoms), dtype=float) + np.log(mu.weights)
        if not np.any(np.isfinite(log_w)):
            raise NumericalError(f"degenerate normalizer at N={n}: no finite weight")
        w = np.exp(log_w - logsumexp(log_w))
        values = np.array([_scalar(f, a) for a in atoms])
        return float(np.dot(values, w) / w.sum())

    lower, upper = mu.support_bounds

    def log_weight(theta: np.ndarray) -> np.ndarray:
        return n * np.asarray(g_seq(n, theta), dtype=float) + mu.logpdf(theta)

    edges = np.linspace(lower, upper, pieces + 1)
    shift = grid_shift(log_weight, lower, upper)
    den = integrate_pieces(log_weight, edges, shift=shift)
    num = integrate_pieces(log_weight, edges, shift=shift, multiplier=lambda t: _scalar(f, t))
    if not (den.total > 0 and math.isfinite(den.total)):
        raise NumericalError(f"degenerate normalizer at N={n}: shift={shift}, scaled total={den.total}")
    return num.total / den.total


# =============================================================================
# KEY LEMMA DIAGNOSTICS
# =============================================================================

@dataclass(frozen=True)
class KeyLemmaDiagnostics:
    """
    Ball and complement integrals I_N[V] = integral over V of m_N dmu.

    Arrays are indexed [delta, N, i] (and [delta, N, i, j] for pair ratios).
    condA compares the complement of all balls with each ball; condA_prime
    compares sup of m_N off the balls with inf of m_N on the half-radius
    balls, which does not involve mu. C1/C2 are min/max of the pair ratios
    over the second half of the ladder and c is their extrapolated limit.
    """
    candidates: Tuple[float, ...]
    delta_grid: Tuple[float, ...]
    ladder: Tuple[int, ...]
    ball_log_integrals: np.ndarray
    complement_log_integrals: np.ndarray
    cond_a_ratio: np.ndarray
    cond_a_prime_ratio: np.ndarray
    cond_b_ratio: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    c_limit: np.ndarray
    stable_tolerance: float = 0.05

    @property
    def cond_a_vanishing(self) -> np.ndarray:
        """[delta, i]: ratio identically 0 or strictly decreasing along the ladder."""
        r = self.cond_a_ratio
        zero = np.all(r == 0.0, axis=1)
        decreasing = np.all(np.diff(r, axis=1) < 0, axis=1)
        return zero | decreasing

    @property
    def cond_b_stable(self) -> np.ndarray:
        """[delta]: every pair ratio varies by less than the tolerance over the tail."""
        with np.errstate(divide="ignore", invalid="ignore"):
            spread = (self.c2 - self.c1) / self.c1
        return np.all(spread < self.stable_tolerance, axis=(1, 2))

    def to_dict(self) -> Dict[str, Any]:
        return _jsonable({
            "candidates": self.candidates,
            "delta_grid": self.delta_grid,
            "ladder": self.ladder,
            "cond_a_ratio": self.cond_a_ratio,
            "cond_a_prime_ratio": self.cond_a_prime_ratio,
            "cond_a_vanishing": self.cond_a_vanishing,
            "cond_b_stable": self.cond_b_stable,
            "c_limit": self.c_limit,
        })


def _subtract_intervals(support: Tuple[float, float], holes: Sequence[Tuple[float, float]]) -> List[Tuple[float, float]]:
    lower, upper = support
    pieces = []
    cursor = lower
    for lo, hi in sorted(holes):
        if lo > cursor:
            pieces.append((cursor, min(lo, upper)))
        cursor = max(cursor, hi)
    if cursor < upper:
        pieces.append((cursor, upper))
    return [(lo, hi) for lo, hi in pieces if hi > lo]


def _log_mass(
    mu: StateDistribution,
    log_m: Callable[[np.ndarray], np.ndarray],
    intervals: Sequence[Tuple[float, float]],
    shift: float,
    pieces: int,
) -> float:
    """log of the integral of m dmu over a union of closed intervals."""
    if not intervals:
        return -math.inf
    if mu.is_discrete:
        atoms = mu.atoms
        inside = np.zeros(atoms.size, dtype=bool)
        for lo, hi in intervals:
            inside |= (atoms >= lo - 1e-12) & (atoms <= hi + 1e-12)
        if not np.any(inside):
            return -math.inf
        return float(logsumexp(log_m(atoms[inside]) + np.log(mu.weights[inside])))
    logs = []
    for lo, hi in intervals:
        edges = np.linspace(lo, hi, pieces + 1)
        logs.append(integrate_pieces(lambda t: log_m(t) + mu.logpdf(t), edges, shift=shift).log_total())
    return float(logsumexp(logs))


def key_lemma_diagnostics(
    mu: StateDistribution,
    log_mean_seq: LogMeanSequence,
    candidates: Sequence[float],
    delta_grid: Sequence[float],
    ladder: Sequence[int],
    pieces: int = 32,
    grid_size: int = 401,
    stable_tolerance: float = 0.05,
) -> KeyLemmaDiagnostics:
    """Integrals over balls around the candidates and over the rest of the support."""
    ladder = _check_ladder(ladder)
    cands = tuple(sorted(float(c) for c in candidates))
    deltas = tuple(float(d) for d in delta_grid)
    lower, upper = mu.support_bounds
    if any(c < lower - 1e-12 or c > upper + 1e-12 for c in cands):
        raise PreconditionError("candidates must lie in supp(mu)")
    grid = mu.atoms if mu.is_discrete else np.linspace(lower, upper, grid_size)

    k, nd, nn = len(cands), len(deltas), len(ladder)
    ball = np.empty((nd, nn, k))
    comp = np.empty((nd, nn))
    cond_a_prime = np.empty((nd, nn, k))
    for di, delta in enumerate(deltas):
        balls = [(max(lower, c - delta), min(upper, c + delta)) for c in cands]
        rest = _subtract_intervals((lower, upper), balls)
        off_balls = np.ones(grid.size, dtype=bool)
        for lo, hi in balls:
            off_balls &= ~((grid >= lo) & (grid <= hi))
        for ni, n in enumerate(ladder):
            log_m = lambda t, n=n: np.asarray(log_mean_seq(n, np.atleast_1d(t)), dtype=float)
            shift = float(np.max(log_m(grid))) if mu.is_discrete else grid_shift(
                lambda t: log_m(t) + mu.logpdf(t), lower, upper
            )
            for i, (lo, hi) in enumerate(balls):
                ball[di, ni, i] = _log_mass(mu, log_m, [(lo, hi)], shift, pieces)
            comp[di, ni] = _log_mass(mu, log_m, rest, shift, pieces)
            log_grid = log_m(grid)
            sup_off = float(np.max(log_grid[off_balls])) if np.any(off_balls) else -math.inf
            for i, c in enumerate(cands):
                half = (grid >= c - delta / 2) & (grid <= c + delta / 2)
                inf_half = float(np.min(log_grid[half])) if np.any(half) else float(log_m(np.array([c]))[0])
                cond_a_prime[di, ni, i] = math.exp(min(sup_off - inf_half, 700.0))

    with np.errstate(invalid="ignore"):
        cond_a = np.exp(np.minimum(comp[:, :, None] - ball, 700.0))
        cond_b = np.exp(np.clip(ball[:, :, None, :] - ball[:, :, :, None], -745.0, 700.0))
    tail = cond_b[:, nn // 2:, :, :]
    c1 = tail.min(axis=1)
    c2 = tail.max(axis=1)
    c_limit = extrapolate_inverse_n(ladder, np.moveaxis(cond_b, 1, 0))
    return KeyLemmaDiagnostics(
        candidates=cands,
        delta_grid=deltas,
        ladder=ladder,
        ball_log_integrals=ball,
        complement_log_integrals=comp,
        cond_a_ratio=cond_a,
        cond_a_prime_ratio=cond_a_prime,
        cond_b_ratio=cond_b,
        c1=c1,
        c2=c2,
        c_limit=c_limit,
        stable_tolerance=stable_tolerance,
    )


# =============================================================================
# DISTANCES AND ORCHESTRATION
# =============================================================================

def weak_convergence_distance(
    measure: OccupationMeasure,
    target: Union[DiracMixture, OccupationMeasure],
) -> float:
    """Bounded-Lipschitz distance; bins are represented by their midpoints."""
    if isinstance(target, DiracMixture):
        t_points, t_weights = np.asarray(target.points), np.asarray(target.weights)
    else:
        t_points, t_weights = target.binning.points, target.masses
    return bounded_lipschitz_distance(measure.binning.points, measure.masses, t_points, t_weights)


def predict_sserw_dominance(kind: ModelKind, mu: StateDistribution) -> DominanceReport:
    """Verdict read off the shape of h for the three walks, without any ladder."""
    kind = ModelKind(kind)
    evidence = {"source": "analytic", "model": kind.value}
    profile = asymptotic_profile(kind)

    if mu.is_discrete:
        atoms, weights = mu.atoms, mu.weights
        if atoms.size == 1:
            return DominanceReport(
                Verdict.NO_DOMINANCE, Theorem.MONOTONE_LIMIT,
                limit_measure=OccupationMeasure(Binning.for_atoms(atoms), np.ones(1), MeasureKind.ASYMPTOTIC),
                reason="mu is a point mass", evidence=evidence,
            )
        h = profile.h_limit(atoms)
        if np.max(h) > 0:
            top = np.isclose(h, np.max(h), rtol=1e-12, atol=0.0)
        elif kind is not ModelKind.ALTERNATING_WELLS and np.any(atoms == 0.5):
            top = atoms == 0.5
        else:
            m_bar = profile.m_bar(atoms)
            masses = weights * m_bar / np.sum(weights * m_bar)
            return DominanceReport(
                Verdict.NO_DOMINANCE, Theorem.MONOTONE_LIMIT,
                limit_measure=OccupationMeasure(Binning.for_atoms(atoms), masses, MeasureKind.ASYMPTOTIC),
                reason="expectations grow at the same rate on every atom", evidence=evidence,
            )
        if np.all(top):
            masses = weights / weights.sum()
            return DominanceReport(
                Verdict.NO_DOMINANCE, Theorem.MONOTONE_LIMIT,
                limit_measure=OccupationMeasure(Binning.for_atoms(atoms), masses, MeasureKind.ASYMPTOTIC),
                reason="every atom maximises h", evidence=evidence,
            )
        w = weights[top] / weights[top].sum()
        return DominanceReport(
            Verdict.DOMINANCE, Theorem.FINITE_SUPPORT,
            points=tuple(atoms[top].tolist()), weights=tuple(w.tolist()), evidence=evidence,
        )

    a, b = mu.support_bounds
    if kind is ModelKind.ALTERNATING_WELLS:
        if math.isclose(a, 1.0 - b, abs_tol=1e-12):
            wa, wb = boundary_pair_weights(mu.pdf, profile.h_limit, profile.h_prime, (a, b))
            return DominanceReport(
                Verdict.DOMINANCE, Theorem.BOUNDARY_PAIR, points=(a, b), weights=(wa, wb), evidence=evidence,
            )
        point = a if a < 1.0 - b else b
        return DominanceReport(Verdict.DOMINANCE, Theorem.UNIQUE_MAX, points=(point,), weights=(1.0,), evidence=evidence)
    if kind is ModelKind.SINGLE_WELL and a < 0.5:
        return DominanceReport(Verdict.DOMINANCE, Theorem.UNIQUE_MAX, points=(a,), weights=(1.0,), evidence=evidence)
    if a <= 0.5 <= b:
        return DominanceReport(
            Verdict.DOMINANCE, Theorem.MONOTONE_LIMIT, points=(0.5,), weights=(1.0,),
            reason="E_mu[m_bar] diverges", evidence=evidence,
        )
    measure = limiting_occupation(mu, profile.m_bar, kind=MeasureKind.ASYMPTOTIC)
    return DominanceReport(
        Verdict.NO_DOMINANCE, Theorem.MONOTONE_LIMIT, limit_measure=measure,
        reason="m_N/N converges to m_bar", evidence=evidence,
    )


def analyze(
    kind: ModelKind,
    mu: StateDistribution,
    ladder: Sequence[int],
    thresholds: RatioThresholds = RatioThresholds(),
    grid_size: int = 201,
    max_refinements: int = 3,
    margin_factor: float = 3.0,
    binning: Optional[Binning] = None,
) -> DominanceReport:
    """
    Pick the applicable statement for one walk family and run it.

    Discrete mu goes through finite support. Continuous mu tries the unique
    maximum first; a tie at both support endpoints becomes a boundary pair,
    a tie between interior points an interior pair, and a nonpositive
    maximum hands over to the monotone limit.
    """
    kind = ModelKind(kind)
    profile = asymptotic_profile(kind)
    log_seq = log_mean_sequence(kind)
    h_seq = h_sequence(kind)
    a_n = profile.a_n or float

    if mu.is_discrete:
        if mu.atoms.size == 1:
            return monotone_limit_measure(mu, log_seq, ladder, a_n=a_n, m_bar=profile.m_bar)
        return finite_support_weights(list(zip(mu.atoms, mu.weights)), log_seq, ladder, thresholds)

    report = unique_max_dominance(
        h_seq, mu, ladder, h_limit=profile.h_limit,
        grid_size=grid_size, max_refinements=max_refinements, margin_factor=margin_factor,
    )
    failure = report.evidence.get("failure")
    if report.verdict is Verdict.DOMINANCE or failure not in ("tie", "nonpositive_limit"):
        return report

    if failure == "nonpositive_limit":
        if profile.m_bar is None:
            return report
        return monotone_limit_measure(mu, log_seq, ladder, a_n=a_n, m_bar=profile.m_bar, binning=binning)

    tie_points = report.evidence["tie_points"]
    if len(tie_points) != 2:
        return report
    lower, upper = mu.support_bounds
    p1, p2 = tie_points
    d1 = estimate_offset(h_seq, profile.h_limit, p1, ladder)
    d2 = estimate_offset(h_seq, profile.h_limit, p2, ladder)
    evidence = dict(report.evidence, d1=d1, d2=d2, grid_verified_only=True)
    try:
        if math.isclose(p1, lower, abs_tol=1e-9) and math.isclose(p2, upper, abs_tol=1e-9):
            weights = boundary_pair_weights(mu.pdf, profile.h_limit, profile.h_prime, (p1, p2), d1, d2)
            theorem = Theorem.BOUNDARY_PAIR
        else:
            weights = interior_pair_weights(mu.pdf, profile.h_second, (p1, p2), d1, d2, profile.h_prime)
            theorem = Theorem.INTERIOR_PAIR
    except PreconditionError as exc:
        return _inconclusive(Theorem.BOUNDARY_PAIR, str(exc), **evidence)
    logger.info(f"{theorem.value} dominance at ({p1}, {p2}) with weights {weights}")
    return DominanceReport(
        Verdict.DOMINANCE, theorem, points=(p1, p2), weights=weights, evidence=evidence,
    )
