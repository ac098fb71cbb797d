"""
Self-switching elementary random walks: flat, single-well and alternating wells.

Closed forms for m_N(theta) are evaluated in log space. With u = 1 - 2*theta,
L = log((1 - theta)/theta), A = 2*theta*(1 - theta)/u**2 and x = N*L:

    flat              m = (N/|u|) tanh(N|L|/2)
    single well       m = A expm1(x) - N/u
    alternating wells m = A (1 - s^N)(r^N - s^N) / (theta s^N + 1 - theta)

where r = 1/s = (1 - theta)/theta. theta = 1/2 gives N^2 (4N^2 for the
alternating wells); points within 1e-6 of 1/2 go through the banded solve.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import partial
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np

from ssmc_lab.core import ChainSpec, ParamSpace
from ssmc_lab.errors import DomainError
from ssmc_lab.hitting import birth_death_expectations, exit_distribution

logger = logging.getLogger(__name__)

NEAR_HALF = 1e-6
LOG_BRANCH = 30.0

ThetaLike = Union[float, np.ndarray]


class ModelKind(str, Enum):
    FLAT = "flat"
    SINGLE_WELL = "single_well"
    ALTERNATING_WELLS = "alternating_wells"


@dataclass(frozen=True)
class SserwModel:
    """One of the three walks at system size N, started at 0."""
    kind: ModelKind
    n: int

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"N must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def half_width(self) -> int:
        return 2 * self.n if self.kind is ModelKind.ALTERNATING_WELLS else self.n

    @property
    def positions(self) -> np.ndarray:
        w = self.half_width
        return np.arange(-w, w + 1)

    @property
    def n_states(self) -> int:
        return 2 * self.half_width + 1

    @property
    def origin_index(self) -> int:
        return self.half_width

    @property
    def target_indices(self) -> Tuple[int, int]:
        return 0, 2 * self.half_width

    def index_of(self, position: int) -> int:
        return int(position) + self.half_width

    def with_n(self, n: int) -> "SserwModel":
        return SserwModel(self.kind, n)

    def right_probabilities(self, theta: float, positions: Optional[np.ndarray] = None) -> np.ndarray:
        """P(x -> x+1) by block rule, extended to the target positions."""
        x = self.positions if positions is None else np.asarray(positions)
        if self.kind is ModelKind.FLAT:
            return np.full(x.shape, float(theta))
        if self.kind is ModelKind.SINGLE_WELL:
            return np.where(x >= 1, theta, 1.0 - theta)
        return np.where(np.abs(x) <= self.n, 1.0 - theta, theta)

    def chain_spec(self) -> ChainSpec:
        return ChainSpec(
            n_states=self.n_states,
            origin=self.origin_index,
            targets=frozenset(self.target_indices),
            transition_family=partial(build_matrix, self),
            param_space=ParamSpace.interval(0.0, 1.0),
            labels=tuple(int(p) for p in self.positions),
            name=f"{self.kind.value}(N={self.n})",
        )


def _check_theta(theta: float) -> float:
    theta = float(theta)
    if not 0.0 <= theta <= 1.0:
        raise DomainError(f"theta={theta} outside [0, 1]")
    return theta


def build_matrix(model: SserwModel, theta: float) -> np.ndarray:
    """Transition matrix on the state span; target rows are self-loops."""
    theta = _check_theta(theta)
    size = model.n_states
    q = np.zeros((size, size))
    right = model.right_probabilities(theta)
    for i in range(1, size - 1):
        q[i, i + 1] = right[i]
        q[i, i - 1] = 1.0 - right[i]
    for t in model.target_indices:
        q[t, t] = 1.0
    return q


@dataclass(frozen=True)
class Potential:
    positions: np.ndarray
    values: np.ndarray

    def at(self, position: int) -> float:
        return float(self.values[int(position) - int(self.positions[0])])


def potential(model: SserwModel, theta: float) -> Potential:
    """V(0) = 0, V(n) = sum of log(Q(i,i-1)/Q(i,i+1)) over i = 1..n, mirrored below 0."""
    theta = _check_theta(theta)
    if theta in (0.0, 1.0):
        raise DomainError("potential undefined at theta in {0, 1}: log of a zero transition")
    positions = model.positions
    right = model.right_probabilities(theta)
    increments = np.log1p(-right) - np.log(right)
    w = model.half_width
    values = np.zeros(positions.shape)
    # positive side uses i = 1..n, negative side subtracts i = n+1..0
    values[w + 1:] = np.cumsum(increments[w + 1:])
    values[:w] = -np.cumsum(increments[1:w + 1][::-1])[::-1]
    return Potential(positions=positions, values=values)


# =============================================================================
# EXPECTED SWITCHING TIMES
# =============================================================================

@dataclass(frozen=True)
class ExpectedTime:
    """m_N(theta) carried in log form; value is None when it overflows."""
    log_value: float

    @property
    def value(self) -> Optional[float]:
        if self.log_value > 709.0:
            return None
        return math.exp(self.log_value)

    @classmethod
    def from_value(cls, value: float) -> "ExpectedTime":
        return cls(math.log(value))


def m_exact(model: SserwModel, theta: float) -> float:
    """Banded linear-solve oracle for m_N(theta), O(N)."""
    theta = _check_theta(theta)
    w = model.half_width
    interior = np.arange(-w + 1, w)
    right = model.right_probabilities(theta, interior)
    expectations = birth_death_expectations(right, 1.0 - right)
    return float(expectations[w - 1])


def _log_flat(n: int, th: np.ndarray) -> np.ndarray:
    u = np.abs(1.0 - 2.0 * th)
    x = n * np.abs(np.log1p(-th) - np.log(th))
    return math.log(n) - np.log(u) + np.log(-np.expm1(-x)) - np.log1p(np.exp(-x))


def _log_single_well(n: int, th: np.ndarray) -> np.ndarray:
    u = 1.0 - 2.0 * th
    a = 2.0 * th * (1.0 - th) / u ** 2
    x = n * (np.log1p(-th) - np.log(th))
    out = np.empty_like(th)
    big = x > LOG_BRANCH
    if np.any(big):
        xb, ab, ub = x[big], a[big], u[big]
        out[big] = xb + np.log(ab) + np.log1p(-(1.0 + n / (ub * ab)) * np.exp(-xb))
    small = ~big
    if np.any(small):
        out[small] = np.log(a[small] * np.expm1(x[small]) - n / u[small])
    return out


def _log_alternating(n: int, th: np.ndarray) -> np.ndarray:
    t = np.minimum(th, 1.0 - th)
    u = 1.0 - 2.0 * t
    a = 2.0 * t * (1.0 - t) / u ** 2
    x = n * (np.log1p(-t) - np.log(t))
    return (
        np.log(a) + x
        + np.log(-np.expm1(-2.0 * x))
        + np.log(-np.expm1(-x))
        - np.log(1.0 - t + t * np.exp(-x))
    )


_CLOSED_FORMS: Dict[ModelKind, Callable[[int, np.ndarray], np.ndarray]] = {
    ModelKind.FLAT: _log_flat,
    ModelKind.SINGLE_WELL: _log_single_well,
    ModelKind.ALTERNATING_WELLS: _log_alternating,
}


def log_mean_time(model: SserwModel, thetas: ThetaLike) -> np.ndarray:
    """
    Vectorised log m_N(theta).

    Raises:
        DomainError: theta outside [0, 1], single well at 0, alternating
            wells at 0 or 1 (the walk is trapped between two sites there)
    """
    th = np.atleast_1d(np.asarray(thetas, dtype=float))
    if np.any((th < 0.0) | (th > 1.0)) or np.any(np.isnan(th)):
        raise DomainError(f"theta outside [0, 1] for {model.kind.value}")
    n = model.n
    out = np.empty_like(th)

    half = th == 0.5
    anchor = 4.0 * n * n if model.kind is ModelKind.ALTERNATING_WELLS else float(n * n)
    out[half] = math.log(anchor)

    near = (np.abs(th - 0.5) < NEAR_HALF) & ~half
    ends = (th == 0.0) | (th == 1.0)
    if np.any(ends):
        if model.kind is ModelKind.ALTERNATING_WELLS:
            raise DomainError("alternating wells never reach the targets at theta in {0, 1}")
        if model.kind is ModelKind.SINGLE_WELL and np.any(th == 0.0):
            raise DomainError("single well never reaches the targets at theta = 0")
    # flat at 0 or 1 and single well at 1 walk straight to a target
    for i in np.flatnonzero(near | ends):
        out[i] = math.log(m_exact(model, th[i]))

    rest = ~(half | near | ends)
    if np.any(rest):
        out[rest] = _CLOSED_FORMS[model.kind](n, th[rest])
    return out


def m_closed(model: SserwModel, theta: float) -> ExpectedTime:
    """Closed-form m_N(theta) in log form."""
    return ExpectedTime(float(log_mean_time(model, theta)[0]))


def h_n(model: SserwModel, thetas: ThetaLike) -> np.ndarray:
    """N^-1 log m_N(theta)."""
    return log_mean_time(model, thetas) / model.n


def log_mean_sequence(kind: ModelKind) -> Callable[[int, np.ndarray], np.ndarray]:
    """N -> (theta -> log m_N(theta)) for one model family."""
    kind = ModelKind(kind)

    def sequence(n: int, thetas: np.ndarray) -> np.ndarray:
        return log_mean_time(SserwModel(kind, n), thetas)

    return sequence


def h_sequence(kind: ModelKind) -> Callable[[int, np.ndarray], np.ndarray]:
    """N -> h_N for one model family."""
    log_mean = log_mean_sequence(kind)

    def sequence(n: int, thetas: np.ndarray) -> np.ndarray:
        return log_mean(n, thetas) / n

    return sequence


# =============================================================================
# ASYMPTOTICS
# =============================================================================

@dataclass(frozen=True)
class AsymptoticProfile:
    """Limit h of h_N with derivatives, and m_bar = lim m_N / a_N where it exists."""
    kind: ModelKind
    h_limit: Callable[[np.ndarray], np.ndarray]
    h_prime: Callable[[np.ndarray], np.ndarray]
    h_second: Callable[[np.ndarray], np.ndarray]
    m_bar: Optional[Callable[[np.ndarray], np.ndarray]] = None
    a_n: Optional[Callable[[int], float]] = None

    def h_n(self, n: int, thetas: ThetaLike) -> np.ndarray:
        return h_n(SserwModel(self.kind, n), thetas)


def _arr(theta: ThetaLike) -> np.ndarray:
    return np.asarray(theta, dtype=float)


def _inverse_gap(theta: np.ndarray) -> np.ndarray:
    """1/|1 - 2 theta| with the convention 1/0 = inf."""
    with np.errstate(divide="ignore"):
        return 1.0 / np.abs(1.0 - 2.0 * theta)


def _flat_profile() -> AsymptoticProfile:
    zero = lambda th: np.zeros_like(_arr(th))
    return AsymptoticProfile(
        kind=ModelKind.FLAT,
        h_limit=zero,
        h_prime=zero,
        h_second=zero,
        m_bar=lambda th: _inverse_gap(_arr(th)),
        a_n=float,
    )


def _single_well_profile() -> AsymptoticProfile:
    def h(th):
        th = _arr(th)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(th < 0.5, np.log1p(-th) - np.log(th), 0.0)

    def h1(th):
        th = _arr(th)
        with np.errstate(divide="ignore"):
            return np.where(th < 0.5, -1.0 / (th * (1.0 - th)), 0.0)

    def h2(th):
        th = _arr(th)
        with np.errstate(divide="ignore"):
            return np.where(th < 0.5, (1.0 - 2.0 * th) / (th * (1.0 - th)) ** 2, 0.0)

    def m_bar(th):
        th = _arr(th)
        return np.where(th >= 0.5, _inverse_gap(th), np.inf)

    return AsymptoticProfile(
        kind=ModelKind.SINGLE_WELL, h_limit=h, h_prime=h1, h_second=h2, m_bar=m_bar, a_n=float,
    )


def _alternating_profile() -> AsymptoticProfile:
    def h(th):
        th = _arr(th)
        with np.errstate(divide="ignore"):
            return np.abs(np.log1p(-th) - np.log(th))

    def h1(th):
        th = _arr(th)
        with np.errstate(divide="ignore"):
            return np.sign(th - 0.5) / (th * (1.0 - th))

    def h2(th):
        th = _arr(th)
        with np.errstate(divide="ignore"):
            return np.abs(1.0 - 2.0 * th) / (th * (1.0 - th)) ** 2

    return AsymptoticProfile(kind=ModelKind.ALTERNATING_WELLS, h_limit=h, h_prime=h1, h_second=h2)


_PROFILES = {
    ModelKind.FLAT: _flat_profile,
    ModelKind.SINGLE_WELL: _single_well_profile,
    ModelKind.ALTERNATING_WELLS: _alternating_profile,
}


def asymptotic_profile(model: Union[SserwModel, ModelKind]) -> AsymptoticProfile:
    kind = model.kind if isinstance(model, SserwModel) else ModelKind(model)
    return _PROFILES[kind]()


# =============================================================================
# CLASSICAL GAMBLER'S RUIN AND EXIT SIDE
# =============================================================================

def gambler_ruin_time(start: int, n: int, theta: float) -> float:
    """E_i[tau] for the walk on {0..N} with up-probability theta, absorbed at 0 and N."""
    theta = _check_theta(theta)
    if not 0 <= start <= n:
        raise DomainError(f"start {start} outside 0..{n}")
    if start in (0, n):
        return 0.0
    if theta == 0.5:
        return float(start * (n - start))
    if theta in (0.0, 1.0):
        return float(start if theta == 0.0 else n - start)
    u = 1.0 - 2.0 * theta
    log_r = math.log1p(-theta) - math.log(theta)
    if log_r > 0:
        ratio = math.exp((start - n) * log_r) * (-math.expm1(-start * log_r)) / (-math.expm1(-n * log_r))
    else:
        ratio = math.expm1(start * log_r) / math.expm1(n * log_r)
    return start / u - (n / u) * ratio


def exit_probability(model: SserwModel, theta: float) -> float:
    """P(the walk leaves through the right target), from the exact absorption solve."""
    spec = model.chain_spec()
    return exit_distribution(spec, theta)[model.half_width]
