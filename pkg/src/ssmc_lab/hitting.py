"""
Exact hitting-time computations for a ChainSpec at fixed theta.

Expected hitting times solve (I - Q_ff) m = 1 on the free states X \\ T.
Birth-death blocks use a subtraction-free elimination on the bands, which
keeps full relative accuracy even when m is astronomically large; other
chains use dense LU (|X \\ T| <= 2048) or a sparse solve.

Survival curves S(t) = P(tau > t) iterate the substochastic restriction of
Q from the unit mass at the origin and report 1 minus the compensated
absorbed mass. Horizons past the configured step limit are tabulated on a
uniform grid; the stride power and its absorbed mass come from repeated
squaring.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.sparse import csc_matrix, csr_matrix, identity
from scipy.sparse.csgraph import breadth_first_order
from scipy.sparse.linalg import spsolve

from ssmc_lab.config import settings
from ssmc_lab.core import ChainSpec
from ssmc_lab.errors import ChainSpecError, NumericalError, PreconditionError, UnreachableTargetError

logger = logging.getLogger(__name__)

DENSE_LIMIT = 2048
RESIDUAL_TOL = 1e-10
DEFAULT_HORIZON_MEANS = 20
POWER_BLOCK_ELEMENTS = 2 ** 22
MAX_HORIZON = 2 ** 62


# =============================================================================
# ABSORBED LINEAR SYSTEMS
# =============================================================================

def _solve_birth_death(up: np.ndarray, down: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """
    Solve (up+down) m_i - down_i m_{i-1} - up_i m_{i+1} = b_i with zero boundaries.

    Pivots are rebuilt as up_i + e_i where e_i is the mass escaping downward
    from the eliminated prefix, so no step subtracts.
    """
    up = np.asarray(up, dtype=float).tolist()
    down = np.asarray(down, dtype=float).tolist()
    rhs_fwd = np.asarray(rhs, dtype=float).tolist()
    n = len(up)
    pivots = [0.0] * n
    escape = down[0]
    pivots[0] = up[0] + escape
    for i in range(1, n):
        if pivots[i - 1] == 0.0:
            raise NumericalError(f"zero pivot at band row {i - 1}")
        factor = down[i] / pivots[i - 1]
        escape *= factor
        pivots[i] = up[i] + escape
        rhs_fwd[i] += factor * rhs_fwd[i - 1]
    if pivots[n - 1] == 0.0:
        raise NumericalError(f"zero pivot at band row {n - 1}")
    solution = [0.0] * n
    solution[n - 1] = rhs_fwd[n - 1] / pivots[n - 1]
    for i in range(n - 2, -1, -1):
        solution[i] = (rhs_fwd[i] + up[i] * solution[i + 1]) / pivots[i]
    return np.asarray(solution)


class _AbsorbedSystem:
    """(I - Q) on the free states, solved by the cheapest exact method available."""

    def __init__(self, method: str, operator, factor=None, bands: Optional[Tuple[np.ndarray, np.ndarray]] = None):
        self.method = method
        self._operator = operator
        self._factor = factor
        self._bands = bands

    @classmethod
    def from_bands(cls, up: np.ndarray, down: np.ndarray) -> "_AbsorbedSystem":
        return cls("banded", None, bands=(np.asarray(up, dtype=float), np.asarray(down, dtype=float)))

    @classmethod
    def from_matrix(cls, q: np.ndarray, free: np.ndarray) -> "_AbsorbedSystem":
        bands = _birth_death_bands(q, free)
        if bands is not None:
            return cls.from_bands(*bands)
        q_ff = q[np.ix_(free, free)]
        operator = np.eye(len(free)) - q_ff
        if len(free) <= DENSE_LIMIT:
            return cls("dense", operator, factor=linalg.lu_factor(operator))
        sparse_op = csc_matrix(identity(len(free), format="csc") - csc_matrix(q_ff))
        return cls("sparse", sparse_op)

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self._bands is not None:
            up, down = self._bands
            out = (up + down) * x
            out[1:] -= down[1:] * x[:-1]
            out[:-1] -= up[:-1] * x[1:]
            return out
        return self._operator @ x

    def _raw_solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.method == "dense":
            return linalg.lu_solve(self._factor, rhs)
        return spsolve(self._operator, rhs)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._bands is not None:
            up, down = self._bands
            return _solve_birth_death(up, down, rhs)
        x = self._raw_solve(rhs)
        # one step of iterative refinement
        return x + self._raw_solve(rhs - self.apply(x))

    def residual(self, x: np.ndarray, rhs: np.ndarray) -> float:
        return float(np.max(np.abs(rhs - self.apply(x))))


def _birth_death_bands(q: np.ndarray, free: np.ndarray) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """(up, down) when the free states are a contiguous nearest-neighbour block."""
    if free.size == 0 or np.any(np.diff(free) != 1):
        return None
    n = q.shape[0]
    block = q[free[0]:free[-1] + 1]
    distance = np.abs(np.arange(n)[None, :] - free[:, None])
    if np.any(block[distance > 1] != 0):
        return None
    up = np.where(free + 1 < n, q[free, np.minimum(free + 1, n - 1)], 0.0)
    down = np.where(free - 1 >= 0, q[free, np.maximum(free - 1, 0)], 0.0)
    return up, down


def _states_reaching(q: np.ndarray, absorbing: Iterable[int]) -> np.ndarray:
    """Boolean mask of states with a path into the absorbing set."""
    absorbing = list(absorbing)
    adjacency = q > 0
    adjacency[absorbing, :] = False
    reverse = csr_matrix(adjacency.T)
    reach = np.zeros(q.shape[0], dtype=bool)
    for a in absorbing:
        reach[breadth_first_order(reverse, a, directed=True, return_predecessors=False)] = True
    return reach


def _check_reachable(spec: ChainSpec, q: np.ndarray, free: np.ndarray, theta: float, absorbing: Iterable[int]) -> None:
    reach = _states_reaching(q, absorbing)
    stuck = free[~reach[free]]
    if stuck.size:
        raise UnreachableTargetError([spec.label_of(int(s)) for s in stuck], theta)


def birth_death_expectations(up: np.ndarray, down: np.ndarray) -> np.ndarray:
    """
    Expected absorption times for a nearest-neighbour block from its bands.

    Args:
        up: P(i -> i+1) for each free state, left to right
        down: P(i -> i-1) for each free state

    Returns:
        Vector of E_i[tau] over the free states
    """
    system = _AbsorbedSystem.from_bands(up, down)
    ones = np.ones(len(up))
    expectations = system.solve(ones)
    if not np.all(np.isfinite(expectations)):
        raise NumericalError("birth-death solve produced non-finite expectations")
    return expectations


# =============================================================================
# EXPECTATIONS
# =============================================================================

@dataclass(frozen=True)
class HittingSolution:
    """E_x[tau_T] for every free state x."""
    theta: float
    free_states: np.ndarray
    expectations: np.ndarray
    origin: int
    residual: float
    method: str

    @property
    def at_origin(self) -> float:
        return self.at(self.origin)

    def at(self, state: int) -> float:
        pos = np.searchsorted(self.free_states, state)
        if pos >= len(self.free_states) or self.free_states[pos] != state:
            raise PreconditionError(f"state {state} is a target")
        return float(self.expectations[pos])


def expected_hitting(spec: ChainSpec, theta: float) -> HittingSolution:
    """
    Solve the first-step system (I - Q_ff) m = 1 at theta.

    Raises:
        UnreachableTargetError: some free state cannot reach T
        NumericalError: residual above 1e-10 * max(m)
    """
    if spec.origin in spec.targets:
        raise ChainSpecError("origin in target set")
    q = spec.matrix(theta)
    free = spec.free_states
    _check_reachable(spec, q, free, theta, spec.targets)

    system = _AbsorbedSystem.from_matrix(q, free)
    ones = np.ones(len(free))
    expectations = system.solve(ones)
    scale = float(np.max(np.abs(expectations)))
    residual = system.residual(expectations, ones)
    if not np.isfinite(scale) or residual > RESIDUAL_TOL * scale:
        raise NumericalError(
            f"hitting solve at theta={theta} failed: residual {residual:.3e} for |m|={scale:.3e}"
        )
    if np.any(expectations < 1.0 - 1e-9):
        raise NumericalError(f"hitting solve at theta={theta} returned expectations below 1")

    logger.debug(f"Solved hitting system for {spec.name} at theta={theta} via {system.method}")
    return HittingSolution(
        theta=theta,
        free_states=free,
        expectations=expectations,
        origin=spec.origin,
        residual=residual,
        method=system.method,
    )


def exit_distribution(spec: ChainSpec, theta: float) -> Dict[int, float]:
    """Probability of absorbing at each target, starting from the origin."""
    if spec.origin in spec.targets:
        raise ChainSpecError("origin in target set")
    q = spec.matrix(theta)
    free = spec.free_states
    _check_reachable(spec, q, free, theta, spec.targets)
    system = _AbsorbedSystem.from_matrix(q, free)
    origin_pos = int(np.searchsorted(free, spec.origin))

    result = {}
    for target in sorted(spec.targets):
        probs = system.solve(q[free, target])
        result[spec.label_of(target)] = float(probs[origin_pos])
    return result


# =============================================================================
# DISTRIBUTIONS
# =============================================================================

@dataclass(frozen=True)
class HittingDistribution:
    """S(t) = P(tau > t) on times 0, stride, 2*stride, ... up to the horizon."""
    theta: float
    times: np.ndarray
    survival: np.ndarray
    stride: int

    @property
    def horizon(self) -> int:
        return int(self.times[-1])

    @property
    def truncated_mass(self) -> float:
        return float(self.survival[-1])

    def survival_at(self, t) -> np.ndarray:
        """S at arbitrary times; between grid nodes of a strided curve S is interpolated linearly."""
        t = np.floor(np.asarray(t, dtype=float))
        if self.stride == 1:
            idx = np.clip(t, 0, self.horizon).astype(np.int64)
            return np.where(t < 0, 1.0, self.survival[idx])
        return np.interp(t, self.times, self.survival, left=1.0, right=self.truncated_mass)

    def truncated_mean(self) -> float:
        """E[min(tau, horizon)] = sum of S(t) over t < horizon."""
        if self.stride == 1:
            return math.fsum(self.survival[:-1].tolist())
        mids = 0.5 * (self.survival[:-1] + self.survival[1:])
        return self.stride * math.fsum(mids.tolist())

    def mean_estimate(self) -> float:
        """Truncated mean plus a geometric estimate of the tail beyond the horizon."""
        last = self.truncated_mass
        if last == 0.0 or len(self.survival) < 2:
            return self.truncated_mean()
        previous = float(self.survival[-2])
        rate = (last / previous) ** (1.0 / self.stride) if previous > 0 else 0.0
        tail = last / (1.0 - rate) if rate < 1.0 else math.inf
        return self.truncated_mean() + tail


class _CompensatedSum:
    """Neumaier-compensated running total, elementwise over a fixed shape."""

    def __init__(self, shape=()):
        self._total = np.zeros(shape)
        self._carry = np.zeros(shape)

    def add(self, value) -> None:
        value = np.asarray(value, dtype=float)
        total = self._total + value
        big = np.abs(self._total) >= np.abs(value)
        self._carry += np.where(big, (self._total - total) + value, (value - total) + self._total)
        self._total = total

    @property
    def value(self) -> np.ndarray:
        return self._total + self._carry


def _block_powers(step: np.ndarray) -> np.ndarray:
    n = step.shape[0]
    block = max(1, min(64, POWER_BLOCK_ELEMENTS // max(n * n, 1)))
    powers = np.empty((block, n, n))
    powers[0] = step
    for b in range(1, block):
        powers[b] = powers[b - 1] @ step
    return powers


def _power_with_exit(step: np.ndarray, exit_mass: np.ndarray, power: int) -> Tuple[np.ndarray, np.ndarray]:
    """(step^power, mass absorbed within power steps from each state), by repeated squaring."""
    result, absorbed = np.eye(step.shape[0]), np.zeros(step.shape[0])
    base, base_exit = step, exit_mass
    while power:
        if power & 1:
            absorbed = absorbed + result @ base_exit
            result = result @ base
        power >>= 1
        if power:
            base_exit = base_exit + base @ base_exit
            base = base @ base
    return result, absorbed


def _absorbed_to_survival(absorbed: np.ndarray) -> np.ndarray:
    # rounding of the compensated total can step back by an ulp
    return np.clip(1.0 - np.maximum.accumulate(absorbed, axis=0), 0.0, 1.0)


def _iterate_row(step: np.ndarray, exit_mass: np.ndarray, start: int, count: int) -> np.ndarray:
    """
    S(t) for t = 0..count from the unit mass at start.

    S is 1 minus the absorbed mass, accumulated with compensation block by
    block.
    """
    powers = _block_powers(step)
    vector = np.zeros(step.shape[0])
    vector[start] = 1.0
    absorbed = _CompensatedSum()
    out = np.zeros(count + 1)
    t = 0
    while t < count:
        b = min(len(powers), count - t)
        rows = np.einsum("i,bij->bj", vector, powers[:b])
        leaked = np.maximum(np.vstack([vector, rows[:b - 1]]) @ exit_mass, 0.0)
        out[t + 1:t + 1 + b] = absorbed.value + np.cumsum(leaked)
        absorbed.add(leaked.sum())
        vector = rows[b - 1]
        t += b
    return _absorbed_to_survival(out)


def _iterate_columns(step: np.ndarray, exit_mass: np.ndarray, count: int) -> np.ndarray:
    """S_x(t) for every start x and t = 0..count, one row per t."""
    n = step.shape[0]
    powers = _block_powers(step)
    leak = exit_mass.astype(float)
    absorbed = _CompensatedSum(n)
    out = np.zeros((count + 1, n))
    t = 0
    while t < count:
        b = min(len(powers), count - t)
        cols = np.einsum("bij,j->bi", powers[:b], leak)
        leaked = np.maximum(np.vstack([leak, cols[:b - 1]]), 0.0)
        out[t + 1:t + 1 + b] = absorbed.value + np.cumsum(leaked, axis=0)
        absorbed.add(leaked.sum(axis=0))
        leak = cols[b - 1]
        t += b
    return _absorbed_to_survival(out)


def _time_grid(horizon: int, step_limit: int, grid_points: int) -> Tuple[int, int]:
    """(stride, node count - 1) covering the horizon."""
    if horizon <= step_limit:
        return 1, horizon
    stride = int(math.ceil(horizon / grid_points))
    return stride, int(math.ceil(horizon / stride))


def hitting_distribution(
    spec: ChainSpec,
    theta: float,
    horizon: Optional[int] = None,
    step_limit: Optional[int] = None,
    grid_points: Optional[int] = None,
) -> HittingDistribution:
    """
    Survival curve of the hitting time of T from the origin.

    Args:
        spec: Chain to analyse
        theta: Fixed state
        horizon: Last time covered; defaults to 20 * m(theta)
        step_limit: Largest horizon iterated step by step
        grid_points: Grid size used beyond the step limit

    Returns:
        HittingDistribution with truncated_mass = S(horizon)
    """
    step_limit = step_limit or settings.exact_step_limit
    grid_points = grid_points or settings.survival_grid_points
    if spec.origin in spec.targets:
        raise ChainSpecError("origin in target set")
    if horizon is None:
        mean = expected_hitting(spec, theta).at_origin
        horizon = int(math.ceil(DEFAULT_HORIZON_MEANS * mean))
    if horizon < 1:
        raise PreconditionError("horizon must be at least 1")
    if horizon > MAX_HORIZON:
        raise NumericalError(f"horizon {horizon:.3e} does not fit the int64 time grid")

    q = spec.matrix(theta)
    free = spec.free_states
    q_ff = q[np.ix_(free, free)]
    exit_mass = q[np.ix_(free, sorted(spec.targets))].sum(axis=1)
    start = int(np.searchsorted(free, spec.origin))

    stride, nodes = _time_grid(horizon, step_limit, grid_points)
    if stride == 1:
        survival = _iterate_row(q_ff, exit_mass, start, nodes)
    else:
        logger.warning(
            f"Horizon {horizon} beyond step limit {step_limit}: tabulating survival with stride {stride}"
        )
        step, step_exit = _power_with_exit(q_ff, exit_mass, stride)
        survival = _iterate_row(step, step_exit, start, nodes)

    dist = HittingDistribution(
        theta=theta,
        times=np.arange(nodes + 1, dtype=np.int64) * stride,
        survival=survival,
        stride=stride,
    )
    if dist.truncated_mass > 1e-6:
        logger.warning(f"Survival curve at theta={theta} truncated with mass {dist.truncated_mass:.3e}")
    return dist


@dataclass(frozen=True)
class MinHittingSurvival:
    """Per-start survival of the first hit of T union extra absorbers."""
    theta: float
    times: np.ndarray
    free_states: np.ndarray
    curves: np.ndarray

    @property
    def sup_survival(self) -> np.ndarray:
        return self.curves.max(axis=1, initial=0.0)

    def sup_at(self, t: int) -> float:
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        return float(self.sup_survival[max(idx, 0)])

    def at(self, state: int, t: int) -> float:
        pos = int(np.searchsorted(self.free_states, state))
        if pos >= len(self.free_states) or self.free_states[pos] != state:
            raise PreconditionError(f"state {state} is absorbing")
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        return float(self.curves[max(idx, 0), pos])


def min_hitting_survival(
    spec: ChainSpec,
    theta: float,
    extra_absorbers: Iterable[int],
    horizon: float,
    step_limit: Optional[int] = None,
    grid_points: Optional[int] = None,
) -> MinHittingSurvival:
    """
    S_x(t) = P_x(hit of T union extra_absorbers > t) for every start x.

    A non-integer horizon is floored.
    """
    step_limit = step_limit or settings.exact_step_limit
    grid_points = grid_points or settings.survival_grid_points
    horizon = int(math.floor(horizon))
    if horizon < 0:
        raise PreconditionError("horizon must be nonnegative")

    absorbing = set(spec.targets) | {int(a) for a in extra_absorbers}
    mask = np.ones(spec.n_states, dtype=bool)
    mask[list(absorbing)] = False
    free = np.flatnonzero(mask)
    q = spec.matrix(theta)
    q_r = q[np.ix_(free, free)]
    exit_mass = q[np.ix_(free, sorted(absorbing))].sum(axis=1)

    stride, nodes = _time_grid(max(horizon, 1), step_limit, grid_points)
    if horizon == 0:
        nodes = 0
    step, step_exit = (q_r, exit_mass) if stride == 1 else _power_with_exit(q_r, exit_mass, stride)
    curves = _iterate_columns(step, step_exit, nodes) if free.size else np.zeros((nodes + 1, 0))
    return MinHittingSurvival(
        theta=theta,
        times=np.arange(nodes + 1, dtype=np.int64) * stride,
        free_states=free,
        curves=curves,
    )
