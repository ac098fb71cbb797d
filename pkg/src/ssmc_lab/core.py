"""
SSMC data model and exact simulation of the coupled (location, state) chain.

A chain is described by a finite location space, a parameterized transition
family Q^(theta), an origin x0 and a target set T. Whenever the location
process hits T it is reset to x0 and a fresh state is drawn from mu.

Randomness contract: every simulation consumes a single PCG64 stream of
U(0,1) draws in a fixed order. The initial state draw comes first, then one
uniform per movement step; a restart step consumes exactly one uniform, used
for the fresh state draw. simulate_steps and simulate_switches therefore see
the same cycles for the same seed.
"""

import logging
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, stats
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from ssmc_lab.errors import (
    BudgetExceededError,
    ChainSpecError,
    DomainError,
    PreconditionError,
    UnreachableTargetError,
)

logger = logging.getLogger(__name__)

STOCHASTIC_TOL = 1e-12
DISCRETE_WEIGHT_TOL = 1e-12
DENSITY_MASS_TOL = 1e-8
INVERSE_CDF_GRID = 2 ** 14
UNIFORM_BLOCK = 4096

TransitionFamily = Callable[[float], np.ndarray]


# =============================================================================
# PARAMETER SPACE AND STATE DISTRIBUTIONS
# =============================================================================

@dataclass(frozen=True)
class ParamSpace:
    """Either a finite sorted set of atoms or a closed interval [lower, upper]."""
    atoms: Optional[Tuple[float, ...]] = None
    lower: Optional[float] = None
    upper: Optional[float] = None

    def __post_init__(self):
        if self.atoms is not None:
            if self.lower is not None or self.upper is not None:
                raise DomainError("parameter space is either atoms or an interval, not both")
            atoms = tuple(float(a) for a in self.atoms)
            if not atoms:
                raise DomainError("parameter space needs at least one atom")
            if any(b <= a for a, b in zip(atoms, atoms[1:])):
                raise DomainError("atoms must be distinct and sorted")
            object.__setattr__(self, "atoms", atoms)
        else:
            if self.lower is None or self.upper is None:
                raise DomainError("interval parameter space needs lower and upper")
            if not self.lower < self.upper:
                raise DomainError(f"empty interval [{self.lower}, {self.upper}]")

    @classmethod
    def interval(cls, lower: float, upper: float) -> "ParamSpace":
        return cls(lower=float(lower), upper=float(upper))

    @classmethod
    def discrete(cls, atoms: Iterable[float]) -> "ParamSpace":
        return cls(atoms=tuple(atoms))

    def contains(self, theta: float) -> bool:
        if self.atoms is not None:
            return any(abs(theta - a) <= 1e-12 for a in self.atoms)
        return self.lower - 1e-12 <= theta <= self.upper + 1e-12


UNIT_INTERVAL = ParamSpace.interval(0.0, 1.0)


class StateDistribution:
    """
    The sampling law mu on the parameter space.

    Discrete laws carry sorted atoms with positive weights. Continuous laws
    carry a density on [lower, upper] and an inverse CDF; a scipy frozen
    distribution supplies both for the shipped families, otherwise the
    inverse CDF is tabulated on a 2^14-point grid.
    """

    def __init__(
        self,
        *,
        atoms: Optional[Sequence[float]] = None,
        weights: Optional[Sequence[float]] = None,
        frozen=None,
        density: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        lower: Optional[float] = None,
        upper: Optional[float] = None,
        label: str = "",
    ):
        self.label = label
        self._frozen = frozen
        self._density = density
        if atoms is not None:
            self._init_discrete(atoms, weights)
        else:
            if lower is None or upper is None or not lower < upper:
                raise DomainError("continuous distribution needs lower < upper")
            self.kind = "continuous"
            self.lower = float(lower)
            self.upper = float(upper)
            self._atoms = None
            self._weights = None
            self._cumulative = None
            if frozen is None:
                self._init_tabulated()
            else:
                self._grid = None
                self._cdf_grid = None
                self._support = (self.lower, self.upper)

    def _init_discrete(self, atoms: Sequence[float], weights: Optional[Sequence[float]]):
        atoms_arr = np.asarray(atoms, dtype=float)
        if weights is None:
            weights_arr = np.full(atoms_arr.shape, 1.0 / max(atoms_arr.size, 1))
        else:
            weights_arr = np.asarray(weights, dtype=float)
        if atoms_arr.ndim != 1 or atoms_arr.size == 0 or atoms_arr.shape != weights_arr.shape:
            raise DomainError("atoms and weights must be matching nonempty sequences")
        if np.any(weights_arr <= 0):
            raise DomainError("discrete weights must be positive")
        if abs(weights_arr.sum() - 1.0) > DISCRETE_WEIGHT_TOL:
            raise DomainError(f"discrete weights sum to {weights_arr.sum()!r}, not 1")
        order = np.argsort(atoms_arr)
        atoms_arr = atoms_arr[order]
        weights_arr = weights_arr[order]
        if np.any(np.diff(atoms_arr) <= 0):
            raise DomainError("atoms must be distinct")
        self.kind = "discrete"
        self._atoms = atoms_arr
        self._weights = weights_arr
        cumulative = np.cumsum(weights_arr).tolist()
        cumulative[-1] = 1.0
        self._cumulative = cumulative
        self._atom_list = atoms_arr.tolist()
        self.lower = float(atoms_arr[0])
        self.upper = float(atoms_arr[-1])
        self._support = (self.lower, self.upper)

    def _init_tabulated(self):
        grid = np.linspace(self.lower, self.upper, INVERSE_CDF_GRID + 1)
        values = np.asarray(self._density(grid), dtype=float)
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise DomainError("density must be finite and nonnegative")
        mass, _ = integrate.quad(
            lambda t: float(self._density(np.array([t]))[0]),
            self.lower, self.upper, limit=200,
        )
        if abs(mass - 1.0) > DENSITY_MASS_TOL:
            raise DomainError(f"density integrates to {mass!r}, not 1")
        cdf = integrate.cumulative_trapezoid(values, grid, initial=0.0)
        cdf /= cdf[-1]
        self._grid = grid
        self._cdf_grid = cdf
        positive = np.flatnonzero(values > 0)
        self._support = (float(grid[positive[0]]), float(grid[positive[-1]]))

    # ---- constructors -------------------------------------------------------

    @classmethod
    def dirac(cls, theta: float) -> "StateDistribution":
        return cls(atoms=[theta], weights=[1.0], label=f"dirac({theta})")

    @classmethod
    def discrete(cls, atoms: Sequence[float], weights: Optional[Sequence[float]] = None) -> "StateDistribution":
        return cls(atoms=atoms, weights=weights, label="discrete")

    @classmethod
    def uniform(cls, lower: float, upper: float) -> "StateDistribution":
        frozen = stats.uniform(loc=lower, scale=upper - lower)
        return cls(frozen=frozen, lower=lower, upper=upper, label=f"uniform({lower}, {upper})")

    @classmethod
    def beta(cls, alpha: float, beta: float, lower: float = 0.0, upper: float = 1.0) -> "StateDistribution":
        if alpha <= 0 or beta <= 0:
            raise DomainError("beta shape parameters must be positive")
        frozen = stats.beta(alpha, beta, loc=lower, scale=upper - lower)
        return cls(frozen=frozen, lower=lower, upper=upper, label=f"beta({alpha}, {beta})")

    @classmethod
    def from_density(cls, density: Callable[[np.ndarray], np.ndarray], lower: float, upper: float) -> "StateDistribution":
        return cls(density=density, lower=lower, upper=upper, label="density")

    # ---- queries ------------------------------------------------------------

    @property
    def is_discrete(self) -> bool:
        return self.kind == "discrete"

    @property
    def atoms(self) -> np.ndarray:
        if self._atoms is None:
            raise PreconditionError("continuous distribution has no atoms")
        return self._atoms.copy()

    @property
    def weights(self) -> np.ndarray:
        if self._weights is None:
            raise PreconditionError("continuous distribution has no atom weights")
        return self._weights.copy()

    @property
    def support_bounds(self) -> Tuple[float, float]:
        """(a*, b*): the smallest closed interval carrying all the mass."""
        return self._support

    def pdf(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.is_discrete:
            raise PreconditionError("discrete distribution has no density")
        if self._frozen is not None:
            return self._frozen.pdf(theta)
        inside = (theta >= self.lower) & (theta <= self.upper)
        return np.where(inside, np.asarray(self._density(theta), dtype=float), 0.0)

    def logpdf(self, theta) -> np.ndarray:
        if self._frozen is not None:
            return self._frozen.logpdf(np.asarray(theta, dtype=float))
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(theta))

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.is_discrete:
            idx = np.searchsorted(self._atoms, x, side="right")
            cumulative = np.concatenate([[0.0], np.asarray(self._cumulative)])
            return cumulative[idx]
        if self._frozen is not None:
            return self._frozen.cdf(x)
        return np.interp(x, self._grid, self._cdf_grid, left=0.0, right=1.0)

    def ppf(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.is_discrete:
            idx = np.searchsorted(np.asarray(self._cumulative), u, side="right")
            return self._atoms[np.minimum(idx, self._atoms.size - 1)]
        if self._frozen is not None:
            return self._frozen.ppf(u)
        return np.interp(u, self._cdf_grid, self._grid)

    def draw(self, u: float) -> float:
        """Map one U(0,1) draw to a state by inverse CDF."""
        if self._cumulative is not None:
            return self._atom_list[bisect_right(self._cumulative, u)]
        return float(self.ppf(u))

    def describe(self) -> Dict[str, object]:
        if self.is_discrete:
            return {
                "kind": "discrete",
                "atoms": self._atoms.tolist(),
                "weights": self._weights.tolist(),
            }
        return {
            "kind": "continuous",
            "label": self.label,
            "lower": self.lower,
            "upper": self.upper,
            "support": list(self._support),
        }

    def __repr__(self) -> str:
        return f"StateDistribution({self.label or self.kind})"


# =============================================================================
# CHAIN SPECIFICATION
# =============================================================================

@dataclass(frozen=True, eq=False)
class ChainSpec:
    """Finite location space, transition family Q^(theta), origin and targets."""
    n_states: int
    origin: int
    targets: frozenset
    transition_family: TransitionFamily
    param_space: ParamSpace = UNIT_INTERVAL
    labels: Optional[Tuple[int, ...]] = None
    name: str = "chain"

    def __post_init__(self):
        if self.n_states < 1:
            raise ChainSpecError("n_states must be positive")
        targets = frozenset(int(t) for t in self.targets)
        if not targets:
            raise ChainSpecError("target set must be nonempty")
        if not 0 <= self.origin < self.n_states:
            raise ChainSpecError(f"origin {self.origin} outside 0..{self.n_states - 1}")
        if any(not 0 <= t < self.n_states for t in targets):
            raise ChainSpecError("target index outside the location space")
        if self.labels is not None and len(self.labels) != self.n_states:
            raise ChainSpecError("labels must name every state")
        object.__setattr__(self, "targets", targets)

    @property
    def free_states(self) -> np.ndarray:
        """Indices of X \\ T in increasing order."""
        mask = np.ones(self.n_states, dtype=bool)
        mask[list(self.targets)] = False
        return np.flatnonzero(mask)

    def label_of(self, index: int) -> int:
        return self.labels[index] if self.labels is not None else index

    def index_of(self, label: int) -> int:
        if self.labels is None:
            return int(label)
        try:
            return self.labels.index(label)
        except ValueError:
            raise ChainSpecError(f"no state labelled {label}") from None

    def matrix(self, theta: float) -> np.ndarray:
        q = np.asarray(self.transition_family(theta), dtype=float)
        if q.shape != (self.n_states, self.n_states):
            raise ChainSpecError(
                f"transition family returned shape {q.shape}, expected "
                f"({self.n_states}, {self.n_states})"
            )
        return q


@dataclass
class ThetaCheck:
    theta: float
    violations: List[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations


@dataclass
class ValidationReport:
    """Per-theta findings plus structural violations of the chain spec itself."""
    structural: List[str]
    checks: List[ThetaCheck]

    @property
    def valid(self) -> bool:
        return not self.structural and all(c.valid for c in self.checks)

    @property
    def reasons(self) -> List[str]:
        found = list(self.structural)
        for check in self.checks:
            found.extend(r for r in check.violations if r not in found)
        return found

    def rows(self) -> List[Dict[str, object]]:
        """Flat (theta, reason) rows; structural violations carry theta None."""
        out: List[Dict[str, object]] = [{"theta": None, "reason": r} for r in self.structural]
        for check in self.checks:
            out.extend({"theta": check.theta, "reason": r} for r in check.violations)
        return out


def _support_digraph(spec: ChainSpec, q: np.ndarray) -> csr_matrix:
    """Edges of Q restricted to free rows; each target row points to the origin."""
    adjacency = q > 0
    for t in spec.targets:
        adjacency[t, :] = False
        adjacency[t, spec.origin] = True
    return csr_matrix(adjacency)


def validate(spec: ChainSpec, thetas: Sequence[float]) -> ValidationReport:
    """
    Check origin not in T, row-stochasticity and irreducibility per theta.

    Target rows are ignored by the dynamics and are not inspected; the
    irreducibility check runs on the renewal digraph, where every target
    links back to the origin.
    """
    thetas = [float(t) for t in thetas]
    if not thetas:
        raise PreconditionError("validate needs at least one theta")

    structural = []
    if spec.origin in spec.targets:
        structural.append("origin in target set")

    checks = []
    for theta in thetas:
        check = ThetaCheck(theta)
        checks.append(check)
        if not spec.param_space.contains(theta):
            check.violations.append(f"theta {theta} outside parameter space")
            continue
        q = spec.matrix(theta)
        for row in spec.free_states:
            if np.any(q[row] < 0):
                check.violations.append(f"row {row} has negative entries")
            elif abs(q[row].sum() - 1.0) > STOCHASTIC_TOL:
                check.violations.append(f"row {row} not stochastic")
        n_components, _ = connected_components(
            _support_digraph(spec, q), directed=True, connection="strong"
        )
        if n_components != 1:
            check.violations.append(
                f"not irreducible ({n_components} strongly connected components)"
            )

    report = ValidationReport(structural=structural, checks=checks)
    logger.debug(f"Validated {spec.name} on {len(thetas)} thetas: valid={report.valid}")
    return report


def require_simulable(spec: ChainSpec) -> None:
    if spec.origin in spec.targets:
        raise ChainSpecError("origin in target set")


# =============================================================================
# TRAJECTORIES AND RECORDS
# =============================================================================

@dataclass(frozen=True)
class SwitchRecord:
    """One renewal cycle: sampled state, inter-switching time, exit target."""
    theta: float
    tau: int
    exit_state: int

    def __post_init__(self):
        if self.tau < 1:
            raise ChainSpecError("tau must be at least 1")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """X_0..X_n, eta_0..eta_n and the switch times S_1 < S_2 < ..."""
    locations: np.ndarray
    states: np.ndarray
    switch_times: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.locations) - 1

    def cycles(self) -> List[SwitchRecord]:
        """
        Complete cycles as records; eta at S_i belongs to the closing cycle.

        tau counts movement steps only, so it is the hitting time of T from
        x0: S_1 for the first cycle, S_i - S_{i-1} - 1 afterwards since the
        restart step at S_{i-1} + 1 is spent returning to the origin.
        """
        records = []
        start = 0
        for s in self.switch_times.tolist():
            records.append(SwitchRecord(
                theta=float(self.states[s]),
                tau=s - start,
                exit_state=int(self.locations[s]),
            ))
            start = s + 1
        return records


class _UniformStream:
    """Block-buffered U(0,1) draws from one PCG64 generator."""

    def __init__(self, seed: int, block: int = UNIFORM_BLOCK):
        self._rng = np.random.default_rng(seed)
        self._block = block
        self._buffer: List[float] = []
        self._pos = 0

    def next(self) -> float:
        if self._pos == len(self._buffer):
            self._buffer = self._rng.random(self._block).tolist()
            self._pos = 0
        u = self._buffer[self._pos]
        self._pos += 1
        return u


class _TransitionTable:
    """Cumulative rows of Q^(theta) over successors, for inverse-CDF stepping."""

    def __init__(self, spec: ChainSpec, theta: float):
        q = spec.matrix(theta)
        self.theta = theta
        self.successors: List[Optional[List[int]]] = [None] * spec.n_states
        self.cumulative: List[Optional[List[float]]] = [None] * spec.n_states
        for row in spec.free_states.tolist():
            probs = q[row]
            if np.any(probs < 0):
                raise ChainSpecError(f"row {row} has negative entries at theta={theta}")
            total = probs.sum()
            if abs(total - 1.0) > STOCHASTIC_TOL:
                raise ChainSpecError(f"row {row} not stochastic at theta={theta} (sum={total!r})")
            probs = probs / total
            support = np.flatnonzero(probs > 0)
            cumulative = np.cumsum(probs[support]).tolist()
            cumulative[-1] = 1.0
            self.successors[row] = support.tolist()
            self.cumulative[row] = cumulative
        self._origin_reaches = self._reaches_target(spec)

    def _reaches_target(self, spec: ChainSpec) -> bool:
        seen = {spec.origin}
        frontier = [spec.origin]
        while frontier:
            x = frontier.pop()
            if x in spec.targets:
                return True
            for y in self.successors[x]:
                if y not in seen:
                    seen.add(y)
                    frontier.append(y)
        return False

    @property
    def origin_reaches_target(self) -> bool:
        return self._origin_reaches


class _TableCache:
    """Transition tables per theta; cached only for discrete mu."""

    def __init__(self, spec: ChainSpec, mu: StateDistribution):
        self._spec = spec
        self._cache: Optional[Dict[float, _TransitionTable]] = {} if mu.is_discrete else None

    def get(self, theta: float) -> _TransitionTable:
        if self._cache is None:
            return _TransitionTable(self._spec, theta)
        table = self._cache.get(theta)
        if table is None:
            table = _TransitionTable(self._spec, theta)
            self._cache[theta] = table
        return table


# =============================================================================
# SIMULATION
# =============================================================================

def simulate_steps(spec: ChainSpec, mu: StateDistribution, n: int, seed: int) -> Trajectory:
    """Simulate n steps of the SSMC started at (x0, mu)."""
    if n < 1:
        raise PreconditionError("n must be at least 1")
    require_simulable(spec)

    stream = _UniformStream(seed)
    next_u = stream.next
    tables = _TableCache(spec, mu)
    is_target = [i in spec.targets for i in range(spec.n_states)]
    origin = spec.origin

    theta = mu.draw(next_u())
    table = tables.get(theta)
    succ, cum = table.successors, table.cumulative
    x = origin
    locations = [x]
    states = [theta]
    switches = []
    for i in range(1, n + 1):
        if is_target[x]:
            x = origin
            theta = mu.draw(next_u())
            table = tables.get(theta)
            succ, cum = table.successors, table.cumulative
        else:
            x = succ[x][bisect_right(cum[x], next_u())]
            if is_target[x]:
                switches.append(i)
        locations.append(x)
        states.append(theta)

    logger.debug(f"Simulated {n} steps of {spec.name}: {len(switches)} switches")
    return Trajectory(
        locations=np.asarray(locations, dtype=np.int64),
        states=np.asarray(states, dtype=float),
        switch_times=np.asarray(switches, dtype=np.int64),
    )


def simulate_switches(
    spec: ChainSpec,
    mu: StateDistribution,
    k: int,
    seed: int,
    max_tau: Optional[int] = None,
) -> List[SwitchRecord]:
    """
    Simulate k renewal cycles, recording (theta, tau, exit state) for each.

    Args:
        spec: Chain to simulate
        mu: State distribution sampled at every restart
        k: Number of cycles
        seed: Seed of the uniform stream
        max_tau: Optional guard on the length of a single cycle

    Returns:
        List of k SwitchRecord, equal to Trajectory.cycles() of
        simulate_steps with the same seed
    """
    if k < 1:
        raise PreconditionError("k must be at least 1")
    require_simulable(spec)

    stream = _UniformStream(seed)
    next_u = stream.next
    tables = _TableCache(spec, mu)
    is_target = [i in spec.targets for i in range(spec.n_states)]
    origin = spec.origin

    records = []
    for _ in range(k):
        theta = mu.draw(next_u())
        table = tables.get(theta)
        if not table.origin_reaches_target:
            raise UnreachableTargetError([origin], theta)
        succ, cum = table.successors, table.cumulative
        x = origin
        tau = 0
        while True:
            x = succ[x][bisect_right(cum[x], next_u())]
            tau += 1
            if is_target[x]:
                break
            if max_tau is not None and tau >= max_tau:
                raise BudgetExceededError(
                    "cycle length guard",
                    f"cycle at theta={theta} exceeded {max_tau} steps",
                )
        records.append(SwitchRecord(theta=theta, tau=tau, exit_state=x))

    logger.debug(f"Simulated {k} cycles of {spec.name}")
    return records


def replica_seeds(master_seed: int, count: int) -> List[int]:
    """
    Per-replica seeds spawned from a master seed.

    Replica i always receives the same seed whatever the number of workers.
    """
    children = np.random.SeedSequence(master_seed).spawn(count)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]
