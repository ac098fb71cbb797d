"""Exception hierarchy for ssmc-lab."""

from typing import Iterable, Optional


class SsmcError(Exception):
    """Base class for every error raised by the library."""


class ChainSpecError(SsmcError, ValueError):
    """A chain specification cannot be used for simulation or solving."""


class DomainError(SsmcError, ValueError):
    """A parameter lies outside the domain of a formula."""


class PreconditionError(SsmcError, ValueError):
    """Inputs violate the stated preconditions of an analysis."""


class BinningError(SsmcError):
    """A sampled state falls outside the binning it is accounted on."""


class NumericalError(SsmcError):
    """A solve or quadrature produced an unusable result."""


class DivergentNormalizerError(NumericalError):
    """E_mu[m] is numerically infinite."""

    def __init__(self, message: str, singular_points: Iterable[float] = ()):
        super().__init__(message)
        self.singular_points = tuple(singular_points)


class UnreachableTargetError(NumericalError):
    """The absorbed linear system is singular: some states never reach T."""

    def __init__(self, states: Iterable[int], theta: Optional[float] = None):
        self.states = tuple(states)
        self.theta = theta
        where = f" at theta={theta}" if theta is not None else ""
        super().__init__(
            f"target set unreachable{where} from states {list(self.states)}"
        )


class BudgetExceededError(SsmcError):
    """A Monte Carlo or record budget guard tripped."""

    def __init__(self, guard: str, message: str):
        super().__init__(f"{guard}: {message}")
        self.guard = guard


class ConfigError(SsmcError):
    """Experiment configuration is invalid."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        super().__init__(message)
