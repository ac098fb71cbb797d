"""Shifted log-domain quadrature shared by occupation and dominance analyses."""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from ssmc_lab.errors import NumericalError

logger = logging.getLogger(__name__)

LogIntegrand = Callable[[np.ndarray], np.ndarray]

DEFAULT_EPSREL = 1e-8
SHIFT_GRID = 1025
FAILURE_REL_ERR = 1e-3


def grid_shift(log_f: LogIntegrand, lower: float, upper: float, points: int = SHIFT_GRID) -> float:
    """Largest finite value of log_f on a uniform grid; +inf if log_f blows up there."""
    grid = np.linspace(lower, upper, points)
    values = np.asarray(log_f(grid), dtype=float)
    if np.any(np.isposinf(values)):
        return math.inf
    finite = values[np.isfinite(values)]
    return float(finite.max()) if finite.size else -math.inf


@dataclass(frozen=True)
class PieceIntegrals:
    """Integrals of multiplier * exp(log_f - shift) over consecutive pieces."""
    shift: float
    edges: np.ndarray
    values: np.ndarray
    errors: np.ndarray
    failed: np.ndarray

    @property
    def total(self) -> float:
        return math.fsum(self.values.tolist())

    def log_total(self) -> float:
        total = self.total
        if total <= 0.0:
            return -math.inf
        return self.shift + math.log(total)


def integrate_pieces(
    log_f: LogIntegrand,
    edges: Sequence[float],
    shift: Optional[float] = None,
    multiplier: Optional[Callable[[float], float]] = None,
    epsrel: float = DEFAULT_EPSREL,
) -> PieceIntegrals:
    """
    Adaptive Gauss-Kronrod quadrature of exp(log_f - shift) on each piece.

    Args:
        log_f: Vectorised log of the integrand
        edges: Increasing piece boundaries
        shift: Common offset; defaults to the grid maximum of log_f
        multiplier: Optional scalar factor f(theta) inside the integral
        epsrel: Relative tolerance per piece

    Returns:
        PieceIntegrals carrying the shift so that log-totals stay comparable
    """
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) < 0):
        raise NumericalError("quadrature edges must be an increasing sequence")
    if shift is None:
        shift = grid_shift(log_f, edges[0], edges[-1])
    if not math.isfinite(shift):
        raise NumericalError(f"integrand exponent has no finite maximum (shift={shift})")

    def integrand(t: float) -> float:
        value = math.exp(min(float(log_f(np.array([t]))[0]) - shift, 700.0))
        return value * multiplier(t) if multiplier is not None else value

    n_pieces = edges.size - 1
    values = np.zeros(n_pieces)
    errors = np.zeros(n_pieces)
    failed = np.zeros(n_pieces, dtype=bool)
    for i in range(n_pieces):
        lo, hi = edges[i], edges[i + 1]
        if hi <= lo:
            continue
        result = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=epsrel, limit=200, full_output=1)
        values[i], errors[i] = result[0], result[1]
        if len(result) > 3 and errors[i] > FAILURE_REL_ERR * abs(values[i]):
            failed[i] = True
            logger.warning(f"Quadrature on [{lo:.6g}, {hi:.6g}] did not converge: {result[3][:80]}")
    return PieceIntegrals(shift=shift, edges=edges, values=values, errors=errors, failed=failed)


def log_integral(
    log_f: LogIntegrand,
    lower: float,
    upper: float,
    shift: Optional[float] = None,
    pieces: int = 64,
    epsrel: float = DEFAULT_EPSREL,
) -> float:
    """log of the integral of exp(log_f) over [lower, upper]."""
    if upper <= lower:
        return -math.inf
    edges = np.linspace(lower, upper, pieces + 1)
    return integrate_pieces(log_f, edges, shift=shift, epsrel=epsrel).log_total()
