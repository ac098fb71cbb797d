"""Tests for shifted log-domain quadrature."""

import math

import numpy as np
import pytest

from ssmc_lab.errors import NumericalError
from ssmc_lab.quadrature import grid_shift, integrate_pieces, log_integral


def test_log_integral_of_a_constant():
    assert log_integral(lambda t: np.zeros_like(t), 0.0, 2.0) == pytest.approx(math.log(2.0))


def test_huge_exponent_stays_finite():
    n = 5000.0
    value = log_integral(lambda t: n * t, 0.0, 1.0)
    assert value == pytest.approx(n - math.log(n), rel=1e-10)


def test_pieces_add_up():
    pieces = integrate_pieces(lambda t: np.log(np.asarray(t) + 1.0), [0.0, 0.5, 1.0], shift=0.0)
    assert pieces.total == pytest.approx(1.5)
    assert pieces.values == pytest.approx([0.625, 0.875])
    assert not pieces.failed.any()


def test_multiplier_weights_the_integrand():
    pieces = integrate_pieces(lambda t: np.zeros_like(t), [0.0, 1.0], shift=0.0, multiplier=lambda t: t)
    assert pieces.total == pytest.approx(0.5)


def test_grid_shift_reports_blowup():
    with np.errstate(divide="ignore"):
        assert grid_shift(lambda t: -np.log(np.abs(t - 0.5)), 0.0, 1.0, points=3) == math.inf


def test_empty_interval():
    assert log_integral(lambda t: t, 1.0, 1.0) == -math.inf


def test_edges_must_increase():
    with pytest.raises(NumericalError):
        integrate_pieces(lambda t: t, [1.0, 0.0])
