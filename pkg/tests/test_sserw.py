"""Tests for the three elementary walks and their closed forms."""

import math

import numpy as np
import pytest

from ssmc_lab.core import StateDistribution, simulate_switches, validate
from ssmc_lab.errors import DomainError
from ssmc_lab.sserw import (
    ModelKind,
    SserwModel,
    asymptotic_profile,
    build_matrix,
    exit_probability,
    gambler_ruin_time,
    h_n,
    log_mean_time,
    m_closed,
    m_exact,
    potential,
)

THETA_GRID = [round(0.05 * i, 2) for i in range(1, 20)]


# =============================================================================
# TRANSITION FAMILIES
# =============================================================================

def _row(model: SserwModel, theta: float, position: int) -> dict:
    q = build_matrix(model, theta)
    i = model.index_of(position)
    return {"right": q[i, i + 1], "left": q[i, i - 1]}


def test_flat_row_at_origin():
    row = _row(SserwModel(ModelKind.FLAT, 2), 0.3, 0)
    assert row == pytest.approx({"right": 0.3, "left": 0.7})


def test_single_well_origin_belongs_to_the_left_block():
    row = _row(SserwModel(ModelKind.SINGLE_WELL, 2), 0.3, 0)
    assert row == pytest.approx({"right": 0.7, "left": 0.3})


def test_alternating_wells_flip_at_n():
    model = SserwModel(ModelKind.ALTERNATING_WELLS, 2)
    assert _row(model, 0.3, 3) == pytest.approx({"right": 0.3, "left": 0.7})
    assert _row(model, 0.3, 1) == pytest.approx({"right": 0.7, "left": 0.3})
    assert model.positions[[0, -1]].tolist() == [-4, 4]


@pytest.mark.parametrize("kind", list(ModelKind))
def test_walks_are_valid_chains(kind):
    spec = SserwModel(kind, 4).chain_spec()
    assert validate(spec, [0.2, 0.5, 0.8]).valid


def test_theta_outside_unit_interval():
    with pytest.raises(DomainError):
        build_matrix(SserwModel(ModelKind.FLAT, 2), 1.2)
    with pytest.raises(DomainError):
        SserwModel(ModelKind.FLAT, 0)


# =============================================================================
# POTENTIAL
# =============================================================================

def test_flat_potential_is_linear():
    v = potential(SserwModel(ModelKind.FLAT, 4), 0.3)
    assert v.values == pytest.approx(v.positions * math.log(7 / 3))


def test_single_well_potential_is_v_shaped():
    v = potential(SserwModel(ModelKind.SINGLE_WELL, 4), 0.3)
    assert v.at(0) == 0.0
    assert v.at(4) == pytest.approx(4 * math.log(7 / 3))
    assert v.at(-4) == pytest.approx(4 * math.log(7 / 3))
    assert np.argmin(v.values) == 4


def test_alternating_potential_is_a_double_well():
    n = 3
    v = potential(SserwModel(ModelKind.ALTERNATING_WELLS, n), 0.3)
    right_half = np.array([v.at(p) for p in range(0, 2 * n + 1)])
    assert np.all(np.diff(right_half[:n + 1]) < 0)
    assert np.all(np.diff(right_half[n:]) > 0)


def test_potential_needs_interior_theta():
    with pytest.raises(DomainError):
        potential(SserwModel(ModelKind.FLAT, 2), 0.0)


# =============================================================================
# EXPECTED SWITCHING TIMES
# =============================================================================

def test_closed_form_anchors():
    assert m_closed(SserwModel(ModelKind.FLAT, 10), 0.5).value == pytest.approx(100.0, rel=1e-14)
    assert m_closed(SserwModel(ModelKind.ALTERNATING_WELLS, 7), 0.5).value == pytest.approx(196.0, rel=1e-14)
    assert m_closed(SserwModel(ModelKind.SINGLE_WELL, 2), 0.3).value == pytest.approx(2 / 0.3, rel=1e-9)
    assert m_closed(SserwModel(ModelKind.SINGLE_WELL, 5), 1.0).value == pytest.approx(5.0, rel=1e-12)


def test_flat_ten_at_point_three():
    assert m_closed(SserwModel(ModelKind.FLAT, 10), 0.3).value == pytest.approx(24.98950, rel=1e-5)


@pytest.mark.parametrize("kind", list(ModelKind))
def test_closed_form_matches_banded_oracle(kind):
    worst = 0.0
    for n in range(1, 21):
        model = SserwModel(kind, n)
        closed = np.exp(log_mean_time(model, THETA_GRID))
        for theta, value in zip(THETA_GRID, closed):
            oracle = m_exact(model, theta)
            worst = max(worst, abs(value - oracle) / oracle)
    assert worst <= 1e-9


@pytest.mark.parametrize("kind,factor", [(ModelKind.FLAT, 1), (ModelKind.SINGLE_WELL, 1), (ModelKind.ALTERNATING_WELLS, 4)])
def test_half_is_exact_up_to_n_hundred(kind, factor):
    for n in (1, 2, 17, 64, 100):
        assert m_closed(SserwModel(kind, n), 0.5).value == pytest.approx(factor * n * n, rel=1e-14)
        assert m_exact(SserwModel(kind, n), 0.5) == pytest.approx(factor * n * n, rel=1e-12)


def test_near_half_routes_through_the_oracle():
    model = SserwModel(ModelKind.SINGLE_WELL, 30)
    theta = 0.5 + 1e-8
    assert m_closed(model, theta).value == pytest.approx(m_exact(model, theta), rel=1e-12)


def test_log_form_survives_overflow():
    model = SserwModel(ModelKind.SINGLE_WELL, 2000)
    expected = m_closed(model, 0.3)
    assert expected.value is None
    assert expected.log_value == pytest.approx(2000 * math.log(7 / 3), rel=1e-3)


def test_alternating_wells_are_symmetric():
    model = SserwModel(ModelKind.ALTERNATING_WELLS, 6)
    assert log_mean_time(model, [0.3, 0.7]) == pytest.approx([log_mean_time(model, 0.3)[0]] * 2)


def test_domain_errors():
    with pytest.raises(DomainError):
        m_closed(SserwModel(ModelKind.SINGLE_WELL, 3), 0.0)
    with pytest.raises(DomainError):
        m_closed(SserwModel(ModelKind.ALTERNATING_WELLS, 3), 1.0)
    assert m_closed(SserwModel(ModelKind.FLAT, 3), 0.0).value == pytest.approx(3.0)


def test_gambler_ruin_closed_form():
    assert gambler_ruin_time(5, 10, 0.5) == 25.0
    assert gambler_ruin_time(3, 10, 0.0) == 3.0
    assert gambler_ruin_time(2, 4, 0.3) == pytest.approx(m_exact(SserwModel(ModelKind.FLAT, 2), 0.3))


def test_exit_side_is_fair_at_half():
    assert exit_probability(SserwModel(ModelKind.FLAT, 4), 0.5) == pytest.approx(0.5)
    assert exit_probability(SserwModel(ModelKind.FLAT, 4), 0.3) < 0.5


def test_single_well_exits_right_with_the_first_step_odds():
    assert exit_probability(SserwModel(ModelKind.SINGLE_WELL, 4), 0.3) == pytest.approx(0.7, rel=1e-10)
    assert exit_probability(SserwModel(ModelKind.SINGLE_WELL, 4), 0.8) == pytest.approx(0.2, rel=1e-10)


@pytest.mark.parametrize("theta", [0.3, 0.8])
def test_simulated_exit_side_matches_the_exact_odds(theta):
    model = SserwModel(ModelKind.SINGLE_WELL, 4)
    records = simulate_switches(model.chain_spec(), StateDistribution.dirac(theta), 4000, seed=8)
    right = np.mean([r.exit_state == model.index_of(model.half_width) for r in records])
    assert right == pytest.approx(exit_probability(model, theta), abs=0.03)


# =============================================================================
# ASYMPTOTICS
# =============================================================================

def test_single_well_limit():
    profile = asymptotic_profile(ModelKind.SINGLE_WELL)
    assert float(profile.h_limit(0.3)) == pytest.approx(math.log(7 / 3))
    assert float(profile.h_limit(0.7)) == 0.0
    assert float(profile.m_bar(0.75)) == pytest.approx(2.0)


def test_alternating_limit_is_symmetric():
    profile = asymptotic_profile(ModelKind.ALTERNATING_WELLS)
    assert float(profile.h_limit(0.3)) == pytest.approx(float(profile.h_limit(0.7)))
    assert float(profile.h_limit(0.3)) == pytest.approx(math.log(7 / 3))
    assert profile.m_bar is None


def test_flat_limit_density():
    profile = asymptotic_profile(SserwModel(ModelKind.FLAT, 5))
    assert float(profile.m_bar(0.25)) == pytest.approx(2.0)
    assert float(profile.h_limit(0.25)) == 0.0


@pytest.mark.parametrize("kind, lower, upper", [
    (ModelKind.SINGLE_WELL, 0.2, 1.0),
    (ModelKind.ALTERNATING_WELLS, 0.2, 0.8),
])
def test_h_n_converges_uniformly(kind, lower, upper):
    grid = np.linspace(lower, upper, 200)
    limit = asymptotic_profile(kind).h_limit(grid)
    gaps = [float(np.max(np.abs(h_n(SserwModel(kind, n), grid) - limit))) for n in (10, 20, 40, 80)]
    assert all(a >= b for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] <= 0.15


@pytest.mark.parametrize("kind", list(ModelKind))
def test_expected_time_is_continuous_at_half(kind):
    model = SserwModel(kind, 10)
    centre = m_closed(model, 0.5).value
    for theta in (0.5 - 1e-4, 0.5 + 1e-4):
        assert m_closed(model, theta).value == pytest.approx(centre, rel=0.01)


def test_h_n_approaches_the_limit():
    profile = asymptotic_profile(ModelKind.SINGLE_WELL)
    gaps = [abs(float(h_n(SserwModel(ModelKind.SINGLE_WELL, n), 0.3)[0]) - math.log(7 / 3)) for n in (10, 40, 160)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert float(profile.h_n(160, 0.3)[0]) == pytest.approx(math.log(7 / 3), abs=0.01)
