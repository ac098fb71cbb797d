"""Tests for empirical, renewal and limiting occupation measures."""

import math

import numpy as np
import pytest

from ssmc_lab.core import StateDistribution, SwitchRecord, Trajectory, simulate_steps, simulate_switches
from ssmc_lab.errors import (
    BinningError,
    BudgetExceededError,
    DivergentNormalizerError,
    NumericalError,
    PreconditionError,
)
from ssmc_lab.occupation import (
    Binning,
    MeasureKind,
    OccupationMeasure,
    bounded_lipschitz_distance,
    empirical_occupation,
    limiting_occupation,
    renewal_occupation,
    tv_distance,
)
from ssmc_lab.sserw import ModelKind, SserwModel, asymptotic_profile, log_mean_time

FLAT_TEN_LIMIT = 100.0 / (100.0 + 24.98950)


def _two_atoms() -> StateDistribution:
    return StateDistribution.discrete([0.3, 0.5], [0.5, 0.5])


def _alternating_records(count: int):
    return [SwitchRecord(0.3, 2, 0) if i % 2 == 0 else SwitchRecord(0.5, 8, 4) for i in range(count)]


# =============================================================================
# BINNING
# =============================================================================

def test_binning_locates_atoms_and_bins():
    atoms = Binning.for_atoms([0.3, 0.5])
    assert atoms.locate(np.array([0.5, 0.3, 0.5])).tolist() == [1, 0, 1]
    grid = Binning.uniform(0.0, 1.0, 4)
    assert grid.locate(np.array([0.0, 0.3, 1.0])).tolist() == [0, 1, 3]
    assert grid.points == pytest.approx([0.125, 0.375, 0.625, 0.875])


def test_binning_rejects_foreign_states():
    with pytest.raises(BinningError):
        Binning.for_atoms([0.3, 0.5]).locate(np.array([0.4]))
    with pytest.raises(BinningError):
        Binning.uniform(0.1, 0.3, 8).locate(np.array([0.35]))


def test_measure_masses_must_sum_to_one():
    with pytest.raises(NumericalError):
        OccupationMeasure(Binning.for_atoms([0.3, 0.5]), np.array([0.5, 0.6]), MeasureKind.EMPIRICAL)


def test_default_binning_for_continuous_mu():
    binning = Binning.for_distribution(StateDistribution.uniform(0.1, 0.3))
    assert binning.n_bins == 64
    assert binning.edges[[0, -1]] == pytest.approx([0.1, 0.3])


# =============================================================================
# EMPIRICAL AND RENEWAL
# =============================================================================

def test_point_mass_occupies_its_atom():
    spec = SserwModel(ModelKind.FLAT, 3).chain_spec()
    mu = StateDistribution.dirac(0.5)
    measure = empirical_occupation(simulate_steps(spec, mu, 500, seed=1), Binning.for_atoms([0.5]))
    assert measure.masses.tolist() == [1.0]
    assert measure.size == 500


def test_single_step_trajectory():
    trajectory = Trajectory(np.array([2, 3]), np.array([0.7, 0.7]), np.array([], dtype=np.int64))
    measure = empirical_occupation(trajectory, Binning.for_atoms([0.3, 0.7]))
    assert measure.masses.tolist() == [0.0, 1.0]


def test_single_record_renewal():
    estimate = renewal_occupation([SwitchRecord(0.3, 7, 0)], 7, Binning.for_atoms([0.3]))
    assert estimate.cycle_count == 1
    assert estimate.remainder_mass == 0.0
    assert estimate.to_measure().masses.tolist() == [1.0]


def test_alternating_records_by_arithmetic():
    estimate = renewal_occupation(_alternating_records(10), 50, Binning.for_atoms([0.3, 0.5]))
    assert estimate.cycle_count == 10
    assert estimate.weighted_masses == pytest.approx([0.2, 0.8])
    estimate = renewal_occupation(_alternating_records(20), 100, Binning.for_atoms([0.3, 0.5]))
    assert estimate.cycle_count == 20
    assert estimate.to_measure().masses == pytest.approx([0.2, 0.8])


def test_partial_cycle_goes_to_the_remainder():
    estimate = renewal_occupation(_alternating_records(12), 55, Binning.for_atoms([0.3, 0.5]))
    assert estimate.cycle_count == 11
    assert estimate.remainder_mass == pytest.approx(3 / 55)
    assert estimate.remainder_bin == 1
    assert estimate.weighted_masses == pytest.approx([12 / 55, 40 / 55])
    assert estimate.to_measure().masses == pytest.approx([12 / 55, 43 / 55])
    assert np.all(estimate.lower_bound <= estimate.to_measure().masses)
    assert np.all(estimate.to_measure().masses <= estimate.upper_bound)


def test_renewal_needs_enough_records():
    with pytest.raises(BudgetExceededError):
        renewal_occupation(_alternating_records(2), 100, Binning.for_atoms([0.3, 0.5]))


def test_renewal_close_to_path_occupation():
    spec = SserwModel(ModelKind.FLAT, 10).chain_spec()
    mu = _two_atoms()
    n = 100_000
    trajectory = simulate_steps(spec, mu, n, seed=4)
    records = trajectory.cycles()
    # every flat cycle lasts at least N steps, so 1000 more records cover the restarts
    records.extend(simulate_switches(spec, mu, len(records) + 1000, seed=4)[len(records):])
    estimate = renewal_occupation(records, n, Binning.for_atoms([0.3, 0.5]))
    path = empirical_occupation(trajectory, Binning.for_atoms([0.3, 0.5]))
    assert tv_distance(estimate.to_measure(), path) <= estimate.cycle_count / n + 1e-12


@pytest.mark.slow
def test_flat_ten_empirical_occupation():
    spec = SserwModel(ModelKind.FLAT, 10).chain_spec()
    measure = empirical_occupation(simulate_steps(spec, _two_atoms(), 1_000_000, seed=2024), Binning.for_atoms([0.3, 0.5]))
    assert measure.mass_at(0.5) == pytest.approx(FLAT_TEN_LIMIT, abs=0.02)


@pytest.mark.slow
def test_flat_ten_renewal_occupation():
    spec = SserwModel(ModelKind.FLAT, 10).chain_spec()
    records = simulate_switches(spec, _two_atoms(), 25_000, seed=2025)
    estimate = renewal_occupation(records, 1_000_000, Binning.for_atoms([0.3, 0.5]))
    assert estimate.to_measure().mass_at(0.5) == pytest.approx(FLAT_TEN_LIMIT, abs=0.02)


@pytest.mark.slow
def test_occupation_converges_to_the_limit():
    spec = SserwModel(ModelKind.FLAT, 10).chain_spec()
    mu = _two_atoms()
    binning = Binning.for_atoms([0.3, 0.5])
    model = SserwModel(ModelKind.FLAT, 10)
    limit = limiting_occupation(mu, lambda th: log_mean_time(model, th), binning, log_scale=True, size=10)
    prefixes = (10_000, 100_000, 1_000_000)
    distances = np.zeros((20, len(prefixes)))
    masses_at_half = []
    for seed in range(20):
        trajectory = simulate_steps(spec, mu, prefixes[-1], seed=seed)
        for j, n in enumerate(prefixes):
            switches = trajectory.switch_times[trajectory.switch_times <= n]
            prefix = Trajectory(trajectory.locations[:n + 1], trajectory.states[:n + 1], switches)
            distances[seed, j] = tv_distance(empirical_occupation(prefix, binning), limit)
        masses_at_half.append(empirical_occupation(trajectory, binning).mass_at(0.5))
    mean_distance = distances.mean(axis=0)
    assert mean_distance[0] > mean_distance[1] > mean_distance[2]
    assert mean_distance[2] <= 0.02
    assert np.mean(np.abs(np.array(masses_at_half) - FLAT_TEN_LIMIT)) <= 0.01


# =============================================================================
# LIMITING MEASURES
# =============================================================================

def test_flat_ten_limit_by_formula():
    model = SserwModel(ModelKind.FLAT, 10)
    limit = limiting_occupation(_two_atoms(), lambda th: log_mean_time(model, th), log_scale=True, size=10)
    assert limit.mass_at(0.5) == pytest.approx(FLAT_TEN_LIMIT, rel=1e-5)
    assert limit.kind is MeasureKind.LIMITING


def test_point_mass_limit():
    limit = limiting_occupation(StateDistribution.dirac(0.42), lambda th: np.full(np.shape(th), 7.0))
    assert limit.masses.tolist() == [1.0]


def test_continuous_limit_against_closed_form():
    mu = StateDistribution.uniform(0.1, 0.3)
    limit = limiting_occupation(mu, asymptotic_profile(ModelKind.FLAT).m_bar, kind=MeasureKind.ASYMPTOTIC)
    assert limit.mass_between(0.2, 0.3) == pytest.approx(math.log(0.6 / 0.4) / math.log(0.8 / 0.4), rel=1e-6)


def test_limit_is_absolutely_continuous():
    mu = StateDistribution.uniform(0.2, 0.4)
    limit = limiting_occupation(
        mu, asymptotic_profile(ModelKind.FLAT).m_bar, binning=Binning.uniform(0.0, 0.45, 9),
    )
    outside = (limit.binning.edges[1:] <= 0.2 + 1e-12) | (limit.binning.edges[:-1] >= 0.4 - 1e-12)
    assert np.all(limit.masses[outside] == 0.0)
    assert np.all(limit.masses[~outside] > 0.0)


def test_peaked_expectations_stay_in_log_space():
    model = SserwModel(ModelKind.SINGLE_WELL, 400)
    mu = StateDistribution.uniform(0.3, 0.9)
    limit = limiting_occupation(mu, lambda th: log_mean_time(model, th), log_scale=True, size=400)
    assert limit.masses[0] > 0.99


def test_infinite_expectation_on_an_atom():
    with pytest.raises(DivergentNormalizerError) as excinfo:
        limiting_occupation(_two_atoms(), asymptotic_profile(ModelKind.FLAT).m_bar)
    assert excinfo.value.singular_points == (0.5,)


def test_continuous_mu_needs_interval_bins():
    with pytest.raises(PreconditionError):
        limiting_occupation(StateDistribution.uniform(0.1, 0.3), lambda th: np.ones_like(th), Binning.for_atoms([0.2]))


# =============================================================================
# DISTANCES
# =============================================================================

def test_tv_distance_on_shared_atoms():
    binning = Binning.for_atoms([0.3, 0.5])
    p = OccupationMeasure(binning, np.array([0.2, 0.8]), MeasureKind.EMPIRICAL)
    q = OccupationMeasure(binning, np.array([0.5, 0.5]), MeasureKind.LIMITING)
    assert tv_distance(p, q) == pytest.approx(0.3)
    assert tv_distance(p, p) == 0.0


def test_tv_distance_needs_shared_binning():
    p = OccupationMeasure(Binning.for_atoms([0.3]), np.array([1.0]), MeasureKind.EMPIRICAL)
    q = OccupationMeasure(Binning.for_atoms([0.5]), np.array([1.0]), MeasureKind.EMPIRICAL)
    with pytest.raises(PreconditionError):
        tv_distance(p, q)


def test_bounded_lipschitz_between_diracs():
    assert bounded_lipschitz_distance([0.3], [1.0], [0.7], [1.0]) == pytest.approx(0.4)
    assert bounded_lipschitz_distance([0.0], [1.0], [5.0], [1.0]) == pytest.approx(2.0)
