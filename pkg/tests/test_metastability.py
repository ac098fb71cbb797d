"""Tests for scaled switching-time laws, limit verdicts and the Fernandez check."""

import math

import numpy as np
import pytest

from ssmc_lab.core import StateDistribution, simulate_switches
from ssmc_lab.errors import BudgetExceededError, DomainError, PreconditionError
from ssmc_lab.metastability import (
    LimitKind,
    LimitThresholds,
    SampleSource,
    ScaledTimeSample,
    classify_limit,
    cutoff_coverage,
    fernandez_check,
    ks_to_exp1,
    proof_threshold,
    sample_scaled_times,
    survival_curve,
)
from ssmc_lab.sserw import ModelKind, SserwModel


def _synthetic(values) -> ScaledTimeSample:
    return ScaledTimeSample(
        ModelKind.FLAT, 0.5, 1, SampleSource.MONTE_CARLO, 1.0, values=np.asarray(values, dtype=float),
    )


# =============================================================================
# DISTANCES TO THE LIMIT LAWS
# =============================================================================

def test_exponential_values_pass_both_checks_as_expected():
    values = np.random.default_rng(0).exponential(size=100_000)
    sample = _synthetic(values)
    assert ks_to_exp1(sample) <= 0.01
    assert cutoff_coverage(sample) == pytest.approx(math.exp(-0.9) - math.exp(-1.1), abs=0.005)


def test_constant_values_are_a_cutoff():
    sample = _synthetic(np.ones(100))
    assert ks_to_exp1(sample) == pytest.approx(1.0 - math.exp(-1.0))
    assert cutoff_coverage(sample) == 1.0


def test_ks_needs_enough_samples():
    with pytest.raises(PreconditionError):
        ks_to_exp1(_synthetic(np.ones(50)))


def test_coverage_window_must_bracket_one():
    with pytest.raises(PreconditionError):
        cutoff_coverage(_synthetic(np.ones(100)), c1=1.1, c2=1.2)


def test_scaled_times_must_be_positive():
    with pytest.raises(PreconditionError):
        _synthetic([1.0, 0.0])


# =============================================================================
# SAMPLING
# =============================================================================

def test_exact_law_of_a_deep_well_is_nearly_exponential():
    sample = sample_scaled_times(SserwModel(ModelKind.SINGLE_WELL, 10), 0.3, source=SampleSource.EXACT)
    assert sample.truncated_mass < 1e-6
    assert float(sample.survival(1.0)) == pytest.approx(math.exp(-1.0), abs=0.05)
    frame = survival_curve(sample, points=64)
    assert list(frame.columns) == ["t", "empirical_survival", "exp_survival"]
    assert frame["empirical_survival"].is_monotonic_decreasing


def test_monte_carlo_scaled_times_are_seeded():
    model = SserwModel(ModelKind.FLAT, 5)
    first = sample_scaled_times(model, 0.4, k=500, seed=3)
    second = sample_scaled_times(model, 0.4, k=500, seed=3)
    assert np.array_equal(first.values, second.values)
    assert first.size == 500


def test_monte_carlo_refuses_exponential_expectations():
    with pytest.raises(BudgetExceededError) as excinfo:
        sample_scaled_times(SserwModel(ModelKind.SINGLE_WELL, 60), 0.3, k=10)
    assert excinfo.value.guard == "mc_budget_steps"


@pytest.mark.slow
def test_monte_carlo_mean_is_one():
    sample = sample_scaled_times(SserwModel(ModelKind.SINGLE_WELL, 14), 0.4, k=2000, seed=11)
    stderr = sample.std() / math.sqrt(sample.size)
    assert abs(sample.values.mean() - 1.0) < 3 * stderr


def test_monte_carlo_times_are_the_simulated_cycle_lengths():
    model = SserwModel(ModelKind.FLAT, 6)
    sample = sample_scaled_times(model, 0.4, k=300, seed=5)
    records = simulate_switches(model.chain_spec(), StateDistribution.dirac(0.4), 300, seed=5)
    assert np.array_equal(sample.values, np.array([r.tau for r in records]) / sample.mean)


def test_monte_carlo_and_exact_laws_agree():
    model = SserwModel(ModelKind.FLAT, 6)
    exact = sample_scaled_times(model, 0.4, source=SampleSource.EXACT).distribution
    simulated = sample_scaled_times(model, 0.4, k=5000, seed=2)
    taus = np.sort(np.rint(simulated.values * simulated.mean).astype(np.int64))
    empirical = 1.0 - np.searchsorted(taus, exact.times, side="right") / taus.size
    assert np.max(np.abs(empirical - exact.survival)) < 0.03


def test_runaway_cycle_hits_the_guard(monkeypatch):
    monkeypatch.setattr("ssmc_lab.metastability.MC_CYCLE_GUARD_MEANS", 1e-9)
    with pytest.raises(BudgetExceededError):
        sample_scaled_times(SserwModel(ModelKind.FLAT, 6), 0.4, k=10, seed=0)


def test_drifting_walk_concentrates():
    coarse = sample_scaled_times(SserwModel(ModelKind.FLAT, 20), 0.3, source=SampleSource.EXACT)
    fine = sample_scaled_times(SserwModel(ModelKind.FLAT, 200), 0.3, source=SampleSource.EXACT)
    assert fine.std() < coarse.std()
    assert fine.std() < 0.15


# =============================================================================
# VERDICTS
# =============================================================================

@pytest.mark.parametrize("kind, theta, ladder", [
    (ModelKind.SINGLE_WELL, 0.2, (6, 10, 14, 18)),
    (ModelKind.SINGLE_WELL, 0.3, (6, 10, 14, 18)),
    (ModelKind.SINGLE_WELL, 0.4, (6, 10, 14, 18)),
    (ModelKind.ALTERNATING_WELLS, 0.3, (4, 6, 8)),
    (ModelKind.ALTERNATING_WELLS, 0.7, (4, 6, 8)),
])
def test_deep_wells_approach_the_exponential_law(kind, theta, ladder):
    verdict = classify_limit(kind, theta, ladder)
    assert all(a > b for a, b in zip(verdict.ks, verdict.ks[1:]))


def test_single_well_below_half_is_metastable():
    verdict = classify_limit(ModelKind.SINGLE_WELL, 0.3, (6, 10, 14))
    assert verdict.ks[0] > verdict.ks[1] > verdict.ks[2]
    assert verdict.kind is LimitKind.EXP_ONE
    assert verdict.to_dict()["verdict"] == "ExpOne"


def test_largest_rung_uses_the_strided_curve():
    sample = sample_scaled_times(SserwModel(ModelKind.SINGLE_WELL, 18), 0.2, source=SampleSource.EXACT)
    assert sample.distribution.stride > 1
    assert ks_to_exp1(sample) < 0.1


def test_alternating_wells_are_symmetric_in_theta():
    low = classify_limit(ModelKind.ALTERNATING_WELLS, 0.3, (4, 6, 8))
    high = classify_limit(ModelKind.ALTERNATING_WELLS, 0.7, (4, 6, 8))
    assert high.ks == pytest.approx(low.ks, rel=1e-6)


@pytest.mark.parametrize("kind", [ModelKind.SINGLE_WELL, ModelKind.ALTERNATING_WELLS])
def test_balanced_walk_has_neither_limit(kind):
    verdict = classify_limit(kind, 0.5, (10, 20, 40))
    assert verdict.kind is LimitKind.NEITHER


@pytest.mark.slow
def test_single_well_above_half_shows_cutoff():
    verdict = classify_limit(
        ModelKind.SINGLE_WELL, 0.8, (25, 50, 100),
        source=SampleSource.MONTE_CARLO, k=2000, seed=1,
        thresholds=LimitThresholds(c1=0.75, c2=1.25),
    )
    assert verdict.kind is LimitKind.CUT_OFF
    assert len(verdict.to_frame()) == 3


@pytest.mark.slow
def test_drifting_flat_walk_concentrates_along_the_ladder():
    verdict = classify_limit(ModelKind.FLAT, 0.3, (50, 100, 200, 400))
    assert all(a < b for a, b in zip(verdict.coverage, verdict.coverage[1:]))
    assert verdict.coverage[-1] > 0.8


def test_classification_needs_a_ladder():
    with pytest.raises(PreconditionError):
        classify_limit(ModelKind.FLAT, 0.3, (10,))


# =============================================================================
# FERNANDEZ CHECK
# =============================================================================

def test_single_well_threshold_meets_its_bound():
    r_n, bound = proof_threshold(SserwModel(ModelKind.SINGLE_WELL, 20), 0.3)
    assert r_n == pytest.approx(47.5 ** 1.5)
    assert bound == pytest.approx(47.5 ** -0.5)
    ratios = []
    for n in (10, 20, 40):
        model = SserwModel(ModelKind.SINGLE_WELL, n)
        r_n, bound = proof_threshold(model, 0.3)
        check = fernandez_check(model, 0.3, r_n, bound)
        assert check.within_bound
        ratios.append(check.ratio)
    assert ratios[0] > ratios[1] > ratios[2]
    assert ratios[-1] < 1e-3


def test_alternating_threshold_is_negligible_against_the_mean():
    ratios = []
    for n in (6, 10, 14):
        model = SserwModel(ModelKind.ALTERNATING_WELLS, n)
        r_n, _ = proof_threshold(model, 0.3)
        assert r_n == pytest.approx((n / 0.4) ** 1.5)
        check = fernandez_check(model, 0.3, r_n)
        assert 0.0 <= check.sup_survival <= 1.0
        assert check.within_bound is None
        ratios.append(check.ratio)
    assert ratios[0] > ratios[1] > ratios[2]


def test_threshold_is_undefined_for_the_flat_walk():
    with pytest.raises(DomainError):
        proof_threshold(SserwModel(ModelKind.FLAT, 10), 0.3)
