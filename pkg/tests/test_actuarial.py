import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fhfm.actuarial import (
    COHORT,
    FORECAST,
    OBSERVED,
    PERIOD,
    AnnuityTerms,
    MortalitySurface,
    annuity_certain,
    annuity_pv,
    life_expectancy,
    survival_prob,
)
from fhfm.errors import CoverageError, NumericError, ValidationError
from fhfm.panel import Panel
from oracles import annuity_loop

# ages 0..2 by years 2000..2003
HAND = np.array([
    [0.1, 0.05, 0.2, 0.1],
    [0.2, 0.1, 0.3, 0.25],
    [0.5, 0.4, 0.6, 0.5],
])
SHORT_TERMS = AnnuityTerms(interest=0.05, retirement_age=1, end_age=3)


def hand_surface():
    return MortalitySurface(HAND, 2000)


def random_surface(rng, years=120, scale=1.0):
    ages = np.arange(91)
    base = np.exp(-9 + 0.085 * ages)[:, None]
    noise = np.exp(0.2 * rng.standard_normal((91, years)))
    return MortalitySurface(np.minimum(scale * base * noise, 1.0), 1900)


def test_two_age_period_survival():
    s = MortalitySurface([[0.1], [0.2]], 2000)
    assert survival_prob(s, 0, 2000, 2, PERIOD) == pytest.approx(0.72, abs=1e-15)


def test_hand_surface_survival_both_bases():
    s = hand_surface()
    assert abs(survival_prob(s, 0, 2000, 3, PERIOD) - 0.9 * 0.8 * 0.5) < 1e-12
    assert abs(survival_prob(s, 0, 2000, 3, COHORT) - 0.9 * 0.9 * 0.4) < 1e-12
    assert abs(survival_prob(s, 1, 2002, 2, COHORT) - 0.7 * 0.5) < 1e-12
    assert survival_prob(s, 2, 2003, 0) == 1.0


def test_hand_surface_life_expectancy():
    s = hand_surface()
    assert abs(life_expectancy(s, 0, 2000, PERIOD, w=4) - (0.9 + 0.72 + 0.36)) < 1e-12
    assert abs(life_expectancy(s, 0, 2000, COHORT, w=4) - (0.9 + 0.81 + 0.324)) < 1e-12
    assert abs(life_expectancy(s, 0, 2000, COHORT, w=3) - (0.9 + 0.81)) < 1e-12


def test_hand_surface_annuity():
    s = hand_surface()
    at_ret = 0.9 / 1.05 + 0.9 * 0.4 / 1.05**2
    assert abs(annuity_pv(s, 1, 2001, SHORT_TERMS) - at_ret) < 1e-12
    # deferred one year: no survival factor, just discounting
    assert abs(annuity_pv(s, 0, 2000, SHORT_TERMS) - at_ret / 1.05) < 1e-12


def test_single_rate_expectancy():
    s = MortalitySurface([[0.1], [0.3]], 2000)
    assert life_expectancy(s, 0, 2000, PERIOD, w=2) == pytest.approx(0.9)


def test_zero_mortality():
    s = MortalitySurface(np.zeros((91, 100)), 1950)
    assert survival_prob(s, 10, 1960, 30, COHORT) == 1.0
    assert life_expectancy(s, 40, 1960, COHORT) == 91 - 40 - 1
    assert annuity_pv(s, 66, 1960, AnnuityTerms(interest=0.0)) == 24.0


def test_certain_death():
    m = np.zeros((91, 60))
    m[0] = 1.0
    s = MortalitySurface(m, 1950)
    assert survival_prob(s, 0, 1960, 5, PERIOD) == 0.0
    assert annuity_pv(MortalitySurface(np.ones((91, 60)), 1950), 70, 1950) == 0.0


def test_annuity_matches_loop_oracle_both_branches():
    rng = np.random.default_rng(0)
    s = random_surface(rng)
    d = {(a, 1900 + j): s.rates[a, j] for a in range(91) for j in range(120)}
    for x, year in [(66, 1950), (80, 1990), (65, 1990), (30, 1940)]:
        assert abs(annuity_pv(s, x, year) - annuity_loop(d, x, year, 0.02)) < 1e-12


def test_cohort_coverage_error_lists_cells():
    s = MortalitySurface(np.full((91, 10), 0.01), 2000)
    with pytest.raises(CoverageError) as info:
        life_expectancy(s, 65, 2005, COHORT)
    missing = info.value.missing
    assert (70, 2010) in missing and (89, 2029) in missing
    assert all(y >= 2010 for _, y in missing)


def test_age_beyond_surface():
    s = MortalitySurface(np.full((5, 5), 0.1), 2000)
    with pytest.raises(CoverageError):
        survival_prob(s, 3, 2000, 3, PERIOD)


def test_rates_above_one_raise_or_clip():
    m = np.full((3, 3), 0.2)
    m[1, 0] = 1.5
    with pytest.raises(NumericError):
        survival_prob(MortalitySurface(m, 2000), 0, 2000, 2, PERIOD)
    clipped = MortalitySurface(m, 2000, clip_rates=True)
    assert survival_prob(clipped, 0, 2000, 2, PERIOD) == 0.0
    # the bad cell is not used on this path
    assert survival_prob(MortalitySurface(m, 2000), 0, 2001, 2, PERIOD) == pytest.approx(0.64)


@pytest.mark.parametrize(
    "rates", [np.array([[0.1, -0.1]]), np.array([[np.nan]]), np.zeros((0, 2))]
)
def test_invalid_surfaces(rates):
    with pytest.raises(ValidationError):
        MortalitySurface(rates, 2000)


def test_invalid_terms_and_basis():
    with pytest.raises(ValidationError):
        AnnuityTerms(interest=-1.0)
    with pytest.raises(ValidationError):
        AnnuityTerms(retirement_age=91)
    with pytest.raises(ValidationError):
        survival_prob(hand_surface(), 0, 2000, 1, "calendar")


def test_from_log_panel_and_splice():
    logm = np.log(HAND[:, :2])
    p = Panel(logm, col_labels=(2000, 2001))
    s = MortalitySurface.from_log_panel(p, forecast=np.log(HAND[:, 2:]))
    assert np.allclose(s.rates, HAND, rtol=1e-15)
    assert s.provenance == (OBSERVED, OBSERVED, FORECAST, FORECAST)
    assert s.years == range(2000, 2004)
    t = hand_surface().splice(np.log(np.full((3, 3), 0.5)), 2002)
    assert t.rates.shape == (3, 5)
    assert t.provenance == (OBSERVED, OBSERVED, FORECAST, FORECAST, FORECAST)
    assert np.all(t.rates[:, 2:] == pytest.approx(0.5))
    gap = Panel(logm, col_labels=(2000, 2002))
    with pytest.raises(ValidationError):
        MortalitySurface.from_log_panel(gap)


# --- properties on random surfaces -------------------------------------------------

seeds = st.integers(0, 10**6)


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_survival_nonincreasing_and_bounded(seed):
    s = random_surface(np.random.default_rng(seed), scale=20.0)
    for basis in (PERIOD, COHORT):
        p = [survival_prob(s, 20, 1920, t, basis) for t in range(0, 71)]
        assert all(0.0 <= v <= 1.0 for v in p)
        assert all(b <= a for a, b in zip(p, p[1:]))


@settings(max_examples=100, deadline=None)
@given(seeds, st.integers(0, 90), st.integers(0, 119), st.floats(1.0, 3.0))
def test_raising_a_rate_lowers_everything_that_uses_it(seed, age, col, factor):
    rng = np.random.default_rng(seed)
    s = random_surface(rng)
    m = s.rates.copy()
    m[age, col] = min(1.0, m[age, col] * factor)
    t = MortalitySurface(m, 1900)
    x, year = 60, 1950
    assert life_expectancy(t, x, year) <= life_expectancy(s, x, year)
    assert life_expectancy(t, x, year, PERIOD) <= life_expectancy(s, x, year, PERIOD)
    assert annuity_pv(t, x, year) <= annuity_pv(s, x, year)
    assert survival_prob(t, 0, 1920, 90, COHORT) <= survival_prob(s, 0, 1920, 90, COHORT)


@settings(max_examples=100, deadline=None)
@given(seeds, st.integers(66, 90), st.floats(0.0, 0.1))
def test_annuity_below_annuity_certain(seed, x, i):
    s = random_surface(np.random.default_rng(seed))
    terms = AnnuityTerms(interest=i)
    assert annuity_pv(s, x, 1950, terms) <= annuity_certain(x, terms) + 1e-12


@settings(max_examples=100, deadline=None)
@given(seeds, st.integers(0, 89))
def test_period_equals_cohort_on_constant_surface(seed, x):
    col = random_surface(np.random.default_rng(seed), years=1).rates
    s = MortalitySurface(np.tile(col, (1, 100)), 1900)
    assert life_expectancy(s, x, 1900, PERIOD) == pytest.approx(life_expectancy(s, x, 1900, COHORT), abs=1e-12)
