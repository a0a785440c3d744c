import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sicnn.schedule import GammaSchedule, ScheduleRangeError


def brute_index(sched, t):
    for p in range(sched.p_min, sched.p_max + 1):
        if sched.theta(p) <= t < sched.theta(p + 1):
            return p
    raise AssertionError("not covered")


def test_gamma_small_examples():
    s = GammaSchedule.affine(2.0, -1.0, 1.0, (-20, 20))
    assert s.gamma(0.5) == 0.0  # delayed
    assert s.gamma(-0.5) == 0.0  # advanced
    assert s.interval_index(1.0) == 1  # right endpoint belongs to the next interval
    assert s.gamma(1.0) == 2.0


def test_example6_gamma_is_left_endpoint():
    s = GammaSchedule.example6((-50, 50))
    assert s.theta(0) == 0.25
    assert s.interval_index(0.3) == 0
    assert s.gamma(0.3) == 0.25
    assert s.interval_index(np.nextafter(0.25, -1)) == -1
    rng = np.random.default_rng(3)
    for p in range(-40, 40):
        t = rng.uniform(s.theta(p), s.theta(p + 1))
        assert s.gamma(t) == s.theta(p)


def test_gamma_sign_property():
    s = GammaSchedule.affine(2.0, -1.0, 1.0, (-20, 20))
    t = np.linspace(-30.0, 30.0, 6001)
    t = t[~np.isin(t, np.arange(-41, 41, 2))]
    zeta = s.gamma(t)
    assert np.array_equal(zeta - t > 0, t < zeta)
    assert np.any(zeta > t) and np.any(zeta < t)


def test_example6_spacing_analytic_bound():
    s = GammaSchedule.example6()
    p = np.arange(s.p_min, s.p_max + 1)
    gaps = s.theta(p + 1) - s.theta(p)
    assert gaps.min() >= 0.5 and gaps.max() <= 1.5


def test_interval_index_fuzz_against_bruteforce():
    s = GammaSchedule.example6((-60, 60))
    rng = np.random.default_rng(1)
    t = rng.uniform(s.theta(-50), s.theta(50), 100_000)
    idx = s.interval_index_array(t)
    th = np.array([s.theta(p) for p in range(s.p_min, s.p_max + 2)])
    ref = np.searchsorted(th, t, side="right") - 1 + s.p_min
    assert np.array_equal(idx, ref)
    for k in range(0, 100_000, 5000):
        assert s.interval_index(t[k]) == brute_index(s, t[k])
    z = np.array([s.zeta(p) for p in ref])
    assert np.array_equal(s.gamma(t), z)


def test_out_of_range_raises():
    s = GammaSchedule.example6((-5, 5))
    with pytest.raises(ScheduleRangeError):
        s.interval_index(1e4)
    with pytest.raises(ScheduleRangeError):
        s.gamma(-1e4)


def test_invalid_tables_rejected():
    with pytest.raises(ValueError):
        GammaSchedule.from_table([0.0, 1.0, 0.5], [0.5, 0.7], 0)
    with pytest.raises(ValueError):
        GammaSchedule.from_table([0.0, 1.0, 2.0], [1.5, 1.7], 0)


def test_spacing_report_example6():
    s = GammaSchedule.example6((-3000, 3000))
    rep = s.spacing_report(-1000, 1000)
    assert rep.theta_bar <= 1.5 + 1e-12
    assert rep.theta_under >= 0.5 - 1e-12
    assert rep.theta_bar_consistent and rep.theta_under_consistent and rep.zeta_under_consistent


@pytest.mark.parametrize("slope,offset", [(1.0, 0.0), (2.0, -1.0)])
def test_spacing_report_affine(slope, offset):
    rep = GammaSchedule.affine(slope, offset, 0.0, (-50, 50)).spacing_report(-40, 40)
    assert rep.theta_bar == rep.theta_under == slope


def test_almost_period_integer_schedule():
    s = GammaSchedule.affine(1.0, 0.0, 0.0, (-200, 200))
    rep = s.almost_period_scan(1e-9, (-50, 50), [-2, -1, 1, 2], k_range=(1, 20))
    assert rep.accepted == tuple(range(1, 21))
    assert rep.max_gap == 1


def test_almost_period_periodic_perturbation():
    p = np.arange(-100, 101)
    theta = p + 0.25 * np.sin(2 * np.pi * p / 5)
    zeta = 0.5 * (theta[:-1] + theta[1:])
    s = GammaSchedule.from_table(theta, zeta, -100)
    rep = s.almost_period_scan(1e-9, (-40, 40), [1, 2, 3], k_range=(1, 20))
    assert rep.accepted == (5, 10, 15, 20)


def test_almost_period_example6_nonempty():
    s = GammaSchedule.example6((-300, 4300))
    rep = s.almost_period_scan(0.05, (-200, 200), range(-3, 4), k_range=(1, 4000))
    assert rep.accepted
    assert 622 in rep.accepted
    assert math.isfinite(rep.max_gap)


@st.composite
def tables(draw):
    n = draw(st.integers(3, 30))
    gaps = draw(st.lists(st.floats(0.1, 3.0), min_size=n, max_size=n))
    fracs = draw(st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n))
    start = draw(st.floats(-50, 50))
    theta = start + np.concatenate(([0.0], np.cumsum(gaps)))
    zeta = theta[:-1] + np.asarray(fracs) * np.diff(theta)
    return theta, zeta


@settings(max_examples=60, deadline=None)
@given(tables(), st.floats(0.0, 1.0))
def test_gamma_invariants(table, u):
    theta, zeta = table
    s = GammaSchedule.from_table(theta, zeta, 0)
    t = theta[0] + u * (theta[-1] - theta[0]) * (1 - 1e-12)
    p = s.interval_index(t)
    assert s.theta(p) <= t < s.theta(p + 1)
    assert s.theta(p) <= s.gamma(t) <= s.theta(p + 1)
    # gamma is constant on the interval and non-decreasing across intervals
    assert s.gamma(s.theta(p)) == s.gamma(t)
    if p + 1 <= s.p_max:
        assert s.gamma(s.theta(p + 1)) >= s.gamma(t)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(-5, 5), st.floats(0.0, 1.0))
def test_affine_spacing_exact(slope, offset, adv):
    s = GammaSchedule.affine(slope, offset, adv * slope, (-20, 20))
    rep = s.spacing_report(-10, 10)
    assert rep.theta_bar == pytest.approx(slope)
    assert rep.theta_under == pytest.approx(slope)
