import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from sicnn import GammaSchedule, InputSignal, NetworkSpec, TrigTerm, check_conditions, derived_constants
from sicnn.activation import ActivationSpec, clipped_linear
from sicnn.network import neighborhood


def test_neighborhood_examples():
    assert sorted(neighborhood(1, 1, 3, 3, 1)) == [(1, 1), (1, 2), (2, 1), (2, 2)]
    assert len(neighborhood(2, 2, 3, 3, 1)) == 9
    assert neighborhood(2, 2, 3, 3, 0) == [(2, 2)]
    with pytest.raises(IndexError):
        neighborhood(4, 1, 3, 3, 1)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 4), st.data())
def test_neighborhood_matches_bruteforce(m, n, r, data):
    i = data.draw(st.integers(1, m))
    j = data.draw(st.integers(1, n))
    ref = {(k, l) for k in range(1, m + 1) for l in range(1, n + 1) if max(abs(k - i), abs(l - j)) <= r}
    got = neighborhood(i, j, m, n, r)
    assert len(got) == len(set(got))
    assert set(got) == ref


def test_input_signal_bounds():
    sig = InputSignal([TrigTerm(0.1, 1.0, 0.0, "cos"), TrigTerm(-0.2, 2.0, 0.0, "sin")])
    assert sig.bound == pytest.approx(0.3)
    t = np.linspace(-50, 50, 5001)
    assert np.max(np.abs(sig(t))) <= sig.bound
    with pytest.raises(ValueError):
        InputSignal([TrigTerm(0.5, 1.0)], bound=0.4)
    with pytest.raises(ValueError):
        InputSignal(func=np.sin)
    assert not InputSignal(func=np.sin, bound=1.0).checked


def test_example6_golden_constants(ex6):
    k = derived_constants(ex6.net, ex6.schedule, ex6.act.M, ex6.act.L)
    assert k.mu == pytest.approx(0.38, abs=1e-15)
    assert k.c_bar == pytest.approx(0.25 / 3, abs=1e-15)
    assert k.d_bar == pytest.approx(0.25 / 3, abs=1e-15)
    assert k.gamma0 == 3
    assert k.L_bar == pytest.approx(0.35, abs=1e-15)
    assert k.l_bar == pytest.approx(0.34 / 3, abs=1e-15)
    assert np.allclose(np.ravel(k.row_sums), np.ravel(oracles.NEIGHBOUR_SUMS), atol=1e-15)


def test_example6_conditions_match_oracle(ex6):
    rep = check_conditions(ex6.net, ex6.schedule, ex6.act)
    ref = oracles.example_constants()
    assert rep.all_passed
    for name in ("C5", "C6", "C7"):
        assert rep[name].lhs == pytest.approx(ref[name], rel=1e-12)
        assert rep[name].margin > 0
    assert rep.constants.H == pytest.approx(ref["H"], rel=1e-14)


def test_H_fixed_point_identity(ex6):
    k = derived_constants(ex6.net, ex6.schedule, ex6.act.M)
    assert k.H == pytest.approx(k.c_bar * ex6.act.M * k.H + k.l_bar, rel=1e-14)


def test_large_M_fails_prerequisites(ex6):
    act = ActivationSpec(ex6.act.kind, ex6.act.rule, 15.0, ex6.act.L)
    rep = check_conditions(ex6.net, ex6.schedule, act)
    assert not rep.all_passed
    assert {"pre:M*c_bar", "pre:mu*theta_bar*M", "C5", "C6", "C7"} <= set(rep.failed)


def test_zero_coupling_passes(ex6):
    net = NetworkSpec.from_cell_weights(ex6.net.a, np.zeros((3, 3)), ex6.net.inputs, ex6.net.tau)
    rep = check_conditions(net, ex6.schedule, ex6.act)
    assert rep.all_passed
    assert rep["C5"].lhs == rep["C6"].lhs == rep["C7"].lhs == 0.0


def test_coupling_outside_neighbourhood_rejected():
    W = np.zeros((4, 4))
    W[0, 3] = 0.1  # cells (1,1) and (2,2) of a 2x2 grid are neighbours at r=1, but not at r=0
    inputs = [InputSignal.zero()] * 4
    NetworkSpec(np.ones((2, 2)), W, inputs, 0.1, r=1)
    with pytest.raises(ValueError):
        NetworkSpec(np.ones((2, 2)), W, inputs, 0.1, r=0)
    with pytest.raises(ValueError):
        NetworkSpec(-np.ones((2, 2)), np.zeros((4, 4)), inputs, 0.1)


def _tiny(weight, a=2.0, amp=0.2, tau=0.2):
    net = NetworkSpec.from_cell_weights(np.full((2, 2), a), np.full((2, 2), weight),
                                        [InputSignal([TrigTerm(amp, 1.0)])] * 4, tau)
    return net


@settings(max_examples=40, deadline=None)
@given(st.floats(0.001, 0.1), st.floats(1.01, 3.0))
def test_conditions_scale_monotonically_with_coupling(w, factor):
    sched = GammaSchedule.affine(1.0, 0.0, 0.5, (-100, 100))
    act = ActivationSpec("pointwise_on_gamma_delayed", clipped_linear(1.0, 0.05), 0.05, 1.0)
    lo = check_conditions(_tiny(w), sched, act, almost_periodic=False)
    hi = check_conditions(_tiny(w).scaled(factor), sched, act, almost_periodic=False)
    assert hi.constants.mu == pytest.approx(factor * lo.constants.mu)
    for name in ("C5", "C6", "C7"):
        assert hi[name].lhs > lo[name].lhs


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.1), st.floats(0.001, 0.5), st.floats(0.0, 0.5))
def test_c7_monotone_in_tau_and_L(w, L, dtau):
    sched = GammaSchedule.affine(1.0, 0.0, 0.5, (-100, 100))
    act = ActivationSpec("pointwise_on_gamma_delayed", clipped_linear(L, 0.05), 0.05, L)
    act2 = ActivationSpec("pointwise_on_gamma_delayed", clipped_linear(2 * L, 0.05), 0.05, 2 * L)
    base = check_conditions(_tiny(w, tau=0.2), sched, act, almost_periodic=False)
    longer = check_conditions(_tiny(w, tau=0.2 + dtau), sched, act, almost_periodic=False)
    steeper = check_conditions(_tiny(w, tau=0.2), sched, act2, almost_periodic=False)
    assert longer["C7"].lhs >= base["C7"].lhs
    assert steeper["C7"].lhs > base["C7"].lhs
    assert steeper["C5"].lhs > base["C5"].lhs


def test_theta_bar_monotone():
    act = ActivationSpec("pointwise_on_gamma_delayed", clipped_linear(1.0, 0.05), 0.05, 1.0)
    lhs = [check_conditions(_tiny(0.02), GammaSchedule.affine(s, 0.0, 0.0, (-50, 50)), act)["C5"].lhs
           for s in (0.5, 1.0, 1.5, 2.0)]
    assert all(x < y for x, y in zip(lhs, lhs[1:]))


def test_K_formula(ex6):
    rep = check_conditions(ex6.net, ex6.schedule, ex6.act)
    k = rep.constants
    assert rep.K_denominator == pytest.approx(1 - rep["C7"].lhs)
    assert rep.K(0.01) == pytest.approx(0.01 / (1 - rep["C7"].lhs))
    assert rep.K(0.0) == 0.0
    assert math.isfinite(k.H)
