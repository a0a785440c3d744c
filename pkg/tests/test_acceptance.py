"""Acceptance criteria 1-9, each at its stated tolerance and time limit.

Every test prints one ``ACCEPTANCE n: PASS|FAIL`` line; the lines are also
collected into a terminal summary section.
"""
import math
import time

import numpy as np
import pytest

import oracles
from conftest import ACCEPTANCE_LINES
from sicnn import (
    GammaSchedule,
    InputSignal,
    IvpSetup,
    NetworkSpec,
    SolverOptions,
    TrigTerm,
    check_conditions,
    config,
    derived_constants,
    residual,
    solve_ivp,
)
from sicnn.activation import ActivationSpec, clipped_linear, example6_rule
from sicnn.analysis import bounded_solution, pi_residual, stability_envelope, translation_scan


def record(n, ok, detail):
    line = f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_criterion_1_golden_constants():
    t0 = time.perf_counter()
    rc = config.build(config.example6_config())
    k = derived_constants(rc.net, rc.schedule, rc.act.M, rc.act.L)
    elapsed = time.perf_counter() - t0
    exact = {
        "mu": (k.mu, 0.38),
        "c_bar": (k.c_bar, 0.25 / 3),
        "d_bar": (k.d_bar, 0.25 / 3),
        "gamma0": (k.gamma0, 3.0),
        "L_bar": (k.L_bar, 0.35),
        "l_bar": (k.l_bar, 0.34 / 3),
    }
    worst = max(abs(got - want) for got, want in exact.values())
    sums_err = float(np.max(np.abs(np.ravel(k.row_sums) - np.ravel(oracles.NEIGHBOUR_SUMS))))
    ok = worst <= 4 * np.finfo(float).eps and sums_err <= 4 * np.finfo(float).eps and elapsed < 1.0
    record(1, ok, f"max const err {worst:.1e}, max sum err {sums_err:.1e}, {elapsed:.3f}s")


def test_criterion_2_certification():
    t0 = time.perf_counter()
    rc = config.build(config.example6_config())
    rep = check_conditions(rc.net, rc.schedule, rc.act)
    elapsed = time.perf_counter() - t0
    ref = oracles.example_constants()
    names = ["C3", "C5", "C6", "C7", "C9:theta", "C9:zeta"]
    margins_ok = all(rep[n].passed and rep[n].margin > 0 for n in names)
    rel = max(abs(rep[n].lhs - ref[n]) / ref[n] for n in ("C5", "C6", "C7"))
    ok = margins_ok and rel <= 1e-12 and elapsed < 1.0
    lhs = ", ".join(f"{n}={rep[n].lhs:.6g}" for n in ("C5", "C6", "C7"))
    record(2, ok, f"{lhs}; min margin {min(rep[n].margin for n in names):.3g}; rel err {rel:.1e}; {elapsed:.3f}s")


def test_criterion_3_oracle_equivalence():
    t0 = time.perf_counter()
    sched = GammaSchedule.affine(1.0, 0.0, 0.0, (-5, 40))
    net = NetworkSpec([[1.0]], [[0.05]], [InputSignal.constant(0.1)], 0.0, r=0)
    act = ActivationSpec("pointwise_on_gamma", clipped_linear(1.0, 1.0), 1.0, 1.0)
    traj = solve_ivp(net, sched, act, IvpSetup(0.0, [0.2]), 10.0)
    ts, xs = oracles.euler_scalar(1.0, 0.05, lambda v: np.clip(v, -1.0, 1.0), 0.1,
                                  lambda p: float(p), lambda p: float(p), 0.2, 10.0, h=1e-5)
    err = float(np.max(np.abs(traj.eval(ts)[0] - xs)))
    elapsed = time.perf_counter() - t0
    record(3, err <= 1e-3 and elapsed < 30.0, f"sup error {err:.2e} over [0, 10]; {elapsed:.2f}s")


def test_criterion_4_contraction():
    t0 = time.perf_counter()
    rc = config.build(config.example6_config())
    traj = solve_ivp(rc.net, rc.schedule, rc.act, rc.setup, 20.0, SolverOptions(picard_tol=1e-10))
    elapsed = time.perf_counter() - t0
    monotone = all(all(b < a or b == 0.0 for a, b in zip(s.distances, s.distances[1:]))
                   for s in traj.intervals)
    worst = max(s.max_ratio for s in traj.intervals)
    iters = max(s.iterations for s in traj.intervals)
    ok = monotone and worst <= 0.15 and iters <= 10 and elapsed < 10.0
    record(4, ok, f"{len(traj.intervals)} intervals, monotone={monotone}, max ratio {worst:.2e}, "
                  f"max iterations {iters}; {elapsed:.2f}s")


def test_criterion_5_boundedness():
    t0 = time.perf_counter()
    rc = config.build(config.example6_config())
    traj = bounded_solution(rc.net, rc.schedule, rc.act, 0.0, 30.0)
    sup = traj.sup_norm(stride=0.005)
    H = oracles.example_constants()["H"]
    elapsed = time.perf_counter() - t0
    ok = sup <= H + 1e-4 and traj.end - traj.start >= 30.0 and elapsed < 60.0
    record(5, ok, f"sup {sup:.6f} <= H + 1e-4 = {H + 1e-4:.6f} on [0, 30]; {elapsed:.2f}s")


def test_criterion_6_envelope():
    t0 = time.perf_counter()
    rc = config.build(config.example6_config())
    c7 = oracles.example_constants()["C7"]
    parts, ok = [], True
    for delta in (1e-3, 1e-2, 5e-2):
        rep = stability_envelope(rc.net, rc.schedule, rc.act, rc.setup, delta, 10.0)
        k_ok = rep.K_delta == pytest.approx(delta / (1 - c7), rel=1e-12) and rep.rate == 1.5
        ok &= rep.passed and k_ok
        parts.append(f"d={delta:g}: {len(rep.envelope_violations)} violations/{rep.times.size}")
    elapsed = time.perf_counter() - t0
    record(6, ok and elapsed < 60.0, "; ".join(parts) + f"; {elapsed:.2f}s")


def test_criterion_7_residual():
    t0 = time.perf_counter()
    rc = config.build(config.example6_config())
    res = []
    for h in (1e-3, 5e-4):
        traj = solve_ivp(rc.net, rc.schedule, rc.act, rc.setup, 20.0, SolverOptions(h=h))
        res.append(residual(rc.net, rc.schedule, rc.act, traj))
    elapsed = time.perf_counter() - t0
    ratio = res[0] / res[1]
    ok = res[0] <= 1e-5 and ratio >= 3.0 and elapsed < 60.0
    record(7, ok, f"residual h=1e-3: {res[0]:.2e}, h=5e-4: {res[1]:.2e}, ratio {ratio:.2f}; {elapsed:.2f}s")


def test_criterion_8_translation_scan():
    t0 = time.perf_counter()
    rc = config.build(config.example6_config())
    traj = bounded_solution(rc.net, rc.schedule, rc.act, 0.0, 130.0)
    rep = translation_scan(traj, 0.05, (0.0, 100.0), 0.05, (0.0, 30.0))
    main_ok = bool(rep.accepted) and math.isfinite(rep.max_gap)

    period = 5.0
    net = NetworkSpec([[1.0]], [[0.0]], [InputSignal([TrigTerm(1.0, 2 * math.pi / period)])], 0.1, r=0)
    act = ActivationSpec("pointwise_on_gamma_delayed", example6_rule, 0.005, 0.1)
    sched = GammaSchedule.affine(1.0, 0.0, 0.0, (-100, 300))
    ctrl_traj = bounded_solution(net, sched, act, 0.0, 130.0, opts=SolverOptions(h=0.01))
    step = 0.01
    ctrl = translation_scan(ctrl_traj, 0.01, (0.0, 100.0), step, (0.0, 30.0))
    centres = ctrl.clusters()
    multiples = [round(c / period) for c in centres]
    ctrl_ok = (multiples == list(range(0, 21))
               and all(abs(c - period * m) <= step for c, m in zip(centres, multiples)))
    elapsed = time.perf_counter() - t0
    ok = main_ok and ctrl_ok and elapsed < 120.0
    record(8, ok, f"example: {len(rep.accepted)} shifts, max_gap {rep.max_gap:.2f}; "
                  f"control: {len(centres)} clusters at multiples of {period}; {elapsed:.2f}s")


def test_criterion_9_trivial_suite():
    t0 = time.perf_counter()
    rc = config.build(config.example6_config())
    zero_net = NetworkSpec(rc.net.a, rc.net.coupling, [InputSignal.zero()] * 9, rc.net.tau)
    zero = solve_ivp(zero_net, rc.schedule, rc.act, IvpSetup(0.25, np.zeros(9)), 20.0)
    zero_sup = zero.sup_norm(stride=0.01)

    terms = [(0.3, 1.3, 0.2, "sin"), (0.1, 4.0, 0.0, "cos")]
    inputs = [InputSignal([TrigTerm(*t) for t in terms])] * 9
    dec_net = NetworkSpec(rc.net.a, np.zeros((9, 9)), inputs, rc.net.tau)
    t = np.linspace(0.25, 10.0, 2001)
    ref = np.vstack([oracles.linear_forced(a, x0, 0.25, terms, t)
                     for a, x0 in zip(np.ravel(oracles.A), rc.setup.phi)])
    errs = []
    for h in (0.01, 0.005):
        traj = solve_ivp(dec_net, rc.schedule, rc.act, rc.setup, 10.0, SolverOptions(h=h))
        errs.append(float(np.max(np.abs(traj.eval(t) - ref))))
    order = math.log2(errs[0] / errs[1])

    sched = GammaSchedule.example6((-200, 200))
    times = np.random.default_rng(7).uniform(sched.theta(-150), sched.theta(150), 100_000)
    theta = np.array([float(sched.theta(p)) for p in range(-200, 202)])
    brute = np.array([theta[np.flatnonzero(theta <= s)[-1]] for s in times[:2000]])
    idx = np.searchsorted(theta, times, side="right") - 1
    gamma_ok = (np.array_equal(sched.gamma(times), theta[idx])
                and np.array_equal(sched.gamma(times[:2000]), brute)
                and all(sched.gamma(float(s)) == theta[i] for s, i in zip(times[:5000], idx[:5000])))
    elapsed = time.perf_counter() - t0
    ok = zero_sup <= 1e-12 and errs[1] <= 1e-5 and 1.8 <= order <= 2.2 and gamma_ok
    record(9, ok, f"zero sup {zero_sup:.1e}; decoupled err {errs[1]:.2e} (order {order:.2f}); "
                  f"gamma fuzz 1e5 ok={gamma_ok}; {elapsed:.2f}s")
