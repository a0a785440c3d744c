"""Bounded and almost periodic solutions, stability envelopes, translation scans."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .activation import ActivationSpec
from .integrator import (
    IvpSetup,
    SolverOptions,
    Trajectory,
    integral_defect,
    solve_ivp,
)
from .network import ConditionReport, NetworkSpec, check_conditions
from .schedule import GammaSchedule

__all__ = [
    "CertificationError",
    "InsufficientHistoryError",
    "StabilityReport",
    "TranslationReport",
    "backward_horizon",
    "bounded_solution",
    "pi_residual",
    "stability_envelope",
    "translation_scan",
]


class CertificationError(RuntimeError):
    """Conditions required by an analysis do not hold."""

    def __init__(self, message: str, report: ConditionReport, failed):
        super().__init__(message)
        self.report = report
        self.failed = list(failed)


class InsufficientHistoryError(ValueError):
    def __init__(self, message: str, required: float):
        super().__init__(message)
        self.required = required


def _require(report: ConditionReport, names, what: str) -> None:
    failed = [n for n in names if not report[n].passed]
    if failed:
        raise CertificationError(
            f"{what} requires {', '.join(names)}; failing: {', '.join(failed)}",
            report,
            failed,
        )


def backward_horizon(report: ConditionReport, accuracy: float) -> float:
    """Smallest ``T`` with ``K(H) * exp(-gamma0 * T / 2) <= accuracy``.

    Starting from the zero segment, the initial error against the bounded
    solution is at most ``H``; the stability envelope then shrinks it at rate
    ``gamma0 / 2``.
    """
    if accuracy <= 0:
        raise ValueError("accuracy must be positive")
    k = report.constants
    amp = report.K(k.H)
    if amp <= accuracy:
        return 0.0
    return 2.0 / k.gamma0 * math.log(amp / accuracy)


def bounded_solution(
    net: NetworkSpec,
    schedule: GammaSchedule,
    act: ActivationSpec,
    t0: float,
    t1: float,
    accuracy: float = 1e-6,
    opts: SolverOptions = SolverOptions(),
    t_back: Optional[float] = None,
) -> Trajectory:
    """Approximate the unique bounded solution on ``[t0, t1]``.

    Integrates from ``t0 - t_back`` with zero initial data and discards the
    transient. By default ``t_back`` is 10% above :func:`backward_horizon`.
    The returned trajectory keeps the discarded part as lookup history; its
    nominal window is ``[t0, t1]``.
    """
    if not t1 > t0:
        raise ValueError("need t1 > t0")
    report = check_conditions(net, schedule, act, almost_periodic=False)
    _require(report, ("C5", "C6", "C7"), "the bounded solution")
    if t_back is None:
        t_back = 1.1 * backward_horizon(report, accuracy)
    t_back = max(float(t_back), net.tau, schedule.theta_bar)
    zero = np.zeros(net.size)
    setup = IvpSetup(t0 - t_back, zero, zero)
    if setup.regime(schedule) == "IC1":
        setup.psi = None
    traj = solve_ivp(net, schedule, act, setup, t1, opts, check=False)
    out = traj.restrict(t0, t1)
    out.t_back = t_back
    out.accuracy = accuracy
    out.report = report
    return out


def pi_residual(
    net: NetworkSpec,
    act: ActivationSpec,
    traj: Trajectory,
    t_from: Optional[float] = None,
    tail_tol: float = 1e-6,
    h_fine: Optional[float] = None,
) -> float:
    """Max defect of the whole-line integral equation on ``[t_from, traj.end]``.

    The integral over ``(-inf, traj.start]`` is dropped; its size at time
    ``t`` is at most ``(M c_bar H + l_bar) exp(-gamma0 (t - start))``, so
    ``t_from`` must leave enough room for that tail to fall below
    ``tail_tol``.
    """
    report = check_conditions(net, traj.schedule, act, almost_periodic=False)
    k = report.constants
    if not math.isfinite(k.H):
        raise CertificationError("H undefined (M*c_bar >= 1)", report, ["pre:M*c_bar"])
    tail = act.M * k.c_bar * k.H + k.l_bar
    required = max(0.0, math.log(tail / tail_tol) / k.gamma0) if tail > 0 else 0.0
    if t_from is None:
        t_from = traj.start + required
    if t_from - traj.start < required - 1e-12:
        raise InsufficientHistoryError(
            f"need at least {required:.4g} time units of trajectory before t_from "
            f"(have {t_from - traj.start:.4g})",
            required,
        )
    if t_from >= traj.end:
        raise InsufficientHistoryError(
            f"trajectory ends at {traj.end}, before t_from={t_from}", required
        )
    view = traj
    if traj.net is not net or traj.act is not act:
        view = Trajectory.__new__(Trajectory)
        view.__dict__.update(traj.__dict__)
        view.net, view.act = net, act
    times, defect = integral_defect(view, view.start, view.end, with_initial=False, h_fine=h_fine)
    sel = times >= t_from
    return float(np.max(np.abs(defect[:, sel])))


@dataclass
class StabilityReport:
    delta: float
    K_delta: float
    rate: float
    sigma: float
    horizon: float
    envelope_violations: list
    fitted_rate: float
    times: np.ndarray = field(repr=False)
    norms: np.ndarray = field(repr=False)
    bounds: np.ndarray = field(repr=False)

    @property
    def passed(self) -> bool:
        return not self.envelope_violations

    @property
    def min_slack(self) -> float:
        """Smallest ``bound - ||w||`` over the samples."""
        return float(np.min(self.bounds - self.norms))

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "K_delta": self.K_delta,
            "rate": self.rate,
            "sigma": self.sigma,
            "horizon": self.horizon,
            "samples": int(self.times.size),
            "envelope_violations": [list(v) for v in self.envelope_violations[:20]],
            "violation_count": len(self.envelope_violations),
            "fitted_rate": self.fitted_rate,
            "min_slack": self.min_slack,
            "pass": self.passed,
        }

    def write_csv(self, fh) -> None:
        fh.write("t,norm_w,envelope\n")
        for t, w, b in zip(self.times, self.norms, self.bounds):
            fh.write(f"{t:.10g},{w:.12g},{b:.12g}\n")


def _fit_rate(times, norms, floor=1e-13) -> float:
    sel = norms > floor
    if np.count_nonzero(sel) < 2:
        return math.nan
    slope = np.polyfit(times[sel], np.log(norms[sel]), 1)[0]
    return float(-slope)


def stability_envelope(
    net: NetworkSpec,
    schedule: GammaSchedule,
    act: ActivationSpec,
    base: IvpSetup,
    delta: float,
    horizon: float,
    opts: SolverOptions = SolverOptions(),
) -> StabilityReport:
    """Compare a solution with its ``delta``-offset and check the decay envelope.

    The perturbed run starts from ``base`` shifted by ``delta`` in every cell.
    Both runs share the same grid, so ``w = u - v`` is compared at every
    solver node on ``[sigma, sigma + horizon]`` against
    ``K(delta) * exp(-gamma0 (t - sigma) / 2)``.
    """
    if delta < 0 or horizon <= 0:
        raise ValueError("need delta >= 0 and horizon > 0")
    report = check_conditions(net, schedule, act, almost_periodic=False)
    _require(report, ("C7",), "the stability envelope")
    sigma = float(base.sigma)
    t_end = sigma + horizon
    ref = solve_ivp(net, schedule, act, base, t_end, opts, check=False)
    pert = solve_ivp(net, schedule, act, base.offset(delta), t_end, opts, check=False)
    T, U, _ = ref.nodes
    _, V, _ = pert.nodes
    sel = T <= t_end
    times = T[sel]
    norms = np.max(np.abs(V[:, sel] - U[:, sel]), axis=0)
    gamma0 = report.constants.gamma0
    K = report.K(delta)
    bounds = K * np.exp(-0.5 * gamma0 * (times - sigma))
    # w = v - u carries a few ulps of the state size from the subtraction
    slack = 8 * np.finfo(float).eps * np.max(np.abs(np.concatenate([U[:, sel], V[:, sel]])), initial=0.0)
    bad = np.flatnonzero(norms > bounds + slack)
    violations = [(float(times[i]), float(norms[i]), float(bounds[i])) for i in bad]
    return StabilityReport(
        delta=float(delta),
        K_delta=K,
        rate=0.5 * gamma0,
        sigma=sigma,
        horizon=float(horizon),
        envelope_violations=violations,
        fitted_rate=_fit_rate(times, norms),
        times=times,
        norms=norms,
        bounds=bounds,
    )


@dataclass
class TranslationReport:
    eps: float
    accepted: list
    max_gap: float
    scan_window: tuple
    alpha_grid: dict
    note: str = "grid-search evidence; not a proof of almost periodicity"

    def clusters(self, join: Optional[float] = None) -> list[float]:
        """Centres of runs of accepted shifts closer than ``join`` (default 1.5 grid steps)."""
        if not self.accepted:
            return []
        join = 1.5 * self.alpha_grid["step"] if join is None else join
        groups, cur = [], [self.accepted[0]]
        for a in self.accepted[1:]:
            if a - cur[-1] <= join:
                cur.append(a)
            else:
                groups.append(cur)
                cur = [a]
        groups.append(cur)
        return [0.5 * (g[0] + g[-1]) for g in groups]

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "accepted_count": len(self.accepted),
            "accepted": [float(a) for a in self.accepted],
            "clusters": self.clusters(),
            "max_gap": self.max_gap,
            "scan_window": list(self.scan_window),
            "alpha_grid": self.alpha_grid,
            "note": self.note,
        }


def translation_scan(
    traj: Trajectory,
    eps: float,
    alpha_range: tuple[float, float],
    alpha_step: float,
    window: tuple[float, float],
    samples_per_step: int = 4,
    exclude_zero: bool = True,
) -> TranslationReport:
    """Grid search for eps-translation numbers of ``traj`` over ``window``.

    ``alpha`` is accepted when ``max_t ||x(t + alpha) - x(t)|| < eps`` with
    ``t`` sampled on ``window`` at spacing ``alpha_step / samples_per_step``.
    ``max_gap`` is the largest distance between consecutive accepted shifts
    (``inf`` with fewer than two).
    """
    if eps <= 0 or alpha_step <= 0:
        raise ValueError("eps and alpha_step must be positive")
    a0, a1 = map(float, alpha_range)
    w0, w1 = map(float, window)
    if a1 < a0 or w1 <= w0:
        raise ValueError("empty alpha range or window")
    lo, hi = w0 + min(a0, 0.0), w1 + max(a1, 0.0)
    if lo < traj.start - 1e-9 or hi > traj.end + 1e-9:
        raise ValueError(
            f"trajectory covers [{traj.start}, {traj.end}] but the scan needs [{lo}, {hi}]"
        )
    n_alpha = int(math.floor((a1 - a0) / alpha_step + 1e-9)) + 1
    alphas = a0 + alpha_step * np.arange(n_alpha)
    ds = alpha_step / samples_per_step
    n_t = int(math.ceil((w1 - w0) / ds - 1e-9)) + 1
    t = np.linspace(w0, w1, n_t)
    base = traj.eval(t)
    accepted = []
    for alpha in alphas:
        if exclude_zero and abs(alpha) < 0.5 * alpha_step:
            continue
        shifted = traj.eval(np.clip(t + alpha, traj.start, traj.end))
        if np.max(np.abs(shifted - base)) < eps:
            accepted.append(float(alpha))
    max_gap = float(np.max(np.diff(accepted))) if len(accepted) >= 2 else math.inf
    return TranslationReport(
        eps=float(eps),
        accepted=accepted,
        max_gap=max_gap,
        scan_window=(w0, w1),
        alpha_grid={"start": a0, "stop": a1, "step": float(alpha_step), "count": n_alpha},
    )
