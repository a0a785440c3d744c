"""Interval-by-interval solver for SICNNs with piecewise constant argument.

On each interval ``[theta_p, theta_{p+1}]`` the solution is the fixed point of

    (Phi u)_ij(t) = exp(-a_ij (t - left)) x_ij(left)
                    - int_left^t exp(-a_ij (t - s)) [ S_ij(u)(s) u_ij(s) - L_ij(s) ] ds,

    S_ij(u)(s) = sum_{kl in N_r(ij)} C_ij^kl f(u_kl,s , u_kl,gamma(s)),

which is found by Picard iteration on a uniform substep grid. References that
fall inside the current interval (including advanced ones, ``gamma(s) > s``)
read the previous iterate; earlier references read committed history. The
integral is evaluated against the exact exponential kernel with trapezoid or
Simpson weights, and the committed iterate carries cubic Hermite dense output
with node derivatives taken from the equation itself.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .activation import ActivationSpec
from .network import NetworkSpec, check_conditions
from .schedule import GammaSchedule

__all__ = [
    "SolverOptions",
    "IvpSetup",
    "IntervalStats",
    "IntervalSolution",
    "Trajectory",
    "HistoryLookupError",
    "PicardConvergenceError",
    "InitialConditionError",
    "as_segment",
    "solve_interval",
    "solve_ivp",
    "residual",
    "integral_defect",
]

_TOL = 1e-10


class HistoryLookupError(ValueError):
    """A lookup fell outside the stored history of a trajectory."""


class PicardConvergenceError(RuntimeError):
    def __init__(self, message, p=None, ratio=None, distances=()):
        super().__init__(message)
        self.p = p
        self.ratio = ratio
        self.distances = tuple(distances)


class InitialConditionError(ValueError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    """Step size and Picard controls. ``h=None`` picks ``min(theta_under, tau, 1)/50``."""

    h: Optional[float] = None
    picard_tol: float = 1e-10
    picard_max_iters: int = 100
    quadrature: str = "trapezoid"

    def __post_init__(self):
        if self.quadrature not in ("trapezoid", "simpson"):
            raise ValueError(f"unknown quadrature {self.quadrature!r}")
        if self.h is not None and not self.h > 0:
            raise ValueError("h must be positive")
        if not self.picard_tol > 0 or self.picard_max_iters < 1:
            raise ValueError("picard_tol must be positive and picard_max_iters >= 1")

    def step(self, schedule: GammaSchedule, tau: float) -> float:
        if self.h is not None:
            return float(self.h)
        scales = [schedule.theta_under, 1.0]
        if tau > 0:
            scales.append(tau)
        return min(scales) / 50.0


def as_segment(value, size: int) -> Callable[[np.ndarray], np.ndarray]:
    """Normalise an initial segment to ``s -> array (size, len(s))``.

    Accepts a callable of the offset ``s`` or per-cell constants (any shape
    with ``size`` entries).
    """
    if callable(value):
        fn = value

        def seg(s):
            s = np.atleast_1d(np.asarray(s, dtype=float))
            out = np.asarray(fn(s), dtype=float)
            if out.shape == (size,) and s.shape != (size,):
                out = np.broadcast_to(out[:, None], (size, s.size))
            return np.broadcast_to(out.reshape(size, -1), (size, s.size))

        return seg
    const = np.asarray(value, dtype=float).reshape(-1)
    if const.size != size:
        raise InitialConditionError(f"initial segment needs {size} values, got {const.size}")

    def seg(s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return np.repeat(const[:, None], s.size, axis=1)

    seg.constant = const
    return seg


@dataclass
class IvpSetup:
    """Start time and initial segments; ``psi`` is used only under IC2."""

    sigma: float
    phi: object
    psi: object = None

    def regime(self, schedule: GammaSchedule) -> str:
        p = schedule.interval_index(self.sigma)
        return "IC2" if schedule.zeta(p) < self.sigma else "IC1"

    def offset(self, delta: float) -> "IvpSetup":
        """Both segments shifted by ``delta`` in every cell (sup distance exactly ``delta``)."""

        def shift(seg):
            if seg is None:
                return None
            if callable(seg):
                return lambda s, _seg=seg: np.asarray(_seg(s), dtype=float) + delta
            return np.asarray(seg, dtype=float) + delta

        return IvpSetup(self.sigma, shift(self.phi), shift(self.psi))


@dataclass(frozen=True)
class IntervalStats:
    p: int
    left: float
    right: float
    steps: int
    iterations: int
    distances: tuple[float, ...]
    iterate_norms: tuple[float, ...]

    @property
    def ratios(self) -> tuple[float, ...]:
        d = self.distances
        return tuple(d[k] / d[k - 1] for k in range(1, len(d)) if d[k - 1] > 0)

    @property
    def max_ratio(self) -> float:
        r = self.ratios
        return max(r) if r else 0.0


@dataclass(frozen=True)
class IntervalSolution:
    times: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    stats: IntervalStats


def _hermite_basis(T: np.ndarray, t: np.ndarray):
    i = np.searchsorted(T, t, side="right") - 1
    i = np.clip(i, 0, len(T) - 2)
    hh = T[i + 1] - T[i]
    x = (t - T[i]) / hh
    x = np.clip(x, 0.0, 1.0)
    x2 = x * x
    h00 = (1 + 2 * x) * (1 - x) ** 2
    h10 = x * (1 - x) ** 2 * hh
    h01 = x2 * (3 - 2 * x)
    h11 = x2 * (x - 1) * hh
    return i, h00, h10, h01, h11


def _hermite_apply(basis, U, D):
    i, h00, h10, h01, h11 = basis
    return h00 * U[:, i] + h10 * D[:, i] + h01 * U[:, i + 1] + h11 * D[:, i + 1]


class Trajectory:
    """Dense-output record of a solution.

    Values are returned with cells along the first axis, matching
    :class:`scipy.integrate.OdeSolution`: ``traj(t)`` has shape ``(m*n,)``
    for scalar ``t`` and ``(m*n, len(t))`` for arrays.
    """

    def __init__(self, net: NetworkSpec, schedule: GammaSchedule, act: ActivationSpec,
                 sigma: float, initial: Sequence[tuple[float, float, Callable]]):
        self.net = net
        self.schedule = schedule
        self.act = act
        self.sigma = float(sigma)
        self.start = float(sigma)
        self.end = float(sigma)
        self._initial = list(initial)
        self._times: list[np.ndarray] = []
        self._values: list[np.ndarray] = []
        self._derivs: list[np.ndarray] = []
        self.intervals: list[IntervalStats] = []
        self._flat = None

    # -- building ---------------------------------------------------------

    def _commit(self, sol: IntervalSolution) -> None:
        if self._times and abs(sol.times[0] - self._times[-1][-1]) > _TOL:
            raise HistoryLookupError("interval does not continue the trajectory")
        self._times.append(sol.times)
        self._values.append(sol.values)
        self._derivs.append(sol.derivs)
        self.intervals.append(sol.stats)
        self._flat = None
        self.end = float(sol.times[-1])

    def _arrays(self):
        if self._flat is None:
            self._flat = (
                np.concatenate(self._times),
                np.concatenate(self._values, axis=1),
                np.concatenate(self._derivs, axis=1),
            )
        return self._flat

    @property
    def computed_end(self) -> float:
        return float(self._times[-1][-1]) if self._times else self.sigma

    @property
    def history_start(self) -> float:
        if self._initial:
            return min(lo for lo, _, _ in self._initial)
        return self.sigma

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([st.left for st in self.intervals[1:]])

    @property
    def nodes(self):
        """Flattened ``(times, values, derivs)``; breakpoint nodes appear twice."""
        return self._arrays()

    # -- evaluation -------------------------------------------------------

    def eval(self, t) -> np.ndarray:
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((self.net.size, t.size))
        comp = t >= self.sigma if self._times else np.zeros(t.size, dtype=bool)
        if np.any(comp):
            tc = t[comp]
            hi = self.computed_end
            if not self._times or tc.max() > hi + _TOL * max(1.0, abs(hi)):
                raise HistoryLookupError(
                    f"t={tc.max()} beyond computed range [{self.sigma}, {hi}]"
                )
            T, U, D = self._arrays()
            out[:, comp] = _hermite_apply(_hermite_basis(T, np.minimum(tc, hi)), U, D)
        if not np.all(comp):
            out[:, ~comp] = self._eval_initial(t[~comp])
        return out[:, 0] if scalar else out

    __call__ = eval

    def _eval_initial(self, t: np.ndarray) -> np.ndarray:
        out = np.full((self.net.size, t.size), np.nan)
        done = np.zeros(t.size, dtype=bool)
        for lo, hi, fn in self._initial:
            tol = _TOL * max(1.0, abs(lo), abs(hi))
            sel = ~done & (t >= lo - tol) & (t <= hi + tol)
            if np.any(sel):
                out[:, sel] = fn(np.clip(t[sel], lo, hi))
                done |= sel
        if not np.all(done):
            bad = t[~done][0]
            spans = ", ".join(f"[{lo}, {hi}]" for lo, hi, _ in self._initial)
            raise HistoryLookupError(
                f"history lookup at t={bad} not covered (initial data: {spans}; "
                f"computed from {self.sigma})"
            )
        return out

    # -- views and export -------------------------------------------------

    def restrict(self, t0: float, t1: Optional[float] = None) -> "Trajectory":
        """Same data with nominal window ``[t0, t1]``; earlier data stays available as history."""
        t1 = self.end if t1 is None else t1
        if t0 < self.sigma - _TOL or t1 > self.computed_end + _TOL or t1 < t0:
            raise ValueError(f"window [{t0}, {t1}] not inside [{self.sigma}, {self.computed_end}]")
        view = Trajectory.__new__(Trajectory)
        view.__dict__.update(self.__dict__)
        view.start, view.end = float(t0), float(t1)
        return view

    def sample_times(self, stride: float, t0: Optional[float] = None, t1: Optional[float] = None) -> np.ndarray:
        t0 = self.start if t0 is None else t0
        t1 = self.end if t1 is None else t1
        if stride <= 0:
            raise ValueError("stride must be positive")
        count = int(math.floor((t1 - t0) / stride + 1e-9)) + 1
        return t0 + stride * np.arange(count)

    def sup_norm(self, t0: Optional[float] = None, t1: Optional[float] = None, stride: Optional[float] = None) -> float:
        """Max over cells of ``|x_ij(t)|`` on ``[t0, t1]``, at all nodes and a uniform sample."""
        t0 = self.start if t0 is None else t0
        t1 = self.end if t1 is None else t1
        T, U, _ = self._arrays()
        sel = (T >= t0) & (T <= t1)
        best = float(np.max(np.abs(U[:, sel]))) if np.any(sel) else 0.0
        if stride is not None:
            best = max(best, float(np.max(np.abs(self.eval(self.sample_times(stride, t0, t1))))))
        return best

    def write_csv(self, path_or_file, stride: float, t0: Optional[float] = None, t1: Optional[float] = None) -> None:
        times = self.sample_times(stride, t0, t1)
        vals = self.eval(times)
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + self.net.cell_labels)
            for k, t in enumerate(times):
                w.writerow([f"{t:.10g}"] + [f"{v:.12g}" for v in vals[:, k]])
        finally:
            if own:
                fh.close()

    def __repr__(self) -> str:
        return (f"Trajectory(start={self.start}, end={self.end}, cells={self.net.size}, "
                f"intervals={len(self.intervals)})")


def _cumulative_quadrature(F: np.ndarray, hs: float, rule: str) -> np.ndarray:
    """Running integrals ``int_{s_0}^{s_k} F`` on a uniform grid, shape preserved."""
    K = F.shape[1] - 1
    out = np.zeros_like(F)
    if rule == "trapezoid" or K < 2:
        out[:, 1:] = np.cumsum(0.5 * hs * (F[:, :-1] + F[:, 1:]), axis=1)
        return out
    ev = hs / 3.0 * (F[:, 0:K - 1:2] + 4.0 * F[:, 1:K:2] + F[:, 2:K + 1:2])
    out[:, 2::2] = np.cumsum(ev, axis=1)
    first = hs / 12.0 * (5.0 * F[:, 0] + 8.0 * F[:, 1] - F[:, 2])
    out[:, 1] = first
    if K >= 3:
        od = hs / 3.0 * (F[:, 1:K - 1:2] + 4.0 * F[:, 2:K:2] + F[:, 3:K + 1:2])
        out[:, 3::2] = first[:, None] + np.cumsum(od, axis=1)
    return out


def _kernel_integral(G: np.ndarray, s: np.ndarray, a: np.ndarray, rule: str) -> np.ndarray:
    """``int_{s_0}^{s_k} exp(-a (s_k - u)) G(u) du`` for every node ``k``."""
    rel = s - s[0]
    hs = rel[1] - rel[0]
    if float(np.max(a)) * rel[-1] < 600.0:
        grow = np.exp(a * rel)
        return np.exp(-a * rel) * _cumulative_quadrature(grow * G, hs, rule)
    # long interval with fast decay: march in chunks to keep exponentials finite
    out = np.zeros_like(G)
    chunk = max(2, int(300.0 / (float(np.max(a)) * hs)))
    start, carry = 0, np.zeros(G.shape[0])
    while start < len(s) - 1:
        stop = min(len(s) - 1, start + chunk)
        seg = _kernel_integral(G[:, start:stop + 1], s[start:stop + 1], a, rule)
        decay = np.exp(-a * (s[start:stop + 1] - s[start]))
        out[:, start:stop + 1] = decay * carry[:, None] + seg
        carry = out[:, stop]
        start = stop
    return out


def _probe_plan(act: ActivationSpec, tau: float):
    probes, weights = act.resolved_probes(tau)
    return probes, weights


def solve_interval(
    net: NetworkSpec,
    schedule: GammaSchedule,
    act: ActivationSpec,
    left: float,
    right: float,
    history: Trajectory,
    opts: SolverOptions = SolverOptions(),
    p: Optional[int] = None,
) -> IntervalSolution:
    """Picard iteration for the local solution on ``[left, right]``.

    ``[left, right]`` must lie inside a single ``[theta_p, theta_{p+1}]`` and
    ``history`` must provide ``x(left)`` and every earlier value the
    functional references.
    """
    if p is None:
        p = schedule.interval_index(left)
    if left < schedule.theta(p) - _TOL or right > schedule.theta(p + 1) + _TOL or right <= left:
        raise ValueError(f"[{left}, {right}] is not inside [theta_{p}, theta_{p + 1}]")
    h = opts.step(schedule, net.tau)
    K = max(4, int(math.ceil((right - left) / h - 1e-9)))
    s = np.linspace(left, right, K + 1)
    zeta = schedule.zeta(p)
    a = net.decay[:, None]
    W = net.coupling
    Lvals = net.input_values(s)
    x_left = history.eval(left)
    probes, weights = _probe_plan(act, net.tau)

    # Each probe splits into a fixed part (committed history) and a part inside
    # the current interval whose Hermite basis is reused across passes.
    plans = []
    for which, off in probes:
        t_probe = (s if which == "now" else np.full_like(s, zeta)) + off
        inside = t_probe >= left
        fixed = None
        if not np.all(inside):
            fixed = history.eval(t_probe[~inside])
        basis = _hermite_basis(s, np.minimum(t_probe[inside], right)) if np.any(inside) else None
        plans.append((inside, fixed, basis))

    def integrand(U, D):
        vals = []
        for inside, fixed, basis in plans:
            v = np.empty_like(U)
            if fixed is not None:
                v[:, ~inside] = fixed
            if basis is not None:
                v[:, inside] = _hermite_apply(basis, U, D)
            vals.append(v)
        F = np.asarray(act.combine(vals, weights), dtype=float)
        return (W @ F) * U - Lvals

    E = np.exp(-a * (s - left))
    U = np.repeat(x_left[:, None], K + 1, axis=1)
    D = np.zeros_like(U)
    distances, norms = [], []
    converged = False
    for _ in range(opts.picard_max_iters):
        G = integrand(U, D)
        U_new = E * x_left[:, None] - _kernel_integral(G, s, a, opts.quadrature)
        dist = float(np.max(np.abs(U_new - U)))
        U, D = U_new, -a * U_new - G
        distances.append(dist)
        norms.append(float(np.max(np.abs(U))))
        if not np.isfinite(dist):
            break
        if dist < opts.picard_tol:
            converged = True
            break
    stats = IntervalStats(p, float(left), float(right), K, len(distances), tuple(distances), tuple(norms))
    if not converged:
        ratio = stats.ratios[-1] if stats.ratios else float("nan")
        raise PicardConvergenceError(
            f"Picard iteration on [{left}, {right}] (p={p}) did not reach tol "
            f"{opts.picard_tol} in {len(distances)} passes; last contraction ratio "
            f"{ratio:.3g} (smallness condition mu*theta_bar*(M + 2*K0*L) < 1 likely violated)",
            p=p, ratio=ratio, distances=distances,
        )
    # final derivative from the converged iterate, so the right derivative at
    # theta_p uses this interval's gamma
    D = -a * U - integrand(U, D)
    return IntervalSolution(s, U, D, stats)


def _initial_pieces(net: NetworkSpec, schedule: GammaSchedule, setup: IvpSetup):
    N, tau, sigma = net.size, net.tau, float(setup.sigma)
    phi = as_segment(setup.phi, N)
    pieces = [(sigma - tau, sigma, lambda t, _f=phi: _f(t - sigma))]
    regime = setup.regime(schedule)
    if regime == "IC2":
        if setup.psi is None:
            raise InitialConditionError(
                "sigma lies after zeta_p in its interval (IC2): a second segment psi is required"
            )
        g = schedule.gamma(sigma)
        psi = as_segment(setup.psi, N)
        if g >= sigma - tau:
            # overlapping windows must agree
            s = np.linspace(-tau, g - sigma, 64)
            gap = np.max(np.abs(phi(s) - psi(s + sigma - g))) if s.size else 0.0
            if gap > 1e-8:
                raise InitialConditionError(
                    f"phi and psi disagree by {gap:.3g} on their common window"
                )
        pieces.append((g - tau, g, lambda t, _f=psi: _f(t - g)))
    elif setup.psi is not None:
        warnings.warn("psi ignored: sigma <= zeta_p (IC1 needs only phi)", stacklevel=3)
    return pieces, regime


def solve_ivp(
    net: NetworkSpec,
    schedule: GammaSchedule,
    act: ActivationSpec,
    setup: IvpSetup,
    t_end: float,
    opts: SolverOptions = SolverOptions(),
    check: bool = True,
) -> Trajectory:
    """Integrate from ``setup.sigma`` to ``t_end`` interval by interval.

    Whole intervals are always solved (an advanced argument may reach beyond
    ``t_end``), so the computed range ends at the first ``theta_p >= t_end``;
    ``traj.end`` is set to ``t_end``.
    """
    sigma = float(setup.sigma)
    if not t_end > sigma:
        raise ValueError("t_end must exceed sigma")
    if check:
        report = check_conditions(net, schedule, act, almost_periodic=False)
        failed = [n for n in report.failed if n in ("C5", "C6", "C7")]
        if failed:
            warnings.warn(
                f"conditions {failed} fail; continuation beyond one interval is not guaranteed",
                stacklevel=2,
            )
    pieces, regime = _initial_pieces(net, schedule, setup)
    traj = Trajectory(net, schedule, act, sigma, pieces)
    traj.regime = regime
    p = schedule.interval_index(sigma)
    left = sigma
    while left < t_end:
        right = schedule.theta(p + 1)
        traj._commit(solve_interval(net, schedule, act, left, right, traj, opts, p))
        left, p = right, p + 1
    traj.end = float(t_end)
    return traj


def integral_defect(
    traj: Trajectory,
    lo: float,
    hi: Optional[float] = None,
    with_initial: bool = True,
    h_fine: Optional[float] = None,
):
    """Defect of the variation-of-constants identity recomputed from ``traj``.

    Returns sample times and ``traj(t) - rhs(t)`` where

        rhs(t) = [exp(-a (t - lo)) x(lo)] - int_lo^t exp(-a (t - s)) g(s) ds

    and ``g`` is built from the trajectory's own dense output. The integral
    uses 3-point Gauss-Legendre on cells that never straddle a ``theta_p``.
    The bracketed term is dropped when ``with_initial`` is false (the
    truncated whole-line form).
    """
    net, schedule, act = traj.net, traj.schedule, traj.act
    hi = traj.end if hi is None else hi
    if h_fine is None:
        steps = [(st.right - st.left) / st.steps for st in traj.intervals]
        h_fine = 0.5 * float(np.median(steps))
    a = net.decay[:, None]
    W = net.coupling
    probes, weights = act.resolved_probes(net.tau)
    gx, gw = np.polynomial.legendre.leggauss(3)

    edges = np.concatenate(([lo], schedule.breakpoints(lo, hi), [hi]))
    edges = np.unique(edges)
    x_lo = traj.eval(lo)
    carry = np.zeros(net.size)
    all_t, all_def = [], []
    for left, right in zip(edges[:-1], edges[1:]):
        if right - left <= _TOL:
            continue
        n = max(1, int(math.ceil((right - left) / h_fine - 1e-9)))
        cells = np.linspace(left, right, n + 1)
        hc = (right - left) / n
        mid = 0.5 * (cells[:-1] + cells[1:])
        q = (mid[:, None] + 0.5 * hc * gx[None, :]).ravel()
        zeta = schedule.gamma(0.5 * (left + right))
        vals = [traj.eval((q if which == "now" else np.full_like(q, zeta)) + off)
                for which, off in probes]
        F = np.asarray(act.combine(vals, weights), dtype=float)
        g = (W @ F) * traj.eval(q) - net.input_values(q)
        contrib = (0.5 * hc * gw[None, None, :] * (np.exp(a * (q - left)) * g).reshape(net.size, n, 3)).sum(axis=2)
        acc = np.concatenate([np.zeros((net.size, 1)), np.cumsum(contrib, axis=1)], axis=1)
        decay = np.exp(-a * (cells - left))
        integral = decay * (carry[:, None] + acc)
        rhs = -integral
        if with_initial:
            rhs = rhs + np.exp(-a * (cells - lo)) * x_lo[:, None]
        all_t.append(cells)
        all_def.append(traj.eval(cells) - rhs)
        carry = integral[:, -1]
    return np.concatenate(all_t), np.concatenate(all_def, axis=1)


def residual(
    net: NetworkSpec,
    schedule: GammaSchedule,
    act: ActivationSpec,
    traj: Trajectory,
    sigma: Optional[float] = None,
    h_fine: Optional[float] = None,
) -> float:
    """Max defect of the integral equation from ``sigma`` (default: trajectory start)."""
    if traj.net is not net or traj.schedule is not schedule or traj.act is not act:
        traj = _rebind(traj, net, schedule, act)
    sigma = traj.sigma if sigma is None else sigma
    _, defect = integral_defect(traj, sigma, traj.end, True, h_fine)
    return float(np.max(np.abs(defect)))


def _rebind(traj, net, schedule, act):
    view = Trajectory.__new__(Trajectory)
    view.__dict__.update(traj.__dict__)
    view.net, view.schedule, view.act = net, schedule, act
    return view
