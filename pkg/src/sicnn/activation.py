"""Activation functionals ``f(x_t, x_gamma(t))`` acting on history segments.

Every supported functional is determined by finitely many *probes*: samples
of either the current segment ``x_t`` ("now") or the piecewise-constant
argument segment ``x_gamma(t)`` ("gamma") at offsets ``s`` in ``[-tau, 0]``.
A rule then combines the probed values. This covers the pointwise special
cases as well as quadrature-discretised integral functionals, and lets the
solver evaluate ``f`` for all cells and all grid nodes in one vectorised call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "KINDS",
    "ActivationSpec",
    "HistorySegment",
    "SegmentError",
    "BoundsReport",
    "evaluate",
    "validate_bounds",
    "example6_rule",
    "capped_quadratic",
    "clipped_linear",
    "tanh_rule",
]

KINDS = (
    "pointwise_on_gamma_delayed",
    "pointwise_on_gamma",
    "pointwise_on_delay",
    "two_point",
    "segment_integral",
    "custom",
)


class SegmentError(ValueError):
    """A history segment does not cover the probed window."""


def capped_quadratic(threshold: float = 0.1, plateau: Optional[float] = None) -> Callable:
    """``s**2/2`` for ``|s| <= threshold`` and ``plateau`` beyond it."""
    if plateau is None:
        plateau = threshold ** 2 / 2.0

    def rule(s):
        s = np.asarray(s, dtype=float)
        return np.where(np.abs(s) <= threshold, 0.5 * s * s, plateau)

    rule.__name__ = f"capped_quadratic({threshold}, {plateau})"
    return rule


example6_rule = capped_quadratic(0.1, 0.005)


def clipped_linear(slope: float, cap: float) -> Callable:
    def rule(s):
        return np.clip(slope * np.asarray(s, dtype=float), -cap, cap)

    rule.__name__ = f"clipped_linear({slope}, {cap})"
    return rule


def tanh_rule(gain: float = 1.0, scale: float = 1.0) -> Callable:
    def rule(s):
        return scale * np.tanh(gain * np.asarray(s, dtype=float))

    rule.__name__ = f"tanh({gain}, {scale})"
    return rule


@dataclass(frozen=True)
class ActivationSpec:
    """A bounded, Lipschitz functional on pairs of history segments.

    Parameters
    ----------
    kind : str
        One of :data:`KINDS`.
    rule : callable
        Vectorised scalar rule. Takes one argument for the pointwise kinds
        and for ``segment_integral`` (the weighted integral of both
        segments), two for ``two_point`` and ``len(probes)`` for ``custom``.
    M, L : float
        Declared uniform bound and Lipschitz constant.
    lag : float, optional
        Sample offset for delayed kinds; defaults to the network ``tau``.
    kernel : callable, optional
        Weight ``k(s)`` on ``[-tau, 0]`` for ``segment_integral`` (default
        ``1/tau``, i.e. the segment mean).
    quad_points : int
        Gauss-Legendre points used to discretise the segment integral.
    probes : sequence of (str, float), optional
        Explicit probes for ``custom``.
    """

    kind: str
    rule: Callable
    M: float
    L: float
    lag: Optional[float] = None
    kernel: Optional[Callable] = None
    quad_points: int = 8
    probes: Optional[tuple[tuple[str, float], ...]] = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if not (self.M > 0 and self.L > 0):
            raise ValueError("declared M and L must be positive")
        if self.kind == "custom":
            if not self.probes:
                raise ValueError("custom activation needs explicit probes")
            for seg, _ in self.probes:
                if seg not in ("now", "gamma"):
                    raise ValueError(f"probe segment must be 'now' or 'gamma', got {seg!r}")

    def resolved_probes(self, tau: float) -> tuple[list[tuple[str, float]], np.ndarray]:
        """Probe list and (for integrals) quadrature weights for window length ``tau``."""
        lag = tau if self.lag is None else float(self.lag)
        if lag < 0 or lag > tau:
            raise ValueError(f"lag {lag} must lie in [0, tau={tau}]")
        if self.kind == "pointwise_on_gamma_delayed":
            return [("gamma", -lag)], np.ones(1)
        if self.kind == "pointwise_on_gamma":
            return [("gamma", 0.0)], np.ones(1)
        if self.kind == "pointwise_on_delay":
            return [("now", -lag)], np.ones(1)
        if self.kind == "two_point":
            return [("now", -lag), ("gamma", -lag)], np.ones(2)
        if self.kind == "custom":
            for _, off in self.probes:
                if off < -tau or off > 0:
                    raise ValueError(f"probe offset {off} outside [-tau, 0]")
            return list(self.probes), np.ones(len(self.probes))
        # segment_integral
        if tau == 0:
            return [("now", 0.0), ("gamma", 0.0)], np.ones(2)
        x, w = np.polynomial.legendre.leggauss(self.quad_points)
        s = 0.5 * tau * (x - 1.0)
        w = 0.5 * tau * w
        k = np.full_like(s, 1.0 / tau) if self.kernel is None else np.asarray(self.kernel(s), dtype=float)
        offsets = [("now", float(v)) for v in s] + [("gamma", float(v)) for v in s]
        return offsets, np.concatenate([w * k, w * k])

    def combine(self, values: Sequence[np.ndarray], weights: np.ndarray):
        """Apply the rule to probed values (each an array of equal shape)."""
        if self.kind == "segment_integral":
            acc = 0.0
            for v, wt in zip(values, weights):
                acc = acc + wt * v
            return self.rule(acc)
        return self.rule(*values)

    def kernel_l1(self, tau: float) -> float:
        """Discrete ``sum |weights|`` per segment; scales the integral's Lipschitz constant."""
        _, w = self.resolved_probes(tau)
        return float(np.sum(np.abs(w[: len(w) // 2])))


@dataclass
class HistorySegment:
    """``s -> x(base_time + s)`` on ``[-tau, 0]`` for one or more cells.

    ``source`` maps absolute times (array) to values with times along the
    last axis.
    """

    base_time: float
    tau: float
    source: Callable[[np.ndarray], np.ndarray]
    cell: Optional[int] = None

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        tol = 1e-12 * max(1.0, self.tau)
        if np.any(s < -self.tau - tol) or np.any(s > tol):
            raise SegmentError(f"offset outside [-{self.tau}, 0]")
        vals = np.asarray(self.source(self.base_time + np.clip(s, -self.tau, 0.0)))
        if self.cell is not None and vals.ndim > s.ndim:
            vals = vals[self.cell]
        return vals

    @classmethod
    def from_function(cls, fn: Callable, tau: float) -> "HistorySegment":
        """Wrap a function of the offset ``s`` directly (``base_time = 0``)."""
        return cls(0.0, tau, fn)


def evaluate(act: ActivationSpec, seg_t, seg_gamma, tau: Optional[float] = None):
    """Value of the functional on one pair of segments.

    ``seg_t`` and ``seg_gamma`` are callables of the offset ``s in [-tau, 0]``,
    typically :class:`HistorySegment` instances.
    """
    if tau is None:
        tau = getattr(seg_t, "tau", None)
        if tau is None:
            raise ValueError("tau must be given for plain callables")
    for seg in (seg_t, seg_gamma):
        seg_tau = getattr(seg, "tau", tau)
        if seg_tau + 1e-12 < tau:
            raise SegmentError(f"segment covers [-{seg_tau}, 0], need [-{tau}, 0]")
    probes, weights = act.resolved_probes(tau)
    values = []
    for which, off in probes:
        seg = seg_t if which == "now" else seg_gamma
        values.append(np.asarray(seg(np.float64(off)), dtype=float))
    out = act.combine(values, weights)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class BoundsReport:
    max_abs: float
    max_lipschitz_quotient: float
    M: float
    L: float
    samples: int
    amplitude: float
    witness: Optional[dict] = field(default=None)

    @property
    def passed(self) -> bool:
        return self.max_abs <= self.M * (1 + 1e-12) and self.max_lipschitz_quotient <= self.L * (1 + 1e-9)

    def to_dict(self) -> dict:
        return {
            "max_abs": self.max_abs,
            "max_lipschitz_quotient": self.max_lipschitz_quotient,
            "M": self.M,
            "L": self.L,
            "samples": self.samples,
            "amplitude": self.amplitude,
            "pass": self.passed,
            "witness": self.witness,
        }


def _random_segments(rng, count, knots, amplitude):
    """Piecewise-linear segments: the sup norm equals the largest knot value."""
    return rng.uniform(-amplitude, amplitude, size=(count, knots))


def validate_bounds(
    act: ActivationSpec,
    samples: int = 2000,
    amplitude: float = 1.0,
    tau: float = 1.0,
    knots: int = 9,
    seed: Optional[int] = 0,
) -> BoundsReport:
    """Falsification harness for the declared ``M`` and ``L``.

    Draws random piecewise-linear segment pairs with sup norm at most
    ``amplitude``. Half of the Lipschitz pairs are independent draws and half
    are small perturbations, which probe the local slope. Sup-norm
    distances between piecewise-linear segments are exact (attained at knots).
    """
    if amplitude <= 0:
        raise ValueError("amplitude must be positive")
    rng = np.random.default_rng(seed)
    probes, weights = act.resolved_probes(tau)
    grid = np.linspace(-tau, 0.0, knots) if tau > 0 else np.zeros(knots)

    def probe_values(phi, psi):
        vals = []
        for which, off in probes:
            src = phi if which == "now" else psi
            if tau > 0:
                idx = np.clip(np.searchsorted(grid, off, side="right") - 1, 0, knots - 2)
                w = (off - grid[idx]) / (grid[idx + 1] - grid[idx])
                vals.append(src[:, idx] * (1 - w) + src[:, idx + 1] * w)
            else:
                vals.append(src[:, -1])
        return np.asarray(act.combine(vals, weights), dtype=float)

    phi1 = _random_segments(rng, samples, knots, amplitude)
    psi1 = _random_segments(rng, samples, knots, amplitude)
    phi2 = _random_segments(rng, samples, knots, amplitude)
    psi2 = _random_segments(rng, samples, knots, amplitude)
    half = samples // 2
    scale = amplitude * 10.0 ** rng.uniform(-6, -1, size=(half, 1))
    phi2[:half] = np.clip(phi1[:half] + scale * rng.uniform(-1, 1, (half, knots)), -amplitude, amplitude)
    psi2[:half] = np.clip(psi1[:half] + scale * rng.uniform(-1, 1, (half, knots)), -amplitude, amplitude)

    f1 = probe_values(phi1, psi1)
    f2 = probe_values(phi2, psi2)
    max_abs = float(max(np.max(np.abs(f1)), np.max(np.abs(f2))))
    dist = np.max(np.abs(phi1 - phi2), axis=1) + np.max(np.abs(psi1 - psi2), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(dist > 0, np.abs(f1 - f2) / dist, 0.0)
    worst = int(np.argmax(q))
    witness = None
    quotient = float(q[worst])
    if quotient > act.L * (1 + 1e-9) or max_abs > act.M * (1 + 1e-12):
        witness = {
            "phi1": phi1[worst].tolist(),
            "psi1": psi1[worst].tolist(),
            "phi2": phi2[worst].tolist(),
            "psi2": psi2[worst].tolist(),
            "f1": float(f1[worst]),
            "f2": float(f2[worst]),
        }
    return BoundsReport(max_abs, quotient, act.M, act.L, samples, amplitude, witness)
