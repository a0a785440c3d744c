"""SICNN grid, couplings, external inputs, derived constants and conditions.

Cells are labelled ``(i, j)`` with 1-based indices as in the usual SICNN
notation; internally states are flattened row-major into vectors of length
``m * n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .schedule import GammaSchedule, SpacingReport

__all__ = [
    "TrigTerm",
    "InputSignal",
    "NetworkSpec",
    "DerivedConstants",
    "ConditionEntry",
    "ConditionReport",
    "neighborhood",
    "derived_constants",
    "check_conditions",
]


@dataclass(frozen=True)
class TrigTerm:
    amplitude: float
    omega: float
    phase: float = 0.0
    kind: str = "sin"

    def __post_init__(self):
        if self.kind not in ("sin", "cos"):
            raise ValueError(f"unknown term kind {self.kind!r}")

    def __call__(self, t):
        arg = self.omega * np.asarray(t, dtype=float) + self.phase
        return self.amplitude * (np.sin(arg) if self.kind == "sin" else np.cos(arg))


class InputSignal:
    """External input ``L_ij(t)``.

    Trigonometric sums are almost periodic by construction and their bound is
    certified by the triangle inequality. An arbitrary callable may be given
    instead, in which case the input is flagged ``checked=False`` and the
    declared bound is trusted.
    """

    def __init__(
        self,
        terms: Sequence[TrigTerm] = (),
        bound: Optional[float] = None,
        func: Optional[Callable] = None,
    ):
        self.terms = tuple(terms)
        self.func = func
        self.checked = func is None
        tri = float(sum(abs(term.amplitude) for term in self.terms))
        if func is not None:
            if self.terms:
                raise ValueError("give either trigonometric terms or a callable")
            if bound is None:
                raise ValueError("an unchecked input needs a declared bound")
        elif bound is None:
            bound = tri
        elif bound < tri:
            raise ValueError(
                f"declared bound {bound} below the amplitude sum {tri}"
            )
        self.bound = float(bound)

    @classmethod
    def constant(cls, value: float) -> "InputSignal":
        return cls([TrigTerm(float(value), 0.0, 0.0, "cos")])

    @classmethod
    def zero(cls) -> "InputSignal":
        return cls([])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.func is not None:
            return np.broadcast_to(np.asarray(self.func(t), dtype=float), t.shape)
        out = np.zeros_like(t)
        for term in self.terms:
            out = out + term(t)
        return out

    def __repr__(self) -> str:
        if self.func is not None:
            return f"InputSignal(func={self.func!r}, bound={self.bound})"
        return f"InputSignal(terms={list(self.terms)!r}, bound={self.bound})"


def neighborhood(i: int, j: int, m: int, n: int, r: int) -> list[tuple[int, int]]:
    """Cells ``(k, l)`` with ``max(|k-i|, |l-j|) <= r`` inside an ``m x n`` grid."""
    if not (1 <= i <= m and 1 <= j <= n):
        raise IndexError(f"cell ({i}, {j}) outside {m}x{n} grid")
    return [
        (k, l)
        for k in range(max(1, i - r), min(m, i + r) + 1)
        for l in range(max(1, j - r), min(n, j + r) + 1)
    ]


class NetworkSpec:
    """Immutable description of a SICNN.

    Parameters
    ----------
    a : (m, n) array_like
        Positive passive decay rates.
    coupling : (m*n, m*n) array_like
        ``coupling[c(i,j), c(k,l)] = C_ij^kl``. Entries outside the
        ``r``-neighbourhood must be zero.
    inputs : sequence of InputSignal
        One signal per cell, row-major.
    tau : float
        Length of the retardation window.
    r : int
        Neighbourhood radius.
    """

    def __init__(self, a, coupling, inputs: Sequence[InputSignal], tau: float, r: int = 1):
        a = np.array(a, dtype=float)
        if a.ndim != 2:
            raise ValueError("a must be an m x n matrix")
        self.m, self.n = a.shape
        N = self.m * self.n
        if np.any(a <= 0) or not np.all(np.isfinite(a)):
            raise ValueError("all decay rates a_ij must be positive")
        coupling = np.array(coupling, dtype=float)
        if coupling.shape != (N, N):
            raise ValueError(f"coupling must have shape {(N, N)}")
        if np.any(coupling < 0):
            raise ValueError("couplings must be non-negative")
        if r < 0:
            raise ValueError("radius must be non-negative")
        if tau < 0:
            raise ValueError("tau must be non-negative")
        self.r = int(r)
        mask = self._neighborhood_mask()
        if np.any(coupling[~mask] != 0):
            raise ValueError("non-zero coupling outside the r-neighbourhood")
        if len(inputs) != N:
            raise ValueError(f"need {N} input signals, got {len(inputs)}")
        self.a = a
        self.a.setflags(write=False)
        self.coupling = coupling
        self.coupling.setflags(write=False)
        self.inputs = tuple(inputs)
        self.tau = float(tau)

    @classmethod
    def from_cell_weights(cls, a, weights, inputs, tau: float, r: int = 1) -> "NetworkSpec":
        """Couplings ``C_ij^kl = weights[k, l]`` for every cell ``(i, j)``."""
        a = np.asarray(a, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if weights.shape != a.shape:
            raise ValueError("weights must have the same shape as a")
        m, n = a.shape
        coupling = np.zeros((m * n, m * n))
        for i in range(1, m + 1):
            for j in range(1, n + 1):
                for k, l in neighborhood(i, j, m, n, r):
                    coupling[(i - 1) * n + j - 1, (k - 1) * n + l - 1] = weights[k - 1, l - 1]
        return cls(a, coupling, inputs, tau, r)

    def _neighborhood_mask(self) -> np.ndarray:
        m, n = self.m, self.n
        ii, jj = np.divmod(np.arange(m * n), n)
        return np.maximum(
            np.abs(ii[:, None] - ii[None, :]), np.abs(jj[:, None] - jj[None, :])
        ) <= self.r

    @property
    def size(self) -> int:
        return self.m * self.n

    @property
    def cell_labels(self) -> list[str]:
        return [f"x{i}{j}" for i in range(1, self.m + 1) for j in range(1, self.n + 1)]

    @property
    def decay(self) -> np.ndarray:
        """Flattened decay rates, shape ``(m*n,)``."""
        return self.a.ravel()

    @property
    def input_bounds(self) -> np.ndarray:
        return np.array([sig.bound for sig in self.inputs])

    @property
    def inputs_checked(self) -> bool:
        return all(sig.checked for sig in self.inputs)

    def neighborhood(self, i: int, j: int) -> list[tuple[int, int]]:
        return neighborhood(i, j, self.m, self.n, self.r)

    def coupling_sums(self) -> np.ndarray:
        """``sum_{C_kl in N_r(i,j)} C_ij^kl`` as an ``(m, n)`` array."""
        return self.coupling.sum(axis=1).reshape(self.m, self.n)

    def input_values(self, t) -> np.ndarray:
        """Inputs at times ``t``, shape ``(m*n, len(t))``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.stack([sig(t) for sig in self.inputs])

    def scaled(self, factor: float) -> "NetworkSpec":
        """Copy with every coupling multiplied by ``factor``."""
        return NetworkSpec(self.a, self.coupling * factor, self.inputs, self.tau, self.r)

    def __repr__(self) -> str:
        return f"NetworkSpec(m={self.m}, n={self.n}, r={self.r}, tau={self.tau})"


@dataclass(frozen=True)
class DerivedConstants:
    mu: float
    c_bar: float
    d_bar: float
    L_bar: float
    l_bar: float
    gamma0: float
    H: float
    theta_bar: float
    theta_under: float
    zeta_under: float
    row_sums: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "c_bar": self.c_bar,
            "d_bar": self.d_bar,
            "L_bar": self.L_bar,
            "l_bar": self.l_bar,
            "gamma0": self.gamma0,
            "H": self.H,
            "theta_bar": self.theta_bar,
            "theta_under": self.theta_under,
            "zeta_under": self.zeta_under,
            "row_sums": self.row_sums.tolist(),
        }


def derived_constants(net: NetworkSpec, schedule: GammaSchedule, M: float, L: float = 0.0) -> DerivedConstants:
    """Network constants used by the existence and stability conditions.

    ``H = l_bar / (1 - M*c_bar)`` is ``inf`` when ``M*c_bar >= 1``.
    """
    sums = net.coupling_sums()
    a = net.a
    gamma0 = float(a.min())
    c_bar = float(np.max(sums / a))
    d_bar = float(np.max(sums / (2.0 * a - gamma0)))
    bounds = net.input_bounds.reshape(net.m, net.n)
    l_bar = float(np.max(bounds / a))
    H = l_bar / (1.0 - M * c_bar) if M * c_bar < 1.0 else math.inf
    return DerivedConstants(
        mu=float(sums.max()),
        c_bar=c_bar,
        d_bar=d_bar,
        L_bar=float(bounds.max()),
        l_bar=l_bar,
        gamma0=gamma0,
        H=H,
        theta_bar=schedule.theta_bar,
        theta_under=schedule.theta_under,
        zeta_under=schedule.zeta_under,
        row_sums=sums,
    )


@dataclass(frozen=True)
class ConditionEntry:
    """One checked inequality ``lhs < threshold`` (``<=`` when ``strict`` is off)."""

    name: str
    lhs: float
    threshold: float
    passed: bool
    strict: bool = True
    note: str = ""

    @property
    def margin(self) -> float:
        return self.threshold - self.lhs

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "threshold": self.threshold,
            "margin": self.margin,
            "pass": self.passed,
            "strict": self.strict,
            "note": self.note,
        }


def _entry(name, lhs, threshold, strict=True, note=""):
    lhs, threshold = float(lhs), float(threshold)
    ok = lhs < threshold if strict else lhs <= threshold
    return ConditionEntry(name, lhs, threshold, bool(ok), strict, note)


@dataclass(frozen=True)
class ConditionReport:
    constants: DerivedConstants
    entries: tuple[ConditionEntry, ...]
    spacing: SpacingReport
    M: float
    L: float
    tau: float
    K0: float
    notes: tuple[str, ...] = ()

    def __getitem__(self, name: str) -> ConditionEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    @property
    def all_passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def failed(self) -> list[str]:
        return [e.name for e in self.entries if not e.passed]

    @property
    def K_denominator(self) -> float:
        """``1 - lhs(C7)``; the stability envelope amplitude is ``delta / K_denominator``."""
        return 1.0 - self["C7"].lhs

    def K(self, delta: float) -> float:
        return delta / self.K_denominator

    def to_dict(self) -> dict:
        return {
            "constants": self.constants.to_dict(),
            "M": self.M,
            "L": self.L,
            "tau": self.tau,
            "K0": self.K0,
            "K_denominator": self.K_denominator,
            "conditions": [e.to_dict() for e in self.entries],
            "spacing": self.spacing.to_dict(),
            "all_passed": self.all_passed,
            "failed": self.failed,
            "notes": list(self.notes),
        }


def c5_lhs(mu, theta_bar, M, L, H, L_bar):
    return mu * theta_bar * (M + 2.0 * L * (H + theta_bar * L_bar) / (1.0 - mu * theta_bar * M))


def c6_lhs(M, L, H, c_bar):
    return (M + 2.0 * L * H) * c_bar


def c7_lhs(d_bar, M, L, H, gamma0, tau, theta_bar):
    return 2.0 * d_bar * (
        M + L * H * math.exp(gamma0 * tau / 2.0) * (1.0 + math.exp(gamma0 * theta_bar / 2.0))
    )


def check_conditions(
    net: NetworkSpec,
    schedule: GammaSchedule,
    act,
    p_range: Optional[tuple[int, int]] = None,
    almost_periodic: bool = True,
) -> ConditionReport:
    """Evaluate (C3), (C5)-(C7) and, for almost-periodic analysis, (C9).

    ``act`` is anything with ``M`` and ``L`` attributes. The spacing
    conditions are checked against an empirical scan over ``p_range``
    (default: the whole tabulated range, capped at 2000 indices each side
    of zero).
    """
    M, L = float(act.M), float(act.L)
    if p_range is None:
        p_range = (max(schedule.p_min, -2000), min(schedule.p_max, 2000))
    spacing = schedule.spacing_report(*p_range)
    k = derived_constants(net, schedule, M, L)
    tb = k.theta_bar
    notes = []
    entries = [
        _entry("C3", spacing.theta_bar, tb, strict=False,
               note="empirical max theta gap vs theta_bar"),
        _entry("pre:mu*theta_bar*M", k.mu * tb * M, 1.0),
        _entry("pre:M*c_bar", M * k.c_bar, 1.0),
    ]
    K0 = math.nan
    if entries[1].passed and entries[2].passed:
        H = k.H
        K0 = (H + tb * k.L_bar) / (1.0 - k.mu * tb * M)
        entries += [
            _entry("C5", c5_lhs(k.mu, tb, M, L, H, k.L_bar), 1.0),
            _entry("C6", c6_lhs(M, L, H, k.c_bar), 1.0),
            _entry("C7", c7_lhs(k.d_bar, M, L, H, k.gamma0, net.tau, tb), 1.0),
        ]
    else:
        for name in ("C5", "C6", "C7"):
            entries.append(ConditionEntry(
                name, math.nan, 1.0, False, True,
                "skipped: prerequisite mu*theta_bar*M < 1 or M*c_bar < 1 failed",
            ))
    if almost_periodic:
        entries += [
            _entry("C9:theta", 0.0, min(schedule.theta_under, spacing.theta_under),
                   note="0 < theta_under <= empirical min theta gap"),
            _entry("C9:zeta", 0.0, min(schedule.zeta_under, spacing.zeta_under),
                   note="0 < zeta_under <= empirical min zeta gap"),
        ]
        if not spacing.theta_under_consistent:
            entries[-2] = ConditionEntry(
                "C9:theta", 0.0, spacing.theta_under, False, True,
                f"declared theta_under {schedule.theta_under} exceeds empirical min gap",
            )
        if not spacing.zeta_under_consistent:
            entries[-1] = ConditionEntry(
                "C9:zeta", 0.0, spacing.zeta_under, False, True,
                f"declared zeta_under {schedule.zeta_under} exceeds empirical min gap",
            )
        notes.append(
            "zeta need not be strictly ordered for existence; C9 is required only "
            "for the almost-periodic analysis"
        )
        if not net.inputs_checked:
            notes.append("inputs are unchecked callables; almost periodicity of L is not certified")
    return ConditionReport(
        constants=k,
        entries=tuple(entries),
        spacing=spacing,
        M=M,
        L=L,
        tau=net.tau,
        K0=K0,
        notes=tuple(notes),
    )
