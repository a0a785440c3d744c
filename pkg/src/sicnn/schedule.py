"""Piecewise constant argument functions of alternate (advanced/delayed) type.

A schedule is a pair of sequences ``theta_p`` (strictly increasing switching
times) and ``zeta_p`` (evaluation times with ``theta_p <= zeta_p <= theta_{p+1}``).
The induced step function is ``gamma(t) = zeta_p`` for ``theta_p <= t < theta_{p+1}``.

Schedules are tabulated over a finite, declared index range. Queries outside
that range raise :class:`ScheduleRangeError` rather than extrapolating.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "GammaSchedule",
    "ScheduleRangeError",
    "SpacingReport",
    "AlmostPeriodReport",
]


class ScheduleRangeError(ValueError):
    """A time or index lies outside the tabulated part of a schedule."""


@dataclass(frozen=True)
class SpacingReport:
    """Empirical spacing of a schedule over a scanned index range."""

    theta_bar: float
    theta_under: float
    zeta_under: float
    p_range: tuple[int, int]
    declared_theta_bar: Optional[float] = None
    declared_theta_under: Optional[float] = None
    declared_zeta_under: Optional[float] = None

    @property
    def theta_bar_consistent(self) -> bool:
        if self.declared_theta_bar is None:
            return True
        return self.theta_bar <= self.declared_theta_bar

    @property
    def theta_under_consistent(self) -> bool:
        if self.declared_theta_under is None:
            return True
        return 0.0 < self.declared_theta_under <= self.theta_under

    @property
    def zeta_under_consistent(self) -> bool:
        if self.declared_zeta_under is None:
            return True
        return 0.0 < self.declared_zeta_under <= self.zeta_under

    def to_dict(self) -> dict:
        return {
            "theta_bar": self.theta_bar,
            "theta_under": self.theta_under,
            "zeta_under": self.zeta_under,
            "p_range": list(self.p_range),
            "declared_theta_bar": self.declared_theta_bar,
            "declared_theta_under": self.declared_theta_under,
            "declared_zeta_under": self.declared_zeta_under,
            "theta_bar_consistent": self.theta_bar_consistent,
            "theta_under_consistent": self.theta_under_consistent,
            "zeta_under_consistent": self.zeta_under_consistent,
        }


@dataclass(frozen=True)
class AlmostPeriodReport:
    """Result of a finite integer almost-period scan (an empirical proxy only)."""

    eps: float
    sequence: str
    accepted: tuple[int, ...]
    max_gap: float
    p_window: tuple[int, int]
    k_range: tuple[int, int]
    q_set: tuple[int, ...]
    note: str = "finite-window empirical proxy; not a proof of almost periodicity"

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "sequence": self.sequence,
            "accepted": list(self.accepted),
            "max_gap": self.max_gap,
            "p_window": list(self.p_window),
            "k_range": list(self.k_range),
            "q_set": list(self.q_set),
            "note": self.note,
        }


def _example6_theta(p):
    p = np.asarray(p, dtype=float)
    return p + 0.25 * np.abs(np.sin(p) - np.cos(p * math.sqrt(2.0)))


class GammaSchedule:
    """Tabulated gamma-type argument function.

    Parameters
    ----------
    theta, zeta : callable
        Vectorized maps from an integer index array to real times.
    p_range : (int, int)
        Inclusive index range ``[p_min, p_max]``. The representable time range
        is ``[theta_{p_min}, theta_{p_max + 1})``.
    theta_bar, theta_under, zeta_under : float, optional
        Declared spacing bounds. When omitted they are replaced by the
        empirical values over ``p_range``.
    """

    def __init__(
        self,
        theta: Callable[[np.ndarray], np.ndarray],
        zeta: Callable[[np.ndarray], np.ndarray],
        p_range: tuple[int, int],
        *,
        theta_bar: Optional[float] = None,
        theta_under: Optional[float] = None,
        zeta_under: Optional[float] = None,
        name: str = "custom",
    ):
        p_min, p_max = int(p_range[0]), int(p_range[1])
        if p_max < p_min:
            raise ValueError(f"empty index range [{p_min}, {p_max}]")
        self.p_min, self.p_max = p_min, p_max
        self.name = name
        self._theta_fn, self._zeta_fn = theta, zeta
        # theta is needed one index past p_max to close the last interval
        self._theta = np.asarray(theta(np.arange(p_min, p_max + 2)), dtype=float)
        self._zeta = np.asarray(zeta(np.arange(p_min, p_max + 1)), dtype=float)
        self._validate()
        self._declared = (theta_bar, theta_under, zeta_under)
        gaps = np.diff(self._theta)
        self.theta_bar = float(theta_bar) if theta_bar is not None else float(gaps.max())
        self.theta_under = float(theta_under) if theta_under is not None else float(gaps.min())
        if zeta_under is not None:
            self.zeta_under = float(zeta_under)
        elif len(self._zeta) > 1:
            self.zeta_under = float(np.diff(self._zeta).min())
        else:
            self.zeta_under = float("nan")
        self.index_hint = 0

    def _validate(self) -> None:
        th, ze = self._theta, self._zeta
        if not np.all(np.isfinite(th)) or not np.all(np.isfinite(ze)):
            raise ValueError("schedule contains non-finite times")
        bad = np.flatnonzero(np.diff(th) <= 0)
        if bad.size:
            p = self.p_min + int(bad[0])
            raise ValueError(f"theta is not strictly increasing at p={p}")
        bad = np.flatnonzero((ze < th[:-1]) | (ze > th[1:]))
        if bad.size:
            p = self.p_min + int(bad[0])
            raise ValueError(
                f"zeta_{p}={ze[bad[0]]} outside [theta_{p}, theta_{p + 1}]="
                f"[{th[bad[0]]}, {th[bad[0] + 1]}]"
            )

    # -- constructors -----------------------------------------------------

    @classmethod
    def example6(cls, p_range: tuple[int, int] = (-10000, 10000)) -> "GammaSchedule":
        """``theta_p = p + |sin p - cos(p*sqrt 2)| / 4`` with ``zeta_p = theta_p``."""
        return cls(
            _example6_theta,
            _example6_theta,
            p_range,
            theta_bar=1.5,
            theta_under=0.5,
            zeta_under=0.5,
            name="example6",
        )

    @classmethod
    def affine(
        cls,
        slope: float,
        offset: float = 0.0,
        advance: float = 0.0,
        p_range: tuple[int, int] = (-10000, 10000),
    ) -> "GammaSchedule":
        """``theta_p = slope*p + offset`` and ``zeta_p = theta_p + advance``."""
        if slope <= 0:
            raise ValueError("slope must be positive")
        if not 0.0 <= advance <= slope:
            raise ValueError("advance must lie in [0, slope]")
        return cls(
            lambda p: slope * np.asarray(p, dtype=float) + offset,
            # clamp so rounding never pushes zeta_p past theta_{p+1}
            lambda p: np.minimum(slope * np.asarray(p, dtype=float) + offset + advance,
                                 slope * (np.asarray(p, dtype=float) + 1) + offset),
            p_range,
            theta_bar=slope,
            theta_under=slope,
            zeta_under=slope,
            name="affine",
        )

    @classmethod
    def from_table(
        cls,
        theta: Sequence[float],
        zeta: Sequence[float],
        p_start: int = 0,
        **declared,
    ) -> "GammaSchedule":
        """Explicit arrays: ``theta`` has one more entry than ``zeta``."""
        theta = np.asarray(theta, dtype=float)
        zeta = np.asarray(zeta, dtype=float)
        if theta.ndim != 1 or zeta.ndim != 1 or len(theta) != len(zeta) + 1:
            raise ValueError("table schedule needs len(theta) == len(zeta) + 1")
        if len(zeta) < 1:
            raise ValueError("table schedule needs at least one interval")
        p_max = p_start + len(zeta) - 1
        return cls(
            lambda p: theta[np.asarray(p) - p_start],
            lambda p: zeta[np.asarray(p) - p_start],
            (p_start, p_max),
            name="table",
            **declared,
        )

    # -- sequence access --------------------------------------------------

    @property
    def t_min(self) -> float:
        return float(self._theta[0])

    @property
    def t_max(self) -> float:
        """Right end (exclusive) of the representable time range."""
        return float(self._theta[-1])

    def _check_p(self, p, upper):
        p = np.asarray(p)
        if np.any(p < self.p_min) or np.any(p > upper):
            raise ScheduleRangeError(
                f"index outside tabulated range [{self.p_min}, {upper}]"
            )
        return p - self.p_min

    def theta(self, p):
        idx = self._check_p(p, self.p_max + 1)
        out = self._theta[idx]
        return float(out) if np.ndim(out) == 0 else out

    def zeta(self, p):
        idx = self._check_p(p, self.p_max)
        out = self._zeta[idx]
        return float(out) if np.ndim(out) == 0 else out

    @property
    def max_advance(self) -> float:
        """Largest ``zeta_p - theta_p`` over the tabulated range."""
        return float(np.max(self._zeta - self._theta[:-1]))

    # -- queries ----------------------------------------------------------

    def _range_error(self, t) -> ScheduleRangeError:
        return ScheduleRangeError(
            f"t={t} outside schedule range [{self.t_min}, {self.t_max})"
        )

    def interval_index(self, t: float) -> int:
        """Return the unique ``p`` with ``theta_p <= t < theta_{p+1}``."""
        t = float(t)
        th = self._theta
        if not th[0] <= t < th[-1]:
            raise self._range_error(t)
        k = self.index_hint
        if 0 <= k < len(th) - 1:
            if th[k] <= t < th[k + 1]:
                return self.p_min + k
            if k + 2 < len(th) and th[k + 1] <= t < th[k + 2]:
                self.index_hint = k + 1
                return self.p_min + k + 1
        k = int(np.searchsorted(th, t, side="right")) - 1
        self.index_hint = k
        return self.p_min + k

    def interval_index_array(self, t) -> np.ndarray:
        """Vectorized :meth:`interval_index`."""
        t = np.asarray(t, dtype=float)
        if t.size and (t.min() < self._theta[0] or t.max() >= self._theta[-1]):
            bad = t[(t < self._theta[0]) | (t >= self._theta[-1])].flat[0]
            raise self._range_error(bad)
        return np.searchsorted(self._theta, t, side="right") - 1 + self.p_min

    def gamma(self, t):
        """Piecewise constant argument ``gamma(t) = zeta_p`` on ``[theta_p, theta_{p+1})``."""
        if np.ndim(t) == 0:
            return float(self._zeta[self.interval_index(t) - self.p_min])
        return self._zeta[self.interval_index_array(t) - self.p_min]

    def breakpoints(self, t0: float, t1: float) -> np.ndarray:
        """All ``theta_p`` lying in ``[t0, t1]``."""
        th = self._theta
        return th[(th >= t0) & (th <= t1)].copy()

    # -- diagnostics ------------------------------------------------------

    def spacing_report(self, p_min: int, p_max: int) -> SpacingReport:
        if not p_min < p_max:
            raise ValueError("spacing_report needs p_min < p_max")
        p = np.arange(p_min, p_max + 1)
        th = np.asarray(self.theta(p), dtype=float)
        ze = np.asarray(self.zeta(p), dtype=float)
        dth, dze = np.diff(th), np.diff(ze)
        return SpacingReport(
            theta_bar=float(dth.max()),
            theta_under=float(dth.min()),
            zeta_under=float(dze.min()),
            p_range=(p_min, p_max),
            declared_theta_bar=self._declared[0],
            declared_theta_under=self._declared[1],
            declared_zeta_under=self._declared[2],
        )

    def almost_period_scan(
        self,
        eps: float,
        p_window: tuple[int, int],
        q_set: Iterable[int],
        k_range: Optional[tuple[int, int]] = None,
        sequence: str = "theta",
    ) -> AlmostPeriodReport:
        """Integers ``k`` that are common eps-almost periods of ``{s_{p+q} - s_p}``.

        ``k`` is accepted when ``|s^q_{p+k} - s^q_p| < eps`` for every ``p`` in
        ``p_window`` and every ``q`` in ``q_set``. ``max_gap`` is the largest
        distance between consecutive accepted ``k`` (``inf`` when fewer than
        two are accepted). ``k_range`` defaults to ``[1, 10 * window width]``;
        quasi-periodic schedules can have no almost period shorter than the
        window itself.
        """
        if eps <= 0:
            raise ValueError("eps must be positive")
        if sequence not in ("theta", "zeta"):
            raise ValueError("sequence must be 'theta' or 'zeta'")
        lo, hi = int(p_window[0]), int(p_window[1])
        if hi < lo:
            raise ValueError("empty p_window")
        q = np.array(sorted(set(int(v) for v in q_set)))
        if k_range is None:
            k_range = (1, 10 * max(1, hi - lo))
        k_lo, k_hi = int(k_range[0]), int(k_range[1])
        seq = self.theta if sequence == "theta" else self.zeta

        # one table covering every index p + k + q touched by the scan
        base_lo = lo + min(0, k_lo) + min(0, int(q.min()))
        base_hi = hi + max(0, k_hi) + max(0, int(q.max()))
        idx = np.arange(base_lo, base_hi + 1)
        vals = np.asarray(seq(idx), dtype=float)

        def diffs(shift):
            p = np.arange(lo, hi + 1) + shift - base_lo
            return vals[p[None, :] + q[:, None]] - vals[p][None, :]

        ref = diffs(0)
        accepted = []
        for k in range(k_lo, k_hi + 1):
            if np.max(np.abs(diffs(k) - ref)) < eps:
                accepted.append(k)
        if len(accepted) >= 2:
            max_gap = float(np.max(np.diff(accepted)))
        else:
            max_gap = math.inf
        return AlmostPeriodReport(
            eps=float(eps),
            sequence=sequence,
            accepted=tuple(accepted),
            max_gap=max_gap,
            p_window=(lo, hi),
            k_range=(k_lo, k_hi),
            q_set=tuple(int(v) for v in q),
        )

    def __repr__(self) -> str:
        return (
            f"GammaSchedule(name={self.name!r}, p_range=({self.p_min}, {self.p_max}), "
            f"theta_bar={self.theta_bar}, theta_under={self.theta_under})"
        )
