"""Annealing envelopes A(s), B(s) and the time course s(t) with a pause.

A schedule is a tabulated pair of envelopes in GHz (h = 1) over the
dimensionless anneal parameter s in [0, 1], interpolated with a monotone
shape-preserving cubic so that A never overshoots negative where it spans
orders of magnitude. A plan adds the time course: ramp to s_p, hold for t_p,
ramp to 1, with equal ramp rates before and after the pause.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

__all__ = [
    "AnnealSchedule",
    "AnnealPlan",
    "eval_schedule",
    "synthetic_schedule",
    "s_of_t",
    "schedule_to_csv",
    "schedule_from_csv",
]

# Synthetic-envelope constants: A(s) = CROSS_A0 * exp(-DECAY * s^2),
# B(s) = B_INITIAL + (B_FINAL - B_INITIAL) * s^2, with CROSS_A0 fixed by
# requiring A = B exactly at s = CROSS_S. The resulting envelope crosses at
# 0.36, has d(ln A)/ds between -27 and -30 on s in [0.9, 1], a transverse
# field 42x dominant at s = 0 and 3e-7 negligible at s = 1.
B_INITIAL = 0.3
B_FINAL = 12.0
DECAY = 15.0
CROSS_S = 0.36
CROSS_A0 = (B_INITIAL + (B_FINAL - B_INITIAL) * CROSS_S**2) * math.exp(DECAY * CROSS_S**2)

_DEFAULT_POINTS = 1001


@dataclass(eq=False)
class AnnealSchedule:
    """Tabulated (s, A, B) in GHz with monotone cubic interpolation."""

    s: np.ndarray
    A: np.ndarray
    B: np.ndarray
    provenance: str = "loaded"  # "loaded" or "synthetic"

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        if not (len(self.s) == len(self.A) == len(self.B)):
            raise ValueError("s, A, B must have equal length")
        if len(self.s) < 2:
            raise ValueError("schedule needs at least two points")
        if not (self.s[0] == 0.0 and self.s[-1] == 1.0):
            raise ValueError("schedule must span s = 0 to s = 1")
        if np.any(np.diff(self.s) <= 0):
            raise ValueError("s grid must be strictly increasing")
        if np.any(self.A < 0) or np.any(self.B < 0):
            raise ValueError("envelopes must be nonnegative")
        if np.any(np.diff(self.A) > 1e-12):
            raise ValueError("A must be nonincreasing on the grid")
        if np.any(np.diff(self.B) < -1e-12):
            raise ValueError("B must be nondecreasing on the grid")
        self._interp_A = PchipInterpolator(self.s, self.A)
        self._interp_B = PchipInterpolator(self.s, self.B)

    def __call__(self, s):
        return eval_schedule(self, s)

    def ratio(self, s) -> float:
        """A(s)/B(s), the transverse-to-problem weight."""
        a, b = eval_schedule(self, s)
        return a / b


@dataclass(frozen=True)
class AnnealPlan:
    """Total anneal time plus an optional pause (s_p, t_p).

    Times are in microseconds for the master-equation engine and in sweeps
    for the Monte Carlo engines; the unit is carried by the consumer.
    """

    t_a: float
    s_p: float | None = None
    t_p: float = 0.0

    def __post_init__(self):
        if self.t_a < 0:
            raise ValueError("t_a must be nonnegative")
        if self.s_p is None:
            if self.t_p != 0:
                raise ValueError("t_p > 0 requires a pause location s_p")
        else:
            if not 0.0 <= self.s_p <= 1.0:
                raise ValueError("s_p must lie in [0, 1]")
            if self.t_p < 0:
                raise ValueError("t_p must be nonnegative")

    @property
    def total_time(self) -> float:
        return self.t_a + self.t_p

    @property
    def has_pause(self) -> bool:
        return self.s_p is not None and self.t_p > 0


def eval_schedule(schedule: AnnealSchedule, s):
    """(A, B) in GHz at anneal parameter s; exact at tabulated points."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0) or np.any(s_arr > 1):
        raise ValueError(f"s out of range [0, 1]: {s}")
    a = schedule._interp_A(s_arr)
    b = schedule._interp_B(s_arr)
    if np.ndim(s) == 0:
        return float(a), float(b)
    return np.asarray(a), np.asarray(b)


def synthetic_schedule(points: int = _DEFAULT_POINTS) -> AnnealSchedule:
    """The bundled closed-form envelope tabulation (>= 512 points).

    Shape guarantees: A(s) = B(s) at s = 0.36, d(ln A)/ds in [-30, -27] for
    s in [0.9, 1], A(0)/B(0) > 40, A(1)/B(1) < 1e-6, B strictly increasing.
    """
    if points < 512:
        raise ValueError("synthetic tabulation needs at least 512 points")
    s = np.arange(points) / (points - 1)
    A = CROSS_A0 * np.exp(-DECAY * s**2)
    B = B_INITIAL + (B_FINAL - B_INITIAL) * s**2
    return AnnealSchedule(s=s, A=A, B=B, provenance="synthetic")


def s_of_t(plan: AnnealPlan, t: float) -> float:
    """Anneal parameter at time t: ramp, hold at s_p, ramp to 1.

    Ramp rate is 1/t_a on both sides of the pause, so the two ramps take
    s_p * t_a and (1 - s_p) * t_a respectively.
    """
    if plan.t_a == 0:
        raise ValueError("s_of_t needs a positive-length anneal")
    if t < 0 or t > plan.total_time + 1e-12 * plan.total_time:
        raise ValueError(f"t = {t} outside [0, {plan.total_time}]")
    if not plan.has_pause:
        return min(t / plan.t_a, 1.0)
    t_enter = plan.s_p * plan.t_a
    if t <= t_enter:
        return t / plan.t_a
    if t <= t_enter + plan.t_p:
        return plan.s_p
    return min((t - plan.t_p) / plan.t_a, 1.0)


def schedule_to_csv(schedule: AnnealSchedule) -> str:
    """CSV with header s,A_GHz,B_GHz; floats in round-trip repr precision."""
    out = io.StringIO()
    out.write("s,A_GHz,B_GHz\n")
    for s, a, b in zip(schedule.s, schedule.A, schedule.B):
        out.write(f"{float(s)!r},{float(a)!r},{float(b)!r}\n")
    return out.getvalue()


def schedule_from_csv(text: str) -> AnnealSchedule:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].replace(" ", "") != "s,A_GHz,B_GHz":
        raise ValueError("schedule CSV must start with header s,A_GHz,B_GHz")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 3:
            raise ValueError(f"bad schedule row: {ln!r}")
        rows.append(tuple(float(p) for p in parts))
    arr = np.array(rows)
    return AnnealSchedule(s=arr[:, 0], A=arr[:, 1], B=arr[:, 2], provenance="loaded")
