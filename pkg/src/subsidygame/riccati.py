"""Backward integration of the firm's value-function coefficients.

On each constant-subsidy interval the firm's problem is linear-quadratic,
so its value function is ``v(t, x) = k2(t)/2 * x^2 + k1(t) x + k0(t)`` with
coefficients solving, backward from zero terminal values at T,

    k2' = rho*k2 - beta/2 * (w2/beta + k2)^2
    k1' = rho*k1 - beta/2 * (w1/beta + s + k1) * (w2/beta + k2)
    k0' = rho*k0 - beta/4 * (w1/beta + s + k1)^2

where s is the subsidy level in force on the interval.  The k2 equation does
not involve s.  Value-function continuity pins the coefficients at every
decision date, so a schedule induces a piecewise-smooth, globally continuous
coefficient path.

Integration is classical fixed-step RK4: the right-hand sides are smooth
polynomials, and a fixed step makes runs bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (
    CoefficientPath,
    CoefficientSegment,
    GameParameters,
    SubsidyGameError,
    SubsidyProgram,
    SubsidySchedule,
)

__all__ = [
    "SegmentSpec",
    "RiccatiBlowUpError",
    "coefficient_rhs",
    "integrate_segment",
    "solve_coefficients",
    "subsidy_intervals",
]

#: Coefficients beyond this magnitude are treated as a finite-time escape.
DEFAULT_MAGNITUDE_BOUND = 1e12


class RiccatiBlowUpError(SubsidyGameError):
    """A coefficient escaped to infinity inside the integration window."""

    def __init__(self, escape_time: float, segment_index: int | None = None):
        self.escape_time = escape_time
        self.segment_index = segment_index
        where = f" in segment {segment_index}" if segment_index is not None else ""
        super().__init__(f"Riccati finite-time escape at t={escape_time:.6f}{where}")


@dataclass(frozen=True)
class SegmentSpec:
    """One constant-subsidy interval with terminal coefficient values."""

    t_start: float
    t_end: float
    subsidy: float
    terminal_values: tuple[float, float, float]  # (k2, k1, k0) at t_end

    def __post_init__(self) -> None:
        if not self.t_start < self.t_end:
            raise ValueError("segment requires t_start < t_end")


def coefficient_rhs(
    params: GameParameters, k2: float, k1: float, k0: float, s: float
) -> tuple[float, float, float]:
    """Time derivatives (k2', k1', k0') at the given coefficient values."""
    beta = params.beta
    rho = params.rho
    g2 = params.w2 / beta + k2
    g1 = params.w1 / beta + s + k1
    return (
        rho * k2 - 0.5 * beta * g2 * g2,
        rho * k1 - 0.5 * beta * g1 * g2,
        rho * k0 - 0.25 * beta * g1 * g1,
    )


def _grid(t_start: float, t_end: float, step: float) -> np.ndarray:
    """Ascending sample times with exact endpoints, spacing as close to
    ``step`` as an integer subdivision allows."""
    n = max(1, round((t_end - t_start) / step))
    return np.linspace(t_start, t_end, n + 1)


def integrate_segment(
    params: GameParameters,
    seg: SegmentSpec,
    step: float,
    magnitude_bound: float = DEFAULT_MAGNITUDE_BOUND,
) -> CoefficientSegment:
    """Integrate the coefficient ODEs backward across one segment.

    Returns dense samples on [t_start, t_end] in ascending time order; the
    sample at t_end equals ``terminal_values`` exactly.  Raises
    :class:`RiccatiBlowUpError` if any coefficient exceeds
    ``magnitude_bound`` during the sweep.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if not all(np.isfinite(seg.terminal_values)):
        raise ValueError("terminal values must be finite")

    times = _grid(seg.t_start, seg.t_end, step)
    n = len(times) - 1
    k2s = np.empty(n + 1)
    k1s = np.empty(n + 1)
    k0s = np.empty(n + 1)
    k2, k1, k0 = (float(v) for v in seg.terminal_values)
    k2s[n], k1s[n], k0s[n] = k2, k1, k0
    s = seg.subsidy
    for i in range(n, 0, -1):
        h = times[i] - times[i - 1]
        a2, a1, a0 = coefficient_rhs(params, k2, k1, k0, s)
        b2, b1, b0 = coefficient_rhs(
            params, k2 - 0.5 * h * a2, k1 - 0.5 * h * a1, k0 - 0.5 * h * a0, s
        )
        c2, c1, c0 = coefficient_rhs(
            params, k2 - 0.5 * h * b2, k1 - 0.5 * h * b1, k0 - 0.5 * h * b0, s
        )
        d2, d1, d0 = coefficient_rhs(params, k2 - h * c2, k1 - h * c1, k0 - h * c0, s)
        k2 = k2 - (h / 6.0) * (a2 + 2.0 * b2 + 2.0 * c2 + d2)
        k1 = k1 - (h / 6.0) * (a1 + 2.0 * b1 + 2.0 * c1 + d1)
        k0 = k0 - (h / 6.0) * (a0 + 2.0 * b0 + 2.0 * c0 + d0)
        if abs(k2) > magnitude_bound or abs(k1) > magnitude_bound or abs(k0) > magnitude_bound:
            raise RiccatiBlowUpError(escape_time=float(times[i - 1]))
        k2s[i - 1], k1s[i - 1], k0s[i - 1] = k2, k1, k0
    return CoefficientSegment(
        t_start=float(times[0]),
        t_end=float(times[-1]),
        subsidy=s,
        times=times,
        k2=k2s,
        k1=k1s,
        k0=k0s,
    )


def subsidy_intervals(
    params: GameParameters, program: SubsidyProgram, schedule: SubsidySchedule
) -> tuple[tuple[float, float, float], ...]:
    """Ascending (t_start, t_end, subsidy) partition of [0, T].

    Covers the pre-program stretch [0, tau_1) under the initial subsidy when
    the first decision date is interior, each inter-date interval under its
    scheduled level, and the tail [tau_{N+1}, T] at zero subsidy.
    """
    dates = program.decision_dates
    out: list[tuple[float, float, float]] = []
    if dates:
        if dates[0] > 0:
            out.append((0.0, dates[0], program.initial_subsidy))
        bounds = list(dates) + [program.end_date]
        for i, level in enumerate(schedule.levels):
            out.append((bounds[i], bounds[i + 1], level))
    else:
        out.append((0.0, program.end_date, program.initial_subsidy))
    out.append((program.end_date, params.T, 0.0))
    return tuple(out)


def solve_coefficients(
    params: GameParameters,
    program: SubsidyProgram,
    schedule: SubsidySchedule,
    step: float = 1e-3,
    magnitude_bound: float = DEFAULT_MAGNITUDE_BOUND,
) -> CoefficientPath:
    """Coefficient path over [0, T] for one announced schedule.

    Integrates the tail [tau_{N+1}, T] from zero terminal values first, then
    walks the subsidized intervals in reverse order, chaining each segment's
    terminal values from the segment to its right (continuity at every
    breakpoint is therefore exact by construction).
    """
    if not schedule.is_admissible(program):
        raise ValueError("schedule is not admissible for this program")
    intervals = subsidy_intervals(params, program, schedule)
    segments: list[CoefficientSegment] = []
    terminal = (0.0, 0.0, 0.0)
    for index in range(len(intervals) - 1, -1, -1):
        lo, hi, level = intervals[index]
        spec = SegmentSpec(t_start=lo, t_end=hi, subsidy=level, terminal_values=terminal)
        try:
            seg = integrate_segment(params, spec, step, magnitude_bound)
        except RiccatiBlowUpError as exc:
            raise RiccatiBlowUpError(exc.escape_time, segment_index=index) from None
        segments.insert(0, seg)
        terminal = (float(seg.k2[0]), float(seg.k1[0]), float(seg.k0[0]))
    return CoefficientPath(params=params, segments=tuple(segments))
