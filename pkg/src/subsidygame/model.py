"""Domain types for the subsidized new-technology pricing game.

A single firm prices a durable good continuously over a horizon [0, T];
a government adjusts a discrete-valued consumer subsidy only at fixed
decision dates tau_1 < ... < tau_N and shuts the program down at tau_{N+1}.
Demand grows with the installed base (word of mouth) and falls with the
effective price gap to the incumbent technology; the unit production cost
declines with cumulative sales (learning by doing).

Everything in this module is an immutable value object.  Numeric arrays
held by the container types are frozen (``writeable = False``) so instances
can be shared freely across threads or processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "GameParameters",
    "SubsidyProgram",
    "SubsidySchedule",
    "CoefficientSegment",
    "CoefficientPath",
    "Trajectory",
    "EquilibriumOutcome",
    "Diagnostic",
    "SubsidyGameError",
    "validate",
    "unit_cost",
]


class SubsidyGameError(Exception):
    """Base class for all errors raised by this package."""


def _frozen_array(values: Iterable[float]) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GameParameters:
    """Market, cost, and horizon constants.

    The sales rate without subsidy is ``alpha1 + alpha2*x - beta*(p - p_a)``
    and the unit cost is ``b1 - b2*x``.  The derived constants ``w1`` and
    ``w2`` are recomputed on access so they can never drift out of sync with
    the primitives.
    """

    alpha1: float   # demand intercept (units/time)
    alpha2: float   # word-of-mouth coefficient (1/time)
    beta: float     # price sensitivity (units/time per currency)
    p_a: float      # incumbent-technology price (currency)
    x0: float       # initial cumulative sales (units)
    b1: float       # initial unit cost (currency)
    b2: float       # learning speed (currency/unit)
    rho: float      # discount rate (1/time)
    T: float        # firm planning horizon (time)

    @property
    def w1(self) -> float:
        return self.alpha1 + self.beta * (self.p_a - self.b1)

    @property
    def w2(self) -> float:
        return self.alpha2 + self.beta * self.b2


@dataclass(frozen=True)
class SubsidyProgram:
    """The government's program: when it may act and what it may pay.

    ``decision_dates`` are the N instants at which the subsidy level may
    jump; ``end_date`` is the program end (and target deadline), strictly
    before the firm's horizon.  ``subsidy_set`` is the finite menu of
    admissible levels and must contain 0.  Each strictly positive adjustment
    incurs the fixed cost ``fixed_cost``.
    """

    decision_dates: tuple[float, ...]
    end_date: float
    subsidy_set: tuple[float, ...]   # normalized to ascending order
    fixed_cost: float
    target: float
    initial_subsidy: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "decision_dates", tuple(float(t) for t in self.decision_dates))
        object.__setattr__(self, "subsidy_set", tuple(sorted(float(s) for s in self.subsidy_set)))

    @property
    def num_dates(self) -> int:
        return len(self.decision_dates)

    def admissible_adjustments(self, level: float) -> tuple[float, ...]:
        """Adjustments eta with ``level + eta`` in the subsidy set."""
        return tuple(s - level for s in self.subsidy_set)


@dataclass(frozen=True)
class SubsidySchedule:
    """Subsidy levels in force on each inter-date interval.

    ``levels[i]`` applies on ``[tau_{i+1}, tau_{i+2})`` (0-based: the i-th
    decision date opens the i-th interval).  Adjustments are derived by
    telescoping against the level in force before the first date.
    """

    levels: tuple[float, ...]
    initial_subsidy: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "levels", tuple(float(s) for s in self.levels))

    @property
    def adjustments(self) -> tuple[float, ...]:
        prev = [self.initial_subsidy, *self.levels[:-1]]
        return tuple(lvl - p for lvl, p in zip(self.levels, prev))

    def is_admissible(self, program: SubsidyProgram) -> bool:
        return (
            len(self.levels) == program.num_dates
            and all(lvl in program.subsidy_set for lvl in self.levels)
            and self.initial_subsidy == program.initial_subsidy
        )


@dataclass(frozen=True)
class CoefficientSegment:
    """Dense samples of (k2, k1, k0) on one constant-subsidy interval."""

    t_start: float
    t_end: float
    subsidy: float
    times: np.ndarray    # shape (n+1,), ascending, endpoints exact
    k2: np.ndarray
    k1: np.ndarray
    k0: np.ndarray

    def __post_init__(self) -> None:
        for name in ("times", "k2", "k1", "k0"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))


@dataclass(frozen=True)
class CoefficientPath:
    """Piecewise value-function coefficients k2, k1, k0 over [0, T].

    Segments partition [0, T] at the program breakpoints.  Adjacent segments
    share their endpoint values exactly, so the coefficients are continuous
    at every breakpoint by construction; all three vanish at T.
    """

    params: GameParameters
    segments: tuple[CoefficientSegment, ...]

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return tuple(seg.t_start for seg in self.segments) + (self.segments[-1].t_end,)

    def segment_at(self, t: float) -> CoefficientSegment:
        """Segment whose half-open interval [t_start, t_end) contains t.

        The final segment is closed on the right so t = T resolves.
        """
        for seg in self.segments[:-1]:
            if t < seg.t_end:
                return seg
        return self.segments[-1]

    def evaluate(self, t: float) -> tuple[float, float, float]:
        """(k2, k1, k0) at an arbitrary time via cubic Hermite interpolation.

        Slopes at the bracketing samples come from the coefficient ODEs, so
        the interpolant has the same O(h^4) local accuracy as the integrator.
        """
        from . import riccati  # local import: avoids a module cycle

        seg = self.segment_at(t)
        ts = seg.times
        if t <= ts[0]:
            return float(seg.k2[0]), float(seg.k1[0]), float(seg.k0[0])
        if t >= ts[-1]:
            return float(seg.k2[-1]), float(seg.k1[-1]), float(seg.k0[-1])
        i = int(np.searchsorted(ts, t, side="right")) - 1
        h = ts[i + 1] - ts[i]
        u = (t - ts[i]) / h
        out = []
        for arr in (seg.k2, seg.k1, seg.k0):
            ya, yb = float(arr[i]), float(arr[i + 1])
            out.append((ya, yb))
        fa = riccati.coefficient_rhs(self.params, out[0][0], out[1][0], out[2][0], seg.subsidy)
        fb = riccati.coefficient_rhs(self.params, out[0][1], out[1][1], out[2][1], seg.subsidy)
        h00 = (1 + 2 * u) * (1 - u) ** 2
        h10 = u * (1 - u) ** 2
        h01 = u * u * (3 - 2 * u)
        h11 = u * u * (u - 1)
        return tuple(
            h00 * ya + h10 * h * ma + h01 * yb + h11 * h * mb
            for (ya, yb), ma, mb in zip(out, fa, fb)
        )


@dataclass(frozen=True)
class Diagnostic:
    """One validation or simulation finding; diagnostics are data, not errors."""

    severity: str   # "error" | "warning"
    field: str
    message: str

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return f"[{self.severity}] {self.field}: {self.message}"


@dataclass(frozen=True)
class Trajectory:
    """Closed-loop simulation output on a dense grid over [0, T].

    Rows are right-continuous at decision dates: the row at an interior
    breakpoint carries the subsidy (and hence price and rate) of the
    interval that opens there.  ``x`` is continuous throughout.
    """

    times: np.ndarray
    x: np.ndarray
    producer_price: np.ndarray
    consumer_price: np.ndarray
    subsidy: np.ndarray
    demand_rate: np.ndarray
    segment_bounds: tuple[tuple[int, int, float], ...]  # (first row, last row, subsidy) per segment
    diagnostics: tuple[Diagnostic, ...] = ()

    def __post_init__(self) -> None:
        for name in ("times", "x", "producer_price", "consumer_price", "subsidy", "demand_rate"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))

    def value_at(self, t: float, column: str = "x") -> float:
        """Linear interpolation of one column (x is the only continuous one)."""
        return float(np.interp(t, self.times, getattr(self, column)))


@dataclass(frozen=True)
class EquilibriumOutcome:
    """A schedule together with its simulated consequences."""

    schedule: SubsidySchedule
    trajectory: Trajectory
    firm_profit: float
    government_cost: float
    feasible: bool
    unit_cost_path: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "unit_cost_path", _frozen_array(self.unit_cost_path))


def unit_cost(params: GameParameters, x: float) -> float:
    """Unit production cost at cumulative sales x: b1 - b2*x."""
    return params.b1 - params.b2 * x


def validate(params: GameParameters, program: SubsidyProgram) -> list[Diagnostic]:
    """Check every type invariant; return one diagnostic per violation.

    A clean configuration yields an empty list.  A target high enough to
    drive the unit cost nonpositive is reported as a warning, not an error:
    the model stays well defined, but the learning-cost interpretation
    breaks down there.
    """
    out: list[Diagnostic] = []

    def err(field: str, message: str) -> None:
        out.append(Diagnostic("error", field, message))

    for name in ("alpha1", "alpha2", "beta", "b2", "rho", "T"):
        if not getattr(params, name) > 0:
            err(name, f"{name} must be positive")
    if not params.x0 >= 0:
        err("x0", "x0 must be nonnegative")

    dates = program.decision_dates
    if dates:
        if dates[0] < 0:
            err("decision_dates", "first decision date must be nonnegative")
        if any(b <= a for a, b in zip(dates, dates[1:])):
            err("decision_dates", "decision dates must be strictly increasing")
        if dates[-1] >= program.end_date:
            err("end_date", "last decision date must precede the program end date")
    if not program.end_date < params.T:
        err("end_date", "program end date must precede the firm horizon T")
    if 0.0 not in program.subsidy_set:
        err("subsidy_set", "subsidy set must contain 0")
    if any(s < 0 for s in program.subsidy_set):
        err("subsidy_set", "subsidy levels must be nonnegative")
    if len(set(program.subsidy_set)) != len(program.subsidy_set):
        err("subsidy_set", "subsidy levels must be pairwise distinct")
    if not program.target > 0:
        err("target", "target must be positive")

    if unit_cost(params, program.target) <= 0:
        out.append(Diagnostic("warning", "target", "unit cost nonpositive at target"))
    return out
