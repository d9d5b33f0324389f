"""Closed-loop simulation under the firm's equilibrium pricing rule.

With value-function coefficients (k2, k1) in hand, the firm's equilibrium
price is the first-order condition of its instantaneous problem,

    p*(t) = 1/2 * ((alpha2/beta - b2 - k2) x + alpha1/beta + p_a + s + b1 - k1),

and substituting p* into the demand dynamics gives the closed-loop rate

    x'(t) = 1/2 * (w1 + beta*(s + k1) + (w2 + beta*k2) x).

The two routes must agree to machine precision; ``closed_loop_rate`` and
``demand_rate`` + ``equilibrium_price`` are kept as independent entry points
precisely so that the identity can be checked rather than assumed.

Payoff integrals use composite Simpson quadrature on the integration grid,
matching the fourth-order integrator so neither source of error dominates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    CoefficientPath,
    CoefficientSegment,
    Diagnostic,
    GameParameters,
    SubsidyGameError,
    SubsidyProgram,
    SubsidySchedule,
    Trajectory,
    unit_cost,
)
from .riccati import _grid, coefficient_rhs, subsidy_intervals

__all__ = [
    "PayoffBreakdown",
    "NonInteriorPriceError",
    "equilibrium_price",
    "demand_rate",
    "closed_loop_rate",
    "propagate",
    "payoffs",
    "composite_simpson",
    "simpson_weights",
]


class NonInteriorPriceError(SubsidyGameError):
    """The pricing formula returned a nonpositive price.

    The equilibrium derivation assumes interior prices; a violation means
    the parameter regime left that derivation's domain, so we fail loudly
    instead of clamping.
    """

    def __init__(self, price: float, time: float | None = None):
        self.price = price
        self.time = time
        at = f" at t={time:.6f}" if time is not None else ""
        super().__init__(f"non-interior price {price:.6g}{at}")


@dataclass(frozen=True)
class PayoffBreakdown:
    """Both players' discounted payoffs for one simulated schedule."""

    firm_profit: float          # over [0, T]
    subsidy_expenditure: float  # discounted integral of s * x' over [0, tau_{N+1}]
    fixed_costs: float          # sum of e^{-rho tau_i} C over positive adjustments

    @property
    def government_cost(self) -> float:
        return self.subsidy_expenditure + self.fixed_costs


def _price_formula(params: GameParameters, k2, k1, x, s):
    beta = params.beta
    return 0.5 * (
        (params.alpha2 / beta - params.b2 - k2) * x
        + params.alpha1 / beta
        + params.p_a
        + s
        + params.b1
        - k1
    )


def equilibrium_price(params: GameParameters, k2: float, k1: float, x: float, s: float) -> float:
    """Equilibrium producer price at state x under subsidy s.

    Raises :class:`NonInteriorPriceError` when the formula value is not
    strictly positive.
    """
    p = _price_formula(params, k2, k1, x, s)
    if p <= 0:
        raise NonInteriorPriceError(p)
    return p


def demand_rate(params: GameParameters, x: float, p: float, s: float) -> float:
    """Sales rate at price p and subsidy s; negative values are reported, not clamped."""
    return params.alpha1 + params.alpha2 * x - params.beta * (p - s - params.p_a)


def closed_loop_rate(params: GameParameters, k2: float, k1: float, x: float, s: float) -> float:
    """Sales rate with the equilibrium price substituted in closed form."""
    return 0.5 * (params.w1 + params.beta * (s + k1) + (params.w2 + params.beta * k2) * x)


def simpson_weights(n: int) -> np.ndarray:
    """Composite Simpson weights for n intervals (n+1 samples).

    Odd interval counts get a 3/8 rule on the last three intervals; a single
    interval degrades to the trapezoid rule.  Multiply by sample values and
    sum; the spacing h is already folded in by the caller.
    """
    if n < 1:
        return np.zeros(max(n + 1, 0))
    if n == 1:
        return np.array([0.5, 0.5])
    w = np.zeros(n + 1)
    m = n if n % 2 == 0 else n - 3
    if m > 0:
        w[0 : m + 1 : 2] += 2.0 / 3.0
        w[1:m:2] += 4.0 / 3.0
        w[0] -= 1.0 / 3.0
        w[m] -= 1.0 / 3.0
    if n % 2 == 1:
        w[m] += 3.0 / 8.0
        w[m + 1] += 9.0 / 8.0
        w[m + 2] += 9.0 / 8.0
        w[n] += 3.0 / 8.0
    return w


def composite_simpson(y: np.ndarray, h: float) -> float:
    """Integral of uniformly spaced samples y with spacing h."""
    n = len(y) - 1
    if n < 1:
        return 0.0
    return float(h * np.dot(simpson_weights(n), y))


def _segment_coefficient_evaluator(params: GameParameters, seg: CoefficientSegment):
    """Fast (k2, k1) lookup on one segment's grid, Hermite between samples."""
    ts = seg.times
    k2s, k1s = seg.k2, seg.k1
    beta, rho = params.beta, params.rho
    g2 = params.w2 / beta + k2s
    g1 = params.w1 / beta + seg.subsidy + k1s
    f2 = rho * k2s - 0.5 * beta * g2 * g2
    f1 = rho * k1s - 0.5 * beta * g1 * g2

    def at(t: float) -> tuple[float, float]:
        if t <= ts[0]:
            return float(k2s[0]), float(k1s[0])
        if t >= ts[-1]:
            return float(k2s[-1]), float(k1s[-1])
        i = int(np.searchsorted(ts, t, side="right")) - 1
        h = ts[i + 1] - ts[i]
        u = (t - ts[i]) / h
        h00 = (1 + 2 * u) * (1 - u) ** 2
        h10 = u * (1 - u) ** 2
        h01 = u * u * (3 - 2 * u)
        h11 = u * u * (u - 1)
        return (
            h00 * k2s[i] + h10 * h * f2[i] + h01 * k2s[i + 1] + h11 * h * f2[i + 1],
            h00 * k1s[i] + h10 * h * f1[i] + h01 * k1s[i + 1] + h11 * h * f1[i + 1],
        )

    return at


def propagate(
    params: GameParameters,
    program: SubsidyProgram,
    schedule: SubsidySchedule,
    coeffs: CoefficientPath,
    step: float = 1e-3,
) -> Trajectory:
    """Forward RK4 integration of the closed-loop sales dynamics.

    The grid is built per constant-subsidy interval so every decision date
    (and the program end) is a grid point; the subsidy drops to zero at the
    program end.  Rows at interior breakpoints carry the values of the
    interval that opens there.  Raises :class:`NonInteriorPriceError` if the
    recorded producer price is ever nonpositive; stretches of negative
    demand rate are flagged as warning diagnostics.
    """
    intervals = subsidy_intervals(params, program, schedule)
    if len(coeffs.segments) != len(intervals):
        raise ValueError("coefficient path does not match the program partition")

    times: list[np.ndarray] = []
    xs: list[np.ndarray] = []
    prices: list[np.ndarray] = []
    rates: list[np.ndarray] = []
    subs: list[np.ndarray] = []
    bounds: list[tuple[int, int, float]] = []

    x = params.x0
    row = 0
    last_index = len(intervals) - 1
    for index, ((lo, hi, level), seg) in enumerate(zip(intervals, coeffs.segments)):
        if seg.subsidy != level or seg.t_start != lo or seg.t_end != hi:
            raise ValueError("coefficient path was built for a different schedule")
        grid = _grid(lo, hi, step)
        n = len(grid) - 1
        k_at = _segment_coefficient_evaluator(params, seg)
        seg_x = np.empty(n + 1)
        seg_p = np.empty(n + 1)
        seg_r = np.empty(n + 1)
        for i in range(n):
            t = grid[i]
            h = grid[i + 1] - grid[i]
            k2a, k1a = k_at(t)
            k2m, k1m = k_at(t + 0.5 * h)
            k2b, k1b = k_at(grid[i + 1])
            seg_x[i] = x
            seg_p[i] = _price_formula(params, k2a, k1a, x, level)
            f1 = closed_loop_rate(params, k2a, k1a, x, level)
            seg_r[i] = f1
            f2 = closed_loop_rate(params, k2m, k1m, x + 0.5 * h * f1, level)
            f3 = closed_loop_rate(params, k2m, k1m, x + 0.5 * h * f2, level)
            f4 = closed_loop_rate(params, k2b, k1b, x + h * f3, level)
            x = x + (h / 6.0) * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
        k2b, k1b = k_at(grid[n])
        seg_x[n] = x
        seg_p[n] = _price_formula(params, k2b, k1b, x, level)
        seg_r[n] = closed_loop_rate(params, k2b, k1b, x, level)
        bad = seg_p <= 0
        if bad.any():
            j = int(np.argmax(bad))
            raise NonInteriorPriceError(float(seg_p[j]), float(grid[j]))

        # interior breakpoints belong to the segment that opens there
        keep = slice(0, n + 1) if index == last_index else slice(0, n)
        times.append(grid[keep])
        xs.append(seg_x[keep])
        prices.append(seg_p[keep])
        rates.append(seg_r[keep])
        subs.append(np.full(len(grid[keep]), level))
        bounds.append((row, row + n, level))
        row += n

    t_all = np.concatenate(times)
    r_all = np.concatenate(rates)
    diagnostics: list[Diagnostic] = []
    neg = r_all < 0
    if neg.any():
        edges = np.flatnonzero(np.diff(np.concatenate(([False], neg, [False])).astype(int)))
        for a, b in zip(edges[0::2], edges[1::2]):
            diagnostics.append(
                Diagnostic(
                    "warning",
                    "demand_rate",
                    f"negative demand rate on [{t_all[a]:.6g}, {t_all[b - 1]:.6g}]",
                )
            )

    p_all = np.concatenate(prices)
    s_all = np.concatenate(subs)
    return Trajectory(
        times=t_all,
        x=np.concatenate(xs),
        producer_price=p_all,
        consumer_price=p_all - s_all,
        subsidy=s_all,
        demand_rate=r_all,
        segment_bounds=tuple(bounds),
        diagnostics=tuple(diagnostics),
    )


def _segment_rows(params: GameParameters, traj: Trajectory, first: int, last: int, level: float):
    """Grid rows of one segment with the right endpoint restored to its
    left-limit values (the stored row at an interior breakpoint belongs to
    the next segment, whose subsidy differs)."""
    t = traj.times[first : last + 1]
    x = traj.x[first : last + 1]
    p = traj.producer_price[first : last + 1].copy()
    r = traj.demand_rate[first : last + 1].copy()
    ds = level - traj.subsidy[last]
    if ds != 0.0:
        # price and rate both shift by half the subsidy jump; x and k are continuous
        p[-1] = p[-1] + 0.5 * ds
        r[-1] = r[-1] + 0.5 * params.beta * ds
    return t, x, p, r


def payoffs(
    params: GameParameters,
    program: SubsidyProgram,
    schedule: SubsidySchedule,
    traj: Trajectory,
) -> PayoffBreakdown:
    """Discounted payoff integrals along a simulated trajectory.

    The firm's profit integrates (p - c(x)) x' over [0, T]; the government's
    expenditure integrates s x' up to the program end, plus the fixed cost
    for every strictly positive adjustment.  Integrals are evaluated per
    constant-subsidy segment so the jump discontinuities at decision dates
    never cross a quadrature panel.
    """
    profit = 0.0
    spend = 0.0
    for first, last, level in traj.segment_bounds:
        t, x, p, r = _segment_rows(params, traj, first, last, level)
        if last == first:
            continue
        h = (t[-1] - t[0]) / (last - first)
        disc = np.exp(-params.rho * t)
        margin = p - (params.b1 - params.b2 * x)
        profit += composite_simpson(disc * margin * r, h)
        if level != 0.0 and t[0] < program.end_date:
            spend += level * composite_simpson(disc * r, h)

    fixed = 0.0
    for date, eta in zip(program.decision_dates, schedule.adjustments):
        if eta > 0:
            fixed += math.exp(-params.rho * date) * program.fixed_cost
    return PayoffBreakdown(firm_profit=profit, subsidy_expenditure=spend, fixed_costs=fixed)
