"""Government-side optimization over subsidy schedules.

Two solvers share the same model machinery:

* :func:`enumerate_schedules` evaluates every level sequence in the subsidy
  set's Cartesian power exactly and keeps the cheapest feasible one -- the
  reference answer.
* :func:`dp_solve` runs backward induction over the decision dates on a
  state grid, minimizing the intervention operator at every (date, level,
  state) node with linear value interpolation in the state.

The firm's anticipation matters when pricing between two decision dates: its
value-function coefficients on an interval depend on every later subsidy
level.  The grid recursion therefore evaluates candidates per continuation
suffix -- each suffix's coefficient path is integrated once and cached -- so
each evaluated branch is priced against exactly the future it assumes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import _batch
from .dynamics import payoffs, propagate
from .model import (
    EquilibriumOutcome,
    GameParameters,
    SubsidyGameError,
    SubsidyProgram,
    SubsidySchedule,
)
from .riccati import solve_coefficients

__all__ = [
    "CandidateRow",
    "SolveReport",
    "GridSpec",
    "PolicyTable",
    "ProgramInfeasibleError",
    "EnumerationSizeError",
    "GridExtrapolationError",
    "enumerate_schedules",
    "intervention_value",
    "dp_solve",
]

#: Hard cap on the number of schedules the exact solver will enumerate.
ENUMERATION_LIMIT = 10_000_000


class ProgramInfeasibleError(SubsidyGameError):
    """No admissible schedule reaches the sales target by the program end."""

    def __init__(self, message: str = "program infeasible", candidates=None):
        self.candidates = candidates
        super().__init__(message)


class EnumerationSizeError(SubsidyGameError):
    """The schedule space is too large for exact enumeration."""


class GridExtrapolationError(SubsidyGameError):
    """A simulated state left the policy grid during schedule recovery."""


@dataclass(frozen=True)
class CandidateRow:
    """One enumerated schedule with its cost and feasibility."""

    levels: tuple[float, ...]
    government_cost: float
    firm_profit: float
    x_end: float
    feasible: bool


@dataclass(frozen=True)
class SolveReport:
    """Result of one government-side solve."""

    best_schedule: SubsidySchedule
    best_outcome: EquilibriumOutcome
    all_candidates: tuple[CandidateRow, ...] | None
    solver: str                      # "enumeration" | "dp"
    dp_value: float | None = None    # cost-to-go at (0, initial subsidy, x0)


@dataclass(frozen=True)
class GridSpec:
    """State-grid configuration for the dynamic program.

    With ``x_max`` unset, the grid upper edge is the largest program-end
    state over all enumerable schedules, padded by 10%.
    """

    nodes: int = 200
    x_max: float | None = None


@dataclass(frozen=True)
class PolicyTable:
    """Grid policy and value of the dynamic program.

    ``value[d, i, m]`` is the minimized cost-to-go (discounted to time 0)
    at decision date ``dates[d]``, arriving subsidy ``levels[i]``, state
    ``grid[m]``; ``eta`` holds the minimizing adjustment (0 where the target
    is unreachable and the value is infinite).
    """

    dates: tuple[float, ...]
    levels: tuple[float, ...]
    grid: np.ndarray
    eta: np.ndarray
    value: np.ndarray
    target: float

    def __post_init__(self) -> None:
        for name in ("grid", "eta", "value"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def value_interpolator(self, date_index: int):
        """Continuation lookup ``(level, x) -> value`` for one date.

        ``date_index == len(dates)`` addresses the program end, where the
        value is 0 on the target set and infinite elsewhere.
        """
        if date_index == len(self.dates):
            target = self.target

            def terminal(level: float, x: float) -> float:
                return 0.0 if x >= target else math.inf

            return terminal
        rows = {lvl: self.value[date_index, i] for i, lvl in enumerate(self.levels)}
        grid = self.grid

        def lookup(level: float, x: float) -> float:
            return float(
                _interp_row(grid, rows[level], np.atleast_1d(float(x)), fault=False)[0]
            )

        return lookup


def _interp_row(grid: np.ndarray, values: np.ndarray, q: np.ndarray, fault: bool):
    """Piecewise-linear value interpolation with a conservative infinity rule.

    Cells with a non-finite endpoint never mix into finite answers: a query
    strictly inside such a cell reads as infinite, while a query exactly on
    a finite node returns that node's value.  Above the top node the value
    is clamped (it is nonincreasing in x); below the bottom node it is
    infinite.  With ``fault=True`` leaving the grid raises instead -- the
    policy-recovery path uses that mode.
    """
    q = np.asarray(q, dtype=float)
    if fault and ((q < grid[0]).any() or (q > grid[-1]).any()):
        bad = q[(q < grid[0]) | (q > grid[-1])][0]
        raise GridExtrapolationError(
            f"simulated state {bad:.6g} exits the policy grid [{grid[0]:.6g}, {grid[-1]:.6g}]"
        )
    idx = np.clip(np.searchsorted(grid, q, side="right") - 1, 0, len(grid) - 2)
    x0, x1 = grid[idx], grid[idx + 1]
    v0, v1 = values[idx], values[idx + 1]
    u = (q - x0) / (x1 - x0)
    both_finite = np.isfinite(v0) & np.isfinite(v1)
    out = np.where(both_finite, v0 + u * (np.where(both_finite, v1, 0.0) - np.where(both_finite, v0, 0.0)), np.inf)
    out = np.where((u == 0.0) & np.isfinite(v0), v0, out)
    out = np.where((u == 1.0) & np.isfinite(v1), v1, out)
    out = np.where(q >= grid[-1], values[-1], out)
    out = np.where(q < grid[0], np.inf, out)
    return out


def _interp_smooth(grid: np.ndarray, values: np.ndarray, q: np.ndarray, fault: bool):
    """Piecewise-linear interpolation of an everywhere-finite row, extended
    linearly from the edge cells outside the grid.  ``fault=True`` raises on
    out-of-grid queries instead (the policy-recovery mode)."""
    q = np.asarray(q, dtype=float)
    if fault and ((q < grid[0]).any() or (q > grid[-1]).any()):
        bad = q[(q < grid[0]) | (q > grid[-1])][0]
        raise GridExtrapolationError(
            f"simulated state {bad:.6g} exits the policy grid [{grid[0]:.6g}, {grid[-1]:.6g}]"
        )
    idx = np.clip(np.searchsorted(grid, q, side="right") - 1, 0, len(grid) - 2)
    x0, x1 = grid[idx], grid[idx + 1]
    v0, v1 = values[idx], values[idx + 1]
    return v0 + (q - x0) / (x1 - x0) * (v1 - v0)


def _build_outcome(
    params: GameParameters,
    program: SubsidyProgram,
    levels: tuple[float, ...],
    step: float,
) -> tuple[SubsidySchedule, EquilibriumOutcome]:
    schedule = SubsidySchedule(levels=levels, initial_subsidy=program.initial_subsidy)
    coeffs = solve_coefficients(params, program, schedule, step)
    traj = propagate(params, program, schedule, coeffs, step)
    pay = payoffs(params, program, schedule, traj)
    x_end = traj.value_at(program.end_date)
    outcome = EquilibriumOutcome(
        schedule=schedule,
        trajectory=traj,
        firm_profit=pay.firm_profit,
        government_cost=pay.government_cost,
        feasible=bool(x_end >= program.target),
        unit_cost_path=params.b1 - params.b2 * traj.x,
    )
    return schedule, outcome


def enumerate_schedules(
    params: GameParameters, program: SubsidyProgram, step: float = 1e-3
) -> SolveReport:
    """Exact reference solver: evaluate every schedule in the level set's
    Cartesian power and keep the cheapest feasible one.

    Ties on government cost break toward the smaller total undiscounted
    subsidy expenditure, then the lexicographically smaller level sequence.
    Raises :class:`ProgramInfeasibleError` (with the full candidate table
    attached) when no schedule reaches the target, and
    :class:`EnumerationSizeError` when the level set is too large to sweep.
    """
    levels_set = program.subsidy_set
    n_dates = program.num_dates
    count = len(levels_set) ** n_dates
    if count > ENUMERATION_LIMIT:
        raise EnumerationSizeError(
            f"{len(levels_set)}^{n_dates} = {count} schedules exceeds the "
            f"enumeration limit {ENUMERATION_LIMIT}"
        )
    combos = list(itertools.product(levels_set, repeat=n_dates))
    schedules = np.array(combos, dtype=float).reshape(count, n_dates)
    batch = _batch.solve_schedules_batch(params, program, schedules, step)

    cost = batch.cost
    feasible = batch.x_end >= program.target
    rows = tuple(
        CandidateRow(
            levels=combos[i],
            government_cost=float(cost[i]),
            firm_profit=float(batch.profit[i]),
            x_end=float(batch.x_end[i]),
            feasible=bool(feasible[i]),
        )
        for i in range(count)
    )
    if not feasible.any():
        raise ProgramInfeasibleError(candidates=rows)

    best_index = min(
        (i for i in range(count) if feasible[i]),
        key=lambda i: (cost[i], batch.uspend[i], combos[i]),
    )
    schedule, outcome = _build_outcome(params, program, combos[best_index], step)
    return SolveReport(
        best_schedule=schedule,
        best_outcome=outcome,
        all_candidates=rows,
        solver="enumeration",
    )


class _SuffixRecursion:
    """Shared backward machinery over continuation suffixes.

    At decision date index d (0-based), a *branch* is a full assignment of
    levels to intervals d..N-1 in lexicographic order over the ascending
    level set.  The class walks dates backward, carrying per branch the k1
    value at the interval's left edge (the terminal condition one date
    earlier; k2 is subsidy-free and shared globally) and exposing, per
    date, the dense k1 samples together with the affine exit-state and
    expenditure reductions of the interval.
    """

    def __init__(self, params: GameParameters, program: SubsidyProgram, step: float):
        self.params = params
        self.program = program
        self.step = step
        self.levels = np.asarray(program.subsidy_set, dtype=float)
        self.dates = program.decision_dates
        self.ops = _batch.build_interval_ops(
            params, _batch.interval_partition(params, program), step
        )
        self._offset = 1 if (self.dates and self.dates[0] > 0) else 0
        # k1 at the program end: zero at T, chained through the tail
        tail = self.ops[-1]
        self._cache = tail.k1_start(np.zeros(1), np.zeros(1))
        self.dense: dict[int, tuple] = {}

    def branch_levels(self, d: int) -> np.ndarray:
        """First-interval level of every branch at date d."""
        reps = len(self.levels) ** (len(self.dates) - d - 1)
        return np.repeat(self.levels, reps)

    def descend(self, d: int) -> tuple:
        """(op, K1, s_branch, reduction) for date d; advances the cache."""
        s_br = self.branch_levels(d)
        k1_term = np.tile(self._cache, len(self.levels))
        op = self.ops[self._offset + d]
        K1 = op.k1_dense(k1_term, s_br)
        red = _batch.spend_reduction(self.params, op, K1, s_br)
        self._cache = op.k1_start(k1_term, s_br)
        self.dense[d] = (op, K1, s_br, red)
        return self.dense[d]

    def pre_interval_reduction(self) -> tuple:
        """Exit/expenditure reduction on [0, tau_1) per full branch."""
        op = self.ops[0]
        s0 = np.full(len(self._cache), self.program.initial_subsidy)
        K1 = op.k1_dense(self._cache, s0)
        return s0, _batch.spend_reduction(self.params, op, K1, s0)


def intervention_value(
    params: GameParameters,
    program: SubsidyProgram,
    date_index: int,
    s: float,
    x: float,
    continuation,
    step: float = 1e-3,
) -> tuple[float, float]:
    """Minimize the one-date intervention operator at an exact state.

    Evaluates, for every admissible adjustment and every anticipated future
    level suffix, the discounted subsidy expenditure across the coming
    interval (under the branch-exact coefficient path) plus the fixed cost
    for a positive adjustment plus ``continuation(new_level, x_end)``, and
    returns the minimizing ``(eta, value)`` pair.  Ties resolve toward the
    lexicographically smallest branch.
    """
    n_dates = program.num_dates
    if not 0 <= date_index < n_dates:
        raise ValueError("date_index out of range")
    rec = _SuffixRecursion(params, program, step)
    for d in range(n_dates - 1, date_index - 1, -1):
        rec.descend(d)
    _, _, s_br, (p_end, g_end, c0, c1, _, _) = rec.dense[date_index]
    x_end = p_end * float(x) + g_end
    spend = s_br * (c0 + c1 * float(x))
    disc = math.exp(-params.rho * program.decision_dates[date_index])
    fixed = program.fixed_cost * disc * (s_br > s)
    total = spend + fixed + np.array(
        [continuation(float(s_br[b]), float(x_end[b])) for b in range(len(s_br))]
    )
    b_star = int(np.argmin(total))
    value = float(total[b_star])
    eta = 0.0 if math.isinf(value) else float(s_br[b_star] - s)
    return eta, value


def dp_solve(
    params: GameParameters,
    program: SubsidyProgram,
    grid_spec: GridSpec = GridSpec(),
    step: float = 1e-3,
) -> tuple[PolicyTable, SolveReport]:
    """Backward-induction solver over a state grid.

    The recursion tracks, per continuation suffix, two objects on the state
    grid: the committed plan's expenditure-to-go (smooth in the state, so
    plain linear interpolation is accurate) and its exact feasibility
    threshold (the closed-loop exit state is affine and increasing in the
    entry state, so the minimal start state that still reaches the target
    composes exactly through the dates).  Keeping plans separate until the
    final nodewise minimum avoids two failure modes of interpolating the
    minimized value directly: smearing its plan-switch jumps, and pairing an
    interval priced under one anticipated future with a continuation that
    plays another.  Queries on the infeasible side of a plan's threshold
    read as infinite.  The policy and value tables take the nodewise
    minimum over branches (the arriving level fixes the first adjustment's
    fixed cost), and the equilibrium schedule is recovered by re-minimizing
    at the exact simulated state of each decision date from
    (0, initial subsidy, x0).

    Returns the policy table and a report whose outcome is re-simulated
    through the public single-schedule pipeline.  Raises
    :class:`ProgramInfeasibleError` when the root value is infinite and
    :class:`GridExtrapolationError` when recovery leaves the grid.
    """
    n_dates = program.num_dates
    if n_dates == 0:
        raise ValueError("dynamic program requires at least one decision date")

    if grid_spec.x_max is None:
        combos = np.array(
            list(itertools.product(program.subsidy_set, repeat=n_dates)), dtype=float
        )
        probe = _batch.solve_schedules_batch(params, program, combos, step)
        x_max = 1.1 * float(probe.x_end.max())
    else:
        x_max = float(grid_spec.x_max)
    if x_max <= params.x0:
        x_max = params.x0 + max(1.0, abs(params.x0))
    grid = np.linspace(params.x0, x_max, grid_spec.nodes)

    levels = np.asarray(program.subsidy_set, dtype=float)
    n_levels = len(levels)
    m = len(grid)
    disc_date = [math.exp(-params.rho * t) for t in program.decision_dates]

    value = np.empty((n_dates, n_levels, m))
    eta = np.empty((n_dates, n_levels, m))
    rec = _SuffixRecursion(params, program, step)
    plan_spend: dict[int, np.ndarray] = {}  # date -> (branches, m) expenditure-to-go
    plan_xstar: dict[int, np.ndarray] = {}  # date -> (branches,) feasibility threshold
    plan_fixed: dict[int, np.ndarray] = {}  # date -> (branches,) fixed costs after the date

    for d in range(n_dates - 1, -1, -1):
        op, K1, s_br, red = rec.descend(d)
        p_end, g_end, c0, c1, _, _ = red
        n_br = len(s_br)
        # the exit state and the interval outlay are affine in the entry state
        x_end = p_end * grid[None, :] + g_end[:, None]
        spend = s_br[:, None] * (c0[:, None] + c1 * grid[None, :])
        if d == n_dates - 1:
            rows = spend
            xstar = (program.target - g_end) / p_end
            fc = np.zeros(n_br)
        else:
            spend_next = plan_spend[d + 1]
            xstar_next = plan_xstar[d + 1]
            fc_next = plan_fixed[d + 1]
            n_next = len(fc_next)
            rows = np.empty((n_br, m))
            xstar = np.empty(n_br)
            fc = np.empty(n_br)
            next_first = rec.branch_levels(d + 1)
            for b in range(n_br):
                tail = b % n_next
                rows[b] = spend[b] + _interp_smooth(grid, spend_next[tail], x_end[b], fault=False)
                xstar[b] = (xstar_next[tail] - g_end[b]) / p_end
                fc[b] = fc_next[tail] + program.fixed_cost * disc_date[d + 1] * (
                    next_first[tail] > s_br[b]
                )
        plan_spend[d] = rows
        plan_xstar[d] = xstar
        plan_fixed[d] = fc

        committed = np.where(grid >= xstar[:, None], rows + fc[:, None], np.inf)
        for i, s_in in enumerate(levels):
            first_fixed = program.fixed_cost * disc_date[d] * (s_br > s_in)
            total = committed + first_fixed[:, None]
            b_star = np.argmin(total, axis=0)
            vals = total[b_star, np.arange(m)]
            value[d, i] = vals
            eta[d, i] = np.where(np.isfinite(vals), s_br[b_star] - s_in, 0.0)

    table = PolicyTable(
        dates=program.decision_dates,
        levels=tuple(float(v) for v in levels),
        grid=grid,
        eta=eta,
        value=value,
        target=program.target,
    )

    # ---- schedule recovery at exact states -------------------------------
    pre_x_end: np.ndarray | None = None
    pre_spend: np.ndarray | None = None
    if program.decision_dates[0] > 0:
        s0, (p0, g0, c00, c01, _, _) = rec.pre_interval_reduction()
        pre_x_end = p0 * params.x0 + g0
        pre_spend = s0 * (c00 + c01 * params.x0)

    s_cur = program.initial_subsidy
    x_cur = params.x0
    recovered: list[float] = []
    root_value: float | None = None
    for d in range(n_dates):
        op, K1, s_br, (p_end, g_end, c0, c1, _, _) = rec.dense[d]
        n_br = len(s_br)
        if d == 0 and pre_x_end is not None:
            # the firm's pricing before tau_1 anticipates the whole future
            # plan, so the first minimization covers [0, tau_2) jointly
            x_entry = pre_x_end
            lead_spend = pre_spend
        else:
            x_entry = np.full(n_br, x_cur)
            lead_spend = np.zeros(n_br)
        x_end = p_end * x_entry + g_end
        spend = s_br * (c0 + c1 * x_entry)
        if d == n_dates - 1:
            cont = np.where(x_end >= program.target, 0.0, np.inf)
        else:
            spend_next = plan_spend[d + 1]
            xstar_next = plan_xstar[d + 1]
            n_next = len(xstar_next)
            cont = np.empty(n_br)
            for b in range(n_br):
                tail = b % n_next
                if x_end[b] < xstar_next[tail]:
                    cont[b] = np.inf
                else:
                    cont[b] = _interp_smooth(grid, spend_next[tail], x_end[b : b + 1], fault=True)[0]
        first_fixed = program.fixed_cost * disc_date[d] * (s_br > s_cur)
        total = lead_spend + spend + cont + plan_fixed[d] + first_fixed
        b_star = int(np.argmin(total))
        if d == 0:
            root_value = float(total[b_star])
        s_cur = float(s_br[b_star])
        recovered.append(s_cur)
        x_cur = float(x_end[b_star])

    if root_value is None or math.isinf(root_value):
        raise ProgramInfeasibleError()

    schedule, outcome = _build_outcome(params, program, tuple(recovered), step)
    report = SolveReport(
        best_schedule=schedule,
        best_outcome=outcome,
        all_candidates=None,
        solver="dp",
        dp_value=root_value,
    )
    return table, report
