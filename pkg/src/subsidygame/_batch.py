"""Vectorized solver internals.

The enumeration and dynamic-programming solvers evaluate many subsidy
schedules (or many grid states) under identical segment structure.  Three
structural facts make that cheap without changing the numerics:

* k2 solves the same equation regardless of the subsidy, so one global k2
  path (with its RK4 stage values) serves every schedule and branch;
* given the k2 stages, the RK4 step for k1 is affine in (k1, s), so the
  whole k1 path is an affine function of its terminal value and the
  interval's subsidy, with step-composed coefficients;
* given a coefficient path, the closed-loop sales dynamics are affine in
  the state, so the RK4 one-step maps are affine and compose into closed
  cumulative-product form.

The iterates are algebraically identical to the scalar RK4 loops in
:mod:`riccati` and :mod:`dynamics` (floating-point association differs at
round-off level); cross-agreement is pinned by tests.  Nothing here is
public API.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import NonInteriorPriceError, simpson_weights
from .model import GameParameters, SubsidyProgram
from .riccati import DEFAULT_MAGNITUDE_BOUND, RiccatiBlowUpError, _grid

#: Schedule-axis chunk size for the enumeration driver; results are
#: chunk-size invariant (all reductions are per schedule).
CHUNK = 256


@dataclass
class IntervalK2:
    """Global k2 samples on one interval plus RK4 stage values.

    ``y_stages[i]`` holds w2/beta + k2 at the four stage evaluations of the
    backward step from ``times[i+1]`` to ``times[i]``; the k1 reduction and
    the Hermite midpoints reuse them.
    """

    t_lo: float
    t_hi: float
    times: np.ndarray      # (n+1,) ascending
    k2: np.ndarray         # (n+1,)
    y_stages: np.ndarray   # (n, 4)


def k2_backward(params: GameParameters, t_lo: float, t_hi: float, step: float,
                k2_term: float) -> IntervalK2:
    """Integrate the (subsidy-free) k2 equation backward across an interval."""
    beta, rho = params.beta, params.rho
    w2b = params.w2 / beta
    c = 0.5 * beta
    times = _grid(t_lo, t_hi, step)
    n = len(times) - 1
    k2s = np.empty(n + 1)
    ys = np.empty((n, 4))
    z = float(k2_term)
    k2s[n] = z
    for i in range(n, 0, -1):
        h = times[i] - times[i - 1]
        y1 = w2b + z
        a = rho * z - c * y1 * y1
        zb = z - 0.5 * h * a
        y2 = w2b + zb
        b = rho * zb - c * y2 * y2
        zc = z - 0.5 * h * b
        y3 = w2b + zc
        cc = rho * zc - c * y3 * y3
        zd = z - h * cc
        y4 = w2b + zd
        d = rho * zd - c * y4 * y4
        z = z - (h / 6.0) * (a + 2.0 * b + 2.0 * cc + d)
        if abs(z) > DEFAULT_MAGNITUDE_BOUND:
            raise RiccatiBlowUpError(escape_time=float(times[i - 1]))
        k2s[i - 1] = z
        ys[i - 1, 0] = y1
        ys[i - 1, 1] = y2
        ys[i - 1, 2] = y3
        ys[i - 1, 3] = y4
    return IntervalK2(t_lo=float(times[0]), t_hi=float(times[-1]), times=times, k2=k2s, y_stages=ys)


def k1_affine(params: GameParameters, ik2: IntervalK2) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Affine reduction of the backward k1 sweep on one interval.

    Returns arrays (CP, U, V), each (n+1,), such that the RK4 iterate at row
    j equals ``CP[j] * k1_term + U[j] + V[j] * s`` for any terminal value
    and interval subsidy.  Row n is the terminal row (CP=1, U=V=0).
    """
    beta, rho = params.beta, params.rho
    w1b = params.w1 / beta
    c = 0.5 * beta
    times = ik2.times
    ys = ik2.y_stages
    n = len(times) - 1
    CP = np.empty(n + 1)
    U = np.empty(n + 1)
    V = np.empty(n + 1)
    CP[n], U[n], V[n] = 1.0, 0.0, 0.0
    cp, u_acc, v_acc = 1.0, 0.0, 0.0
    for i in range(n, 0, -1):
        h = times[i] - times[i - 1]
        ch = 0.5 * h
        y1, y2, y3, y4 = ys[i - 1]
        # stage slopes as (coefficient on k1, coefficient on s, constant)
        p1 = rho - c * y1
        q1 = -c * y1
        r1 = -c * y1 * w1b
        # k1_b = k1 - h/2 * f1
        kb_p, kb_q, kb_r = 1.0 - ch * p1, -ch * q1, -ch * r1
        p2 = (rho - c * y2) * kb_p
        q2 = (rho - c * y2) * kb_q - c * y2
        r2 = (rho - c * y2) * kb_r - c * y2 * w1b
        kc_p, kc_q, kc_r = 1.0 - ch * p2, -ch * q2, -ch * r2
        p3 = (rho - c * y3) * kc_p
        q3 = (rho - c * y3) * kc_q - c * y3
        r3 = (rho - c * y3) * kc_r - c * y3 * w1b
        kd_p, kd_q, kd_r = 1.0 - h * p3, -h * q3, -h * r3
        p4 = (rho - c * y4) * kd_p
        q4 = (rho - c * y4) * kd_q - c * y4
        r4 = (rho - c * y4) * kd_r - c * y4 * w1b
        phi = 1.0 - (h / 6.0) * (p1 + 2.0 * p2 + 2.0 * p3 + p4)
        v = -(h / 6.0) * (q1 + 2.0 * q2 + 2.0 * q3 + q4)
        u = -(h / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4)
        cp = phi * cp
        u_acc = phi * u_acc + u
        v_acc = phi * v_acc + v
        CP[i - 1] = cp
        U[i - 1] = u_acc
        V[i - 1] = v_acc
    return CP, U, V


@dataclass
class IntervalOps:
    """Per-interval machinery reusable across schedules and branches."""

    ik2: IntervalK2
    cp: np.ndarray
    u: np.ndarray
    v: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.ik2.times

    def k1_start(self, k1_term: np.ndarray, s: np.ndarray) -> np.ndarray:
        """k1 at the interval's left edge for terminal values/subsidies (W,)."""
        return self.cp[0] * k1_term + self.u[0] + self.v[0] * s

    def k1_dense(self, k1_term: np.ndarray, s: np.ndarray) -> np.ndarray:
        """All k1 rows, shape (n+1, W)."""
        K1 = self.cp[:, None] * k1_term[None, :] + self.u[:, None] + self.v[:, None] * s[None, :]
        if np.abs(K1).max() > DEFAULT_MAGNITUDE_BOUND:
            bad = int(np.argmax(np.any(np.abs(K1) > DEFAULT_MAGNITUDE_BOUND, axis=1)))
            raise RiccatiBlowUpError(escape_time=float(self.times[bad]))
        return K1


def build_interval_ops(params: GameParameters, boundaries: list[tuple[float, float]],
                       step: float) -> list[IntervalOps]:
    """k2 path and k1 reductions across an ascending interval partition.

    The k2 equation is subsidy-free, so one chained backward pass starting
    from zero at the final boundary serves every schedule.
    """
    ops: list[IntervalOps | None] = [None] * len(boundaries)
    k2_term = 0.0
    for j in range(len(boundaries) - 1, -1, -1):
        lo, hi = boundaries[j]
        ik2 = k2_backward(params, lo, hi, step, k2_term)
        k2_term = float(ik2.k2[0])
        cp, u, v = k1_affine(params, ik2)
        ops[j] = IntervalOps(ik2=ik2, cp=cp, u=u, v=v)
    return ops


def _rate_coeffs(params: GameParameters, op: IntervalOps, K1: np.ndarray, s: np.ndarray):
    """Closed-loop rate r = a(t) + b(t) x at rows and Hermite midpoints.

    b is subsidy-free (width 1); a is (n+1, W).
    """
    beta, rho = params.beta, params.rho
    w1b, w2b = params.w1 / beta, params.w2 / beta
    times = op.times
    k2 = op.ik2.k2
    y = w2b + k2
    F2 = rho * k2 - 0.5 * beta * y * y
    G1 = w1b + s[None, :] + K1
    F1 = rho * K1 - 0.5 * beta * G1 * y[:, None]
    h = np.diff(times)
    k2m = 0.5 * (k2[:-1] + k2[1:]) + 0.125 * h * (F2[:-1] - F2[1:])
    K1M = 0.5 * (K1[:-1] + K1[1:]) + 0.125 * h[:, None] * (F1[:-1] - F1[1:])
    A = 0.5 * (params.w1 + beta * (s[None, :] + K1))
    B = 0.5 * (params.w2 + beta * k2)
    AM = 0.5 * (params.w1 + beta * (s[None, :] + K1M))
    BM = 0.5 * (params.w2 + beta * k2m)
    return A, B, AM, BM


def forward_maps(params: GameParameters, op: IntervalOps, K1: np.ndarray, s: np.ndarray):
    """Row-composed affine RK4 maps of the closed-loop dynamics.

    Returns (P, G, A, B) with x-row_j = P[j] * x0 + G[j, w]: P is (n+1,)
    (the state-transition factor is subsidy-free), G is (n+1, W), and A, B
    are the rate coefficients at the sample rows for quadrature reuse.
    """
    A, B, AM, BM = _rate_coeffs(params, op, K1, s)
    times = op.times
    h = np.diff(times)
    ch = 0.5 * h
    # stage composition: f = a + b x with b width-1
    b1 = B[:-1]
    a1 = A[:-1]
    b2 = BM + ch * BM * b1
    a2 = AM + (ch * BM)[:, None] * a1
    b3 = BM + ch * BM * b2
    a3 = AM + (ch * BM)[:, None] * a2
    b4 = B[1:] + h * B[1:] * b3
    a4 = A[1:] + (h * B[1:])[:, None] * a3
    phi = 1.0 + (h / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
    psi = (h / 6.0)[:, None] * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    P = np.empty(len(times))
    P[0] = 1.0
    np.cumprod(phi, out=P[1:])
    inc = psi / P[1:, None]
    G = np.empty_like(K1)
    G[0] = 0.0
    np.cumsum(inc, axis=0, out=G[1:])
    G *= P[:, None]
    return P, G, A, B


def spend_reduction(params: GameParameters, op: IntervalOps, K1: np.ndarray, s: np.ndarray):
    """Affine-in-start-state quadrature of the subsidy outlay on an interval.

    Returns (P_end (,), G_end (W,), c0 (W,), c1 (W,), u0 (W,), u1 (W,)) such
    that, starting the interval at state x:
        x_end            = P_end * x + G_end[w]
        discounted spend = s[w] * (c0[w] + c1 * x)      (c1 is width-1)
        undiscounted     = s[w] * (u0[w] + u1 * x)
    """
    P, G, A, B = forward_maps(params, op, K1, s)
    times = op.times
    n = len(times) - 1
    wq = simpson_weights(n)
    h_mean = (times[-1] - times[0]) / n
    disc = np.exp(-params.rho * times)
    wd = wq * disc
    c1 = h_mean * float(np.dot(wd, B * P))
    c0 = h_mean * (wd @ A + (wd * B) @ G)
    u1 = h_mean * float(np.dot(wq, B * P))
    u0 = h_mean * (wq @ A + (wq * B) @ G)
    return float(P[-1]), G[-1], c0, c1, u0, u1


@dataclass
class BatchSolve:
    """Per-schedule results of one vectorized enumeration pass."""

    schedules: np.ndarray       # (B, N) levels
    x_end: np.ndarray           # (B,) cumulative sales at the program end
    spend: np.ndarray           # (B,) discounted subsidy expenditure
    uspend: np.ndarray          # (B,) undiscounted subsidy expenditure
    fixed: np.ndarray           # (B,) discounted fixed adjustment costs
    profit: np.ndarray          # (B,) discounted firm profit over [0, T]

    @property
    def cost(self) -> np.ndarray:
        return self.spend + self.fixed


def interval_partition(params: GameParameters, program: SubsidyProgram):
    """Ascending (t_lo, t_hi) pairs: pre-program stretch when the first
    decision date is interior, one interval per date, and the tail to T."""
    out: list[tuple[float, float]] = []
    dates = program.decision_dates
    if dates:
        if dates[0] > 0:
            out.append((0.0, dates[0]))
        bounds = list(dates) + [program.end_date]
        out.extend((bounds[j], bounds[j + 1]) for j in range(program.num_dates))
    else:
        out.append((0.0, program.end_date))
    out.append((program.end_date, params.T))
    return out


def _schedule_levels(program: SubsidyProgram, schedules: np.ndarray, j: int,
                     n_intervals: int) -> np.ndarray | None:
    """Subsidy vector on interval j of the partition, or None for zero."""
    b = len(schedules)
    has_pre = bool(program.decision_dates) and program.decision_dates[0] > 0
    if j == n_intervals - 1:
        return np.zeros(b)
    if has_pre and j == 0:
        return np.full(b, program.initial_subsidy)
    if not program.decision_dates:
        return np.full(b, program.initial_subsidy)
    return schedules[:, j - 1 if has_pre else j].astype(float)


def _solve_chunk(params, program, ops, schedules, step):
    n_intervals = len(ops)
    b = len(schedules)
    beta = params.beta

    # backward chaining of k1 terminal values (3 scalars per interval)
    s_at: list[np.ndarray] = [None] * n_intervals
    k1_term_at: list[np.ndarray] = [None] * n_intervals
    k1_term = np.zeros(b)
    for j in range(n_intervals - 1, -1, -1):
        s_at[j] = _schedule_levels(program, schedules, j, n_intervals)
        k1_term_at[j] = k1_term
        k1_term = ops[j].k1_start(k1_term, s_at[j])

    x = np.full(b, params.x0)
    x_end = np.full(b, params.x0)
    spend = np.zeros(b)
    uspend = np.zeros(b)
    profit = np.zeros(b)
    for j, op in enumerate(ops):
        s = s_at[j]
        K1 = op.k1_dense(k1_term_at[j], s)
        P, G, A, B = forward_maps(params, op, K1, s)
        XS = P[:, None] * x[None, :] + G
        k2col = op.ik2.k2[:, None]
        prices = 0.5 * (
            (params.alpha2 / beta - params.b2 - k2col) * XS
            + params.alpha1 / beta
            + params.p_a
            + s[None, :]
            + params.b1
            - K1
        )
        if prices.min() <= 0:
            row, col = np.unravel_index(int(np.argmin(prices)), prices.shape)
            raise NonInteriorPriceError(float(prices[row, col]), float(op.times[row]))
        R = A + B[:, None] * XS
        times = op.times
        n = len(times) - 1
        wq = simpson_weights(n)
        h_mean = (times[-1] - times[0]) / n
        disc = np.exp(-params.rho * times)[:, None]
        margin = prices - (params.b1 - params.b2 * XS)
        profit += h_mean * np.einsum("t,tb->b", wq, disc * margin * R)
        if op.ik2.t_lo < program.end_date:
            spend += s * (h_mean * np.einsum("t,tb->b", wq, disc * R))
            uspend += s * (h_mean * np.einsum("t,tb->b", wq, R))
        x = XS[-1]
        if op.ik2.t_hi == program.end_date:
            x_end = x
    return x_end, spend, uspend, profit


def solve_schedules_batch(
    params: GameParameters,
    program: SubsidyProgram,
    schedules: np.ndarray,
    step: float,
) -> BatchSolve:
    """Coefficients, closed-loop trajectory, and payoffs for B schedules.

    Schedules are processed in fixed-size chunks so the dense per-interval
    blocks stay small; chunking does not change any result.
    """
    schedules = np.asarray(schedules, dtype=float)
    if schedules.ndim != 2:
        schedules = schedules.reshape(len(schedules), -1)
    B, N = schedules.shape
    if N != program.num_dates:
        raise ValueError("schedule width does not match the number of decision dates")

    ops = build_interval_ops(params, interval_partition(params, program), step)
    x_end = np.empty(B)
    spend = np.empty(B)
    uspend = np.empty(B)
    profit = np.empty(B)
    for lo in range(0, B, CHUNK):
        sel = slice(lo, min(lo + CHUNK, B))
        x_end[sel], spend[sel], uspend[sel], profit[sel] = _solve_chunk(
            params, program, ops, schedules[sel], step
        )

    if N:
        prev = np.concatenate(
            [np.full((B, 1), program.initial_subsidy), schedules[:, :-1]], axis=1
        )
        eta = schedules - prev
        date_disc = np.exp(-params.rho * np.asarray(program.decision_dates))
        fixed = program.fixed_cost * ((eta > 0) * date_disc).sum(axis=1)
    else:
        fixed = np.zeros(B)

    return BatchSolve(
        schedules=schedules, x_end=x_end, spend=spend, uspend=uspend, fixed=fixed, profit=profit
    )
