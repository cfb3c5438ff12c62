"""Exact dense-simplex solver for the continuous relaxations.

A deliberately small simplex on a bounded-variable tableau: primal two-phase
solves with Dantzig pricing (switching to Bland's rule once pivots stall),
plus a dual-simplex re-solve path so branch-and-bound nodes can restart from
the root optimum after bound changes instead of from scratch.  No sparse
algebra, no presolve beyond empty-row removal and fixed-variable
elimination; problems here are a few hundred rows and columns, and
determinism and auditability beat speed.  Every reported optimum is
re-checked against the original constraints before it leaves this module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
INT_TOL = 1e-6
STALL_LIMIT = 50  # degenerate pivots before switching to Bland's rule

LE, EQ, GE = "<=", "==", ">="
_SENSES = (LE, EQ, GE)


@dataclass
class LinearProgram:
    """min c.x subject to row constraints and variable bounds."""

    n: int
    objective: np.ndarray = field(init=False)
    rows: list[tuple[np.ndarray, str, float]] = field(default_factory=list, init=False)
    lower: np.ndarray = field(init=False)
    upper: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.objective = np.zeros(self.n)
        self.lower = np.zeros(self.n)
        self.upper = np.full(self.n, np.inf)

    def set_objective(self, coeffs: dict[int, float] | np.ndarray) -> None:
        if isinstance(coeffs, dict):
            for j, v in coeffs.items():
                self.objective[j] = v
        else:
            self.objective = np.asarray(coeffs, dtype=float).copy()

    def add_row(self, coeffs: dict[int, float] | np.ndarray, sense: str, rhs: float) -> None:
        if sense not in _SENSES:
            raise ValueError(f"sense must be one of {_SENSES}, got {sense!r}")
        row = np.zeros(self.n)
        if isinstance(coeffs, dict):
            for j, v in coeffs.items():
                row[j] = v
        else:
            row = np.asarray(coeffs, dtype=float).copy()
        if not np.all(np.isfinite(row)) or not np.isfinite(rhs):
            raise ValueError("constraint coefficients must be finite")
        self.rows.append((row, sense, float(rhs)))

    def set_bounds(self, j: int, lower: float = 0.0, upper: float = np.inf) -> None:
        if lower > upper:
            raise ValueError(f"lower bound {lower} above upper bound {upper} for x[{j}]")
        self.lower[j] = lower
        self.upper[j] = upper


@dataclass(frozen=True)
class LpOutcome:
    status: str  # optimal | infeasible | unbounded | numeric_failure
    x: np.ndarray | None
    z: float | None
    iterations: int
    # reduced cost per original variable at the optimum (zero for basic
    # variables); feeds reduced-cost fixing in the branch-and-bound
    reduced_costs: np.ndarray | None = None


def _row_arrays(lp: LinearProgram) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense (A, senses, rhs) view of the rows, cached on the instance."""
    cached = getattr(lp, "_dense_rows", None)
    if cached is not None and cached[3] == len(lp.rows):
        return cached[0], cached[1], cached[2]
    if lp.rows:
        A = np.vstack([row for row, _, _ in lp.rows])
        senses = np.array([{LE: -1, EQ: 0, GE: 1}[s] for _, s, _ in lp.rows])
        rhs = np.array([r for _, _, r in lp.rows])
    else:
        A = np.zeros((0, lp.n))
        senses = np.zeros(0, dtype=int)
        rhs = np.zeros(0)
    lp._dense_rows = (A, senses, rhs, len(lp.rows))
    return A, senses, rhs


def _feasible(lp: LinearProgram, x: np.ndarray, tol: float = FEAS_TOL) -> bool:
    if np.any(x < lp.lower - tol) or np.any(x > lp.upper + tol):
        return False
    A, senses, rhs = _row_arrays(lp)
    if not len(rhs):
        return True
    resid = A @ x - rhs
    if np.any(resid[senses <= 0] > tol):
        return False
    if np.any(resid[senses >= 0] < -tol):
        return False
    return True


class _Core:
    """Bounded-variable simplex over Ax = b with per-column bounds.

    Nonbasic variables sit at one of their bounds (``at_upper`` says which);
    basic values are maintained incrementally.  The same state serves the
    primal step (optimality-seeking) and the dual step (feasibility-seeking
    after bound changes), which is what the warm-start path relies on.
    """

    def __init__(
        self,
        A: np.ndarray,
        b: np.ndarray,
        lo: np.ndarray,
        hi: np.ndarray,
        basis: np.ndarray,
    ):
        # rows arrive normalized so that A[:, basis] is the identity; the
        # right-hand side rides along as a pivoted column, keeping B^-1 b
        # available for warm restarts after bound changes
        self.m, self.total = A.shape
        self.T = A.astype(float).copy()
        self.Tb = b.astype(float).copy()
        self.lo = lo.astype(float).copy()
        self.hi = hi.astype(float).copy()
        self.basis = basis.astype(int).copy()
        self.in_basis = np.zeros(self.total, dtype=bool)
        self.in_basis[self.basis] = True
        self.at_upper = np.zeros(self.total, dtype=bool)
        self.iterations = 0
        self.degenerate_run = 0
        self.xB = np.zeros(self.m)
        self.refresh_basic_values()

    def clone(self) -> "_Core":
        other = object.__new__(_Core)
        other.m, other.total = self.m, self.total
        other.T = self.T.copy()
        other.Tb = self.Tb.copy()
        other.lo = self.lo.copy()
        other.hi = self.hi.copy()
        other.basis = self.basis.copy()
        other.in_basis = self.in_basis.copy()
        other.at_upper = self.at_upper.copy()
        other.iterations = 0
        other.degenerate_run = 0
        other.xB = self.xB.copy()
        return other

    def nonbasic_values(self) -> np.ndarray:
        v = np.where(self.at_upper, self.hi, self.lo)
        v[self.in_basis] = 0.0
        return v

    def refresh_basic_values(self) -> None:
        """Recompute basic values from the tableau and nonbasic bounds."""
        if not self.m:
            self.xB = np.zeros(0)
            return
        v = self.nonbasic_values()
        nb = ~self.in_basis
        self.xB = self.Tb - self.T[:, nb] @ v[nb]

    def solution(self) -> np.ndarray:
        x = self.nonbasic_values()
        x[self.basis] = self.xB
        return x

    def objective(self, c: np.ndarray) -> float:
        return float(c @ self.solution())

    def reduced_costs(self, c: np.ndarray) -> np.ndarray:
        return c - c[self.basis] @ self.T

    def _pivot(self, row: int, col: int) -> None:
        piv = self.T[row, col]
        self.T[row] = self.T[row] / piv
        self.Tb[row] = self.Tb[row] / piv
        column = self.T[:, col].copy()
        column[row] = 0.0
        self.T -= np.outer(column, self.T[row])
        self.Tb -= column * self.Tb[row]

    # -- primal ---------------------------------------------------------

    def _primal_entering(self, d: np.ndarray, allowed: np.ndarray, bland: bool) -> int | None:
        free = allowed & ~self.in_basis
        score = np.where(
            free & ~self.at_upper, -d, np.where(free & self.at_upper, d, -np.inf)
        )
        if bland:
            eligible = np.nonzero(score > PIVOT_TOL)[0]
            return int(eligible[0]) if eligible.size else None
        j = int(np.argmax(score))  # ties resolve to the lowest index
        return j if score[j] > PIVOT_TOL else None

    def primal_step(self, c: np.ndarray, allowed: np.ndarray, bland: bool) -> str:
        d = self.reduced_costs(c)
        j = self._primal_entering(d, allowed, bland)
        if j is None:
            return "optimal"
        sign = -1.0 if self.at_upper[j] else 1.0
        y = sign * self.T[:, j]

        lo_b = self.lo[self.basis]
        hi_b = self.hi[self.basis]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_lower = np.where(y > PIVOT_TOL, (self.xB - lo_b) / y, np.inf)
            t_upper = np.where(
                (y < -PIVOT_TOL) & np.isfinite(hi_b), (hi_b - self.xB) / -y, np.inf
            )
        t_rows = np.minimum(t_lower, t_upper)
        t_best = float(t_rows.min()) if self.m else np.inf
        t_best = max(t_best, 0.0)
        span = self.hi[j] - self.lo[j]

        if not np.isfinite(t_best) and not np.isfinite(span):
            return "unbounded"

        self.iterations += 1
        if min(t_best, span) <= PIVOT_TOL:
            self.degenerate_run += 1
        else:
            self.degenerate_run = 0

        if span <= t_best:
            # entering variable traverses to its other bound; basis unchanged
            self.xB -= span * y
            self.at_upper[j] = not self.at_upper[j]
            return "progress"

        near = np.nonzero(t_rows <= t_best + PIVOT_TOL)[0]
        leave_row = int(near[np.argmin(self.basis[near])])
        leave_to_upper = bool(t_upper[leave_row] <= t_lower[leave_row])

        self.xB -= t_best * y
        leaving = int(self.basis[leave_row])
        self.at_upper[leaving] = leave_to_upper
        self.in_basis[leaving] = False
        entering_value = (self.lo[j] + t_best) if sign > 0 else (self.hi[j] - t_best)
        self.at_upper[j] = False
        self.in_basis[j] = True
        self.basis[leave_row] = j
        self.xB[leave_row] = entering_value
        self._pivot(leave_row, j)
        return "progress"

    def primal(self, c: np.ndarray, allowed: np.ndarray, max_iter: int) -> str:
        while self.iterations < max_iter:
            state = self.primal_step(c, allowed, self.degenerate_run >= STALL_LIMIT)
            if state != "progress":
                return state
        return "stalled"

    # -- dual -----------------------------------------------------------

    def dual(self, c: np.ndarray, allowed: np.ndarray, max_iter: int) -> str:
        """Restore primal feasibility while keeping reduced-cost optimality.

        Assumes the current basis is dual feasible (it is at any primal
        optimum, and bound changes never disturb reduced costs).
        """
        d = self.reduced_costs(c)
        since_refresh = 0
        while self.iterations < max_iter:
            lo_b = self.lo[self.basis]
            hi_b = self.hi[self.basis]
            below = lo_b - self.xB
            above = self.xB - hi_b
            viol = np.maximum(below, above)
            worst = float(viol.max()) if self.m else 0.0
            if worst <= FEAS_TOL:
                return "optimal"
            rows = np.nonzero(viol >= worst - PIVOT_TOL)[0]
            r = int(rows[np.argmin(self.basis[rows])])
            exits_low = below[r] >= above[r]
            target = lo_b[r] if exits_low else hi_b[r]

            if since_refresh >= 100:  # guard against incremental drift
                d = self.reduced_costs(c)
                since_refresh = 0
            row = self.T[r]
            free = allowed & ~self.in_basis
            # signs that let the entering variable push x_B[r] toward its bound
            if exits_low:
                cand = free & (
                    (~self.at_upper & (row < -PIVOT_TOL))
                    | (self.at_upper & (row > PIVOT_TOL))
                )
            else:
                cand = free & (
                    (~self.at_upper & (row > PIVOT_TOL))
                    | (self.at_upper & (row < -PIVOT_TOL))
                )
            idx = np.nonzero(cand)[0]
            if not idx.size:
                return "infeasible"
            ratios = np.abs(d[idx]) / np.abs(row[idx])
            best = float(ratios.min())
            pick = idx[ratios <= best + PIVOT_TOL]
            j = int(pick.min())

            self.iterations += 1
            t = (self.xB[r] - target) / row[j]
            v_j = self.hi[j] if self.at_upper[j] else self.lo[j]
            entering_value = v_j + t

            # if the entering variable would overshoot its own bound, flip it
            # to the opposite bound and repeat with the violation reduced
            if entering_value > self.hi[j] + PIVOT_TOL:
                span = self.hi[j] - self.lo[j]
                self.xB -= (span if not self.at_upper[j] else -span) * self.T[:, j]
                self.at_upper[j] = not self.at_upper[j]
                continue
            if entering_value < self.lo[j] - PIVOT_TOL:
                span = self.hi[j] - self.lo[j]
                self.xB -= (span if not self.at_upper[j] else -span) * self.T[:, j]
                self.at_upper[j] = not self.at_upper[j]
                continue

            delta = entering_value - v_j
            self.xB -= delta * self.T[:, j]
            leaving = int(self.basis[r])
            self.at_upper[leaving] = not exits_low
            self.in_basis[leaving] = False
            self.at_upper[j] = False
            self.in_basis[j] = True
            self.basis[r] = j
            self.xB[r] = entering_value
            self._pivot(r, j)
            # incremental reduced-cost update for the new basis
            d = d - d[j] * self.T[r]
            d[j] = 0.0
            since_refresh += 1
        return "stalled"


def _standardize(lp: LinearProgram):
    """Turn rows into equalities with slacks, seeding slack basics greedily.

    Returns the core state plus bookkeeping: structural count, slack count,
    artificial count and the phase-1 cost vector (None when no artificials
    were needed).
    """
    n = lp.n
    m = len(lp.rows)
    n_slack = sum(1 for _, sense, _ in lp.rows if sense != EQ)

    resid = np.zeros(m)
    slack_col = np.full(m, -1, dtype=int)
    slack_sign = np.zeros(m)
    s_idx = n
    for i, (row, sense, rhs) in enumerate(lp.rows):
        resid[i] = rhs - float(row @ lp.lower)
        if sense == LE:
            slack_col[i], slack_sign[i] = s_idx, 1.0
            s_idx += 1
        elif sense == GE:
            slack_col[i], slack_sign[i] = s_idx, -1.0
            s_idx += 1

    # a slack can seed the basis when it alone absorbs the residual without
    # leaving its own bounds; otherwise the row gets an artificial
    art_rows = [
        i
        for i in range(m)
        if not (slack_col[i] >= 0 and slack_sign[i] * resid[i] >= 0.0)
    ]
    n_art = len(art_rows)
    total = n + n_slack + n_art

    A = np.zeros((m, total))
    b = np.zeros(m)
    lo = np.concatenate([lp.lower, np.zeros(n_slack + n_art)])
    hi = np.concatenate([lp.upper, np.full(n_slack + n_art, np.inf)])
    basis = np.zeros(m, dtype=int)
    art_pos = {i: n + n_slack + k for k, i in enumerate(art_rows)}
    for i, (row, sense, rhs) in enumerate(lp.rows):
        A[i, :n] = row
        b[i] = rhs
        if slack_col[i] >= 0:
            A[i, slack_col[i]] = slack_sign[i]
        if i in art_pos:
            A[i, art_pos[i]] = 1.0 if resid[i] >= 0 else -1.0
            basis[i] = art_pos[i]
        else:
            basis[i] = slack_col[i]
        # normalize so the seeded basic coefficient is +1 (identity basis)
        if A[i, basis[i]] < 0:
            A[i] = -A[i]
            b[i] = -b[i]

    c1 = None
    if n_art:
        c1 = np.zeros(total)
        c1[n + n_slack :] = 1.0
    return A, b, lo, hi, basis, n, n_slack, n_art, c1


def _solve_core(lp: LinearProgram, max_iter: int | None):
    """Run both phases; returns (status, core, c2, n, n_slack, n_art)."""
    A, b, lo, hi, basis, n, n_slack, n_art, c1 = _standardize(lp)
    m = len(lp.rows)
    core = _Core(A, b, lo, hi, basis)
    limit = max_iter if max_iter is not None else 2000 + 200 * (m + n)
    total = core.total

    allowed = np.ones(total, dtype=bool)
    if n_art:
        state = core.primal(c1, allowed, limit)
        if state == "stalled":
            return "numeric_failure", core, None, n, n_slack, n_art
        if core.objective(c1) > FEAS_TOL:
            return "infeasible", core, None, n, n_slack, n_art
        # artificials stay pinned at zero and barred from re-entering
        core.lo[n + n_slack :] = 0.0
        core.hi[n + n_slack :] = 0.0
        allowed[n + n_slack :] = False

    c2 = np.zeros(total)
    c2[:n] = lp.objective
    state = core.primal(c2, allowed, limit)
    if state == "stalled":
        return "numeric_failure", core, c2, n, n_slack, n_art
    if state == "unbounded":
        return "unbounded", core, c2, n, n_slack, n_art
    return "optimal", core, c2, n, n_slack, n_art


def _outcome_from_core(lp: LinearProgram, core: _Core, c2: np.ndarray, n: int) -> LpOutcome:
    x = core.solution()[:n]
    if not _feasible(lp, x):
        # never report a wrong answer silently
        return LpOutcome("numeric_failure", None, None, core.iterations)
    z = float(lp.objective @ x)
    d = core.reduced_costs(c2)[:n]
    d[core.in_basis[:n]] = 0.0
    return LpOutcome("optimal", x, z, core.iterations, reduced_costs=d)


def solve_lp(lp: LinearProgram, max_iter: int | None = None) -> LpOutcome:
    """Solve the continuous program exactly (within stated tolerances)."""
    if np.any(~np.isfinite(lp.lower)):
        raise ValueError("variables need finite lower bounds")
    if np.any(lp.lower > lp.upper):
        return LpOutcome("infeasible", None, None, 0)
    status, core, c2, n, _, _ = _solve_core(lp, max_iter)
    if status != "optimal":
        return LpOutcome(status, None, None, core.iterations)
    return _outcome_from_core(lp, core, c2, n)


class WarmLp:
    """Re-solvable program: dual-simplex restarts from the root optimum.

    Branch-and-bound changes nothing but variable bounds, which leaves the
    root basis dual feasible, so each node needs only a short feasibility
    repair instead of a full two-phase solve.  Falls back to a cold primal
    solve whenever the warm path reports trouble.
    """

    def __init__(self, lp: LinearProgram):
        self.lp = lp
        self.n = lp.n
        status, core, c2, n, n_slack, n_art = _solve_core(lp, None)
        self.root_status = status
        self._core = core if status == "optimal" else None
        self._c2 = c2
        self._allowed = np.ones(core.total, dtype=bool)
        if n_art:
            self._allowed[n + n_slack :] = False
        self.root_outcome = (
            _outcome_from_core(lp, core, c2, n)
            if status == "optimal"
            else LpOutcome(status, None, None, core.iterations)
        )

    def resolve(self, lower: np.ndarray, upper: np.ndarray) -> LpOutcome:
        """Optimum under new structural bounds (all else unchanged)."""
        if np.any(lower > upper):
            return LpOutcome("infeasible", None, None, 0)
        if self._core is None:
            return self._cold(lower, upper)
        core = self._core.clone()
        core.lo[: self.n] = lower
        core.hi[: self.n] = upper
        core.refresh_basic_values()
        state = core.dual(self._c2, self._allowed, 2000 + 20 * core.total)
        if state == "infeasible":
            return LpOutcome("infeasible", None, None, core.iterations)
        if state != "optimal":
            return self._cold(lower, upper)
        # a dual repair cannot turn an optimum un-optimal, but guard anyway
        state = core.primal(self._c2, self._allowed, 1000)
        if state != "optimal":
            return self._cold(lower, upper)
        saved_lower, saved_upper = self.lp.lower, self.lp.upper
        self.lp.lower, self.lp.upper = lower, upper
        try:
            out = _outcome_from_core(self.lp, core, self._c2, self.n)
        finally:
            self.lp.lower, self.lp.upper = saved_lower, saved_upper
        if out.status != "optimal":
            return self._cold(lower, upper)
        return out

    def _cold(self, lower: np.ndarray, upper: np.ndarray) -> LpOutcome:
        saved_lower, saved_upper = self.lp.lower, self.lp.upper
        self.lp.lower, self.lp.upper = lower.copy(), upper.copy()
        try:
            return solve_lp(self.lp)
        finally:
            self.lp.lower, self.lp.upper = saved_lower, saved_upper
