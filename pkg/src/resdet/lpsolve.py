"""Bounded-variable LP solver, small integer repair, randomized rounding.

The linear programs here all look the same: maximize c'x subject to sparse
rows Ax <= b with 0 <= x <= 1. A revised simplex specialized to these bounds
keeps the package dependency-free and bit-deterministic: Dantzig pricing with
a switch to Bland's rule after too many degenerate pivots, ties broken by
lowest index everywhere. A phase-1 with artificial variables handles the
negative right-hand sides that appear inside branch-and-bound nodes.

This module knows nothing about groups, PIPs or error rates; rows carry an
opaque tag ("error" / "disjoint") that the rounding heuristic uses to tell
the budget row apart from the overlap rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import InternalError, ResdetError, ValidationError

__all__ = [
    "LpRow",
    "LpProblem",
    "LpSolution",
    "IntegerSolution",
    "solve_relaxed",
    "solve_residual_integer",
    "randomized_rounding",
    "ResidualTooLarge",
    "MAX_ENUM_VARS",
    "MAX_BRANCH_VARS",
]

FEAS_TOL = 1e-9
PIVOT_TOL = 1e-10
COST_TOL = 1e-9

# Residual integer programs: exhaustive enumeration up to MAX_ENUM_VARS free
# variables, then an exact MILP solve up to MILP_CAP_VARS (own depth-first
# branch and bound with LP bounding up to MAX_BRANCH_VARS when the MILP
# backend is unavailable), randomized rounding beyond that.
MAX_ENUM_VARS = 20
MAX_BRANCH_VARS = 200
MILP_CAP_VARS = 20_000


class ResidualTooLarge(ResdetError):
    """Residual integer program too large; use randomized_rounding instead."""


@dataclass(frozen=True)
class LpRow:
    """One sparse '<=' constraint row."""

    idx: tuple[int, ...]
    coef: tuple[float, ...]
    rhs: float
    tag: str = "disjoint"

    def __post_init__(self):
        if len(self.idx) != len(self.coef):
            raise ValidationError("row idx/coef length mismatch")
        if not all(np.isfinite(self.coef)) or not np.isfinite(self.rhs):
            raise ValidationError("row coefficients must be finite")


@dataclass
class LpProblem:
    """maximize objective . x subject to rows, 0 <= x <= 1."""

    var_ids: list[str]
    objective: np.ndarray
    rows: list[LpRow] = field(default_factory=list)

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        if self.objective.shape != (len(self.var_ids),):
            raise ValidationError("objective length must match var_ids")
        if not np.all(np.isfinite(self.objective)):
            raise ValidationError("objective coefficients must be finite")
        n = len(self.var_ids)
        for row in self.rows:
            if any(j < 0 or j >= n for j in row.idx):
                raise ValidationError("row references an unknown variable")

    @property
    def n_vars(self) -> int:
        return len(self.var_ids)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def row_matrix(self) -> sp.csc_matrix:
        if not self.rows:
            return sp.csc_matrix((0, self.n_vars))
        data, ri, ci = [], [], []
        for i, row in enumerate(self.rows):
            for j, a in zip(row.idx, row.coef):
                ri.append(i)
                ci.append(j)
                data.append(a)
        return sp.csc_matrix((data, (ri, ci)), shape=(self.n_rows, self.n_vars))

    def rhs_vector(self) -> np.ndarray:
        return np.array([row.rhs for row in self.rows], dtype=float)

    def check_assignment(self, x: np.ndarray, slack: float = FEAS_TOL) -> bool:
        """True if every row holds at x within slack."""
        x = np.asarray(x, dtype=float)
        for row in self.rows:
            lhs = float(np.dot(row.coef, x[list(row.idx)]))
            if lhs > row.rhs + slack:
                return False
        return True

    def to_lp_text(self) -> str:
        """CPLEX-LP-format dump for cross-checking with external solvers."""
        def term(coef, j, lead):
            sign = "-" if coef < 0 else ("" if lead else "+")
            return f"{sign} {abs(coef):.17g} x{j}"

        lines = ["Maximize", " obj:"]
        parts = [term(c, j, j == 0) for j, c in enumerate(self.objective)]
        lines[1] += " " + " ".join(parts) if parts else " 0"
        lines.append("Subject To")
        for i, row in enumerate(self.rows):
            body = " ".join(term(c, j, k == 0) for k, (j, c) in enumerate(zip(row.idx, row.coef)))
            lines.append(f" r{i}: {body} <= {row.rhs:.17g}")
        lines.append("Bounds")
        for j in range(self.n_vars):
            lines.append(f" 0 <= x{j} <= 1")
        lines.append("End")
        return "\n".join(lines) + "\n"


@dataclass
class LpSolution:
    values: np.ndarray
    objective: float
    status: str
    n_pivots: int = 0


@dataclass
class IntegerSolution:
    values: np.ndarray
    objective: float
    feasible: bool
    method: str = "enumeration"


# ---------------------------------------------------------------------------
# Bounded-variable revised simplex
# ---------------------------------------------------------------------------

_AT_LOWER = 0
_AT_UPPER = 1
_BASIC = 2


class _Tableau:
    """Mutable simplex state over the extended system [A | I] x = b."""

    def __init__(self, A: sp.csc_matrix, b: np.ndarray, upper: np.ndarray):
        m, n = A.shape
        self.m, self.n = m, n
        self.full = sp.hstack([A, sp.identity(m, format="csc")], format="csc")
        self.b = b.astype(float)
        self.upper = np.concatenate([upper, np.full(m, np.inf)])
        self.allowed = np.ones(n + m, dtype=bool)
        self.status = np.full(n + m, _AT_LOWER, dtype=np.int8)
        self.basis = np.arange(n, n + m)
        self.status[self.basis] = _BASIC
        self.B_inv = np.eye(m)
        self.x_B = self.b.copy()
        self.n_pivots = 0
        self._since_refactor = 0

    def column(self, j: int) -> np.ndarray:
        col = np.zeros(self.m)
        start, end = self.full.indptr[j], self.full.indptr[j + 1]
        col[self.full.indices[start:end]] = self.full.data[start:end]
        return col

    def nonbasic_upper_sum(self) -> np.ndarray:
        out = np.zeros(self.m)
        for j in np.flatnonzero(self.status == _AT_UPPER):
            out += self.column(j) * self.upper[j]
        return out

    def refactor(self):
        cols = [self.column(j) for j in self.basis]
        B = np.column_stack(cols) if cols else np.zeros((self.m, 0))
        try:
            self.B_inv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise InternalError("singular basis during refactorization") from exc
        self.x_B = self.B_inv @ (self.b - self.nonbasic_upper_sum())
        self._since_refactor = 0

    def values(self) -> np.ndarray:
        x = np.zeros(self.n + self.m)
        x[self.status == _AT_UPPER] = self.upper[self.status == _AT_UPPER]
        x[self.basis] = self.x_B
        return x

    def optimize(self, cost: np.ndarray, bland_after: Optional[int] = None) -> None:
        """Run primal simplex to optimality for 'maximize cost . x'."""
        m, n = self.m, self.n
        if bland_after is None:
            bland_after = 10 * (m + n)
        degenerate = 0
        bland = False
        max_pivots = 2000 + 200 * (m + n)
        for _ in range(max_pivots):
            y = cost[self.basis] @ self.B_inv
            reduced = cost - self.full.T @ y
            at_lower = (self.status == _AT_LOWER) & self.allowed
            at_upper = (self.status == _AT_UPPER) & self.allowed
            eligible_low = at_lower & (reduced > COST_TOL)
            eligible_up = at_upper & (reduced < -COST_TOL)
            eligible = eligible_low | eligible_up
            if not np.any(eligible):
                return
            if bland:
                j = int(np.flatnonzero(eligible)[0])
            else:
                scores = np.where(eligible, np.abs(reduced), -np.inf)
                j = int(np.argmax(scores))
            direction = 1.0 if self.status[j] == _AT_LOWER else -1.0
            w = self.B_inv @ self.column(j)

            # Ratio test: how far can the entering variable move?
            t_best = self.upper[j]  # bound flip distance (may be inf)
            leave_pos = -1
            dw = direction * w
            for i in range(m):
                if dw[i] > PIVOT_TOL:
                    t_i = self.x_B[i] / dw[i]
                elif dw[i] < -PIVOT_TOL and np.isfinite(self.upper[self.basis[i]]):
                    t_i = (self.upper[self.basis[i]] - self.x_B[i]) / (-dw[i])
                else:
                    continue
                t_i = max(t_i, 0.0)
                if t_i < t_best - PIVOT_TOL:
                    t_best, leave_pos = t_i, i
                elif leave_pos >= 0 and t_i <= t_best + PIVOT_TOL:
                    # Tie: prefer the larger pivot magnitude, then lowest id.
                    better = (
                        (abs(dw[i]) > abs(dw[leave_pos]) + PIVOT_TOL)
                        if not bland
                        else (self.basis[i] < self.basis[leave_pos])
                    )
                    if better:
                        t_best, leave_pos = t_i, i
            if not np.isfinite(t_best):
                raise InternalError("LP unbounded despite variable bounds")

            if t_best <= PIVOT_TOL:
                degenerate += 1
                if degenerate > bland_after:
                    bland = True
            if leave_pos < 0:
                # Bound flip: entering variable runs to its other bound.
                self.x_B -= dw * t_best
                self.status[j] = _AT_UPPER if direction > 0 else _AT_LOWER
            else:
                leaving = self.basis[leave_pos]
                self.x_B -= dw * t_best
                enter_val = t_best if direction > 0 else self.upper[j] - t_best
                self.x_B[leave_pos] = enter_val
                hit_upper = dw[leave_pos] < 0
                self.status[leaving] = _AT_UPPER if hit_upper else _AT_LOWER
                self.status[j] = _BASIC
                self.basis[leave_pos] = j
                # Product-form update of B_inv.
                pivot = w[leave_pos]
                if abs(pivot) < PIVOT_TOL:  # pragma: no cover
                    raise InternalError("numerically zero pivot")
                self.B_inv[leave_pos, :] /= pivot
                others = np.arange(m) != leave_pos
                self.B_inv[others, :] -= np.outer(w[others], self.B_inv[leave_pos, :])
                self._since_refactor += 1
                if self._since_refactor >= 150:
                    self.refactor()
            self.n_pivots += 1
        raise InternalError("simplex pivot limit exceeded")


def _bounded_simplex(
    c: np.ndarray, A: sp.csc_matrix, b: np.ndarray, upper: np.ndarray
) -> tuple[Optional[np.ndarray], float, int]:
    """maximize c.x s.t. Ax <= b, 0 <= x <= upper. Returns (x, obj, pivots).

    x is None when infeasible. Negative entries of b trigger a phase-1 with
    artificial columns.
    """
    m, n = A.shape
    if m == 0:
        x = np.where(c > COST_TOL, upper, 0.0)
        return x, float(c @ x), 0
    neg = np.flatnonzero(b < 0)
    if neg.size:
        # Artificial column -e_i for each negative row, seeded basic at -b_i.
        art = sp.csc_matrix(
            (-np.ones(neg.size), (neg, np.arange(neg.size))), shape=(m, neg.size)
        )
        A_ext = sp.hstack([A, art], format="csc")
        upper_ext = np.concatenate([upper, np.full(neg.size, np.inf)])
        tab = _Tableau(A_ext, b, upper_ext)
        for k, i in enumerate(neg):
            pos = int(np.flatnonzero(tab.basis == (n + neg.size) + i)[0])
            tab.basis[pos] = n + k
            tab.status[(n + neg.size) + i] = _AT_LOWER
            tab.status[n + k] = _BASIC
        tab.refactor()
        phase1_cost = np.zeros(A_ext.shape[0] + A_ext.shape[1])
        phase1_cost = np.zeros(A_ext.shape[1] + m)
        phase1_cost[n : n + neg.size] = -1.0
        tab.optimize(phase1_cost)
        art_total = float(-(phase1_cost @ tab.values()))
        if art_total > 1e-7:
            return None, -np.inf, tab.n_pivots
        # Freeze artificials at zero for phase 2.
        tab.allowed[n : n + neg.size] = False
        cost2 = np.zeros(A_ext.shape[1] + m)
        cost2[:n] = c
        tab.optimize(cost2)
        x = tab.values()[:n]
    else:
        tab = _Tableau(A, b, upper)
        cost = np.zeros(n + m)
        cost[:n] = c
        tab.optimize(cost)
        x = tab.values()[:n]
    x = np.clip(x, 0.0, upper)
    return x, float(c @ x), tab.n_pivots


def solve_relaxed(problem: LpProblem) -> LpSolution:
    """Optimal basic solution of the [0,1]-relaxed problem.

    The instances this package builds are always feasible at x = 0, so the
    right-hand sides must be nonnegative here; anything else is a caller bug.
    """
    b = problem.rhs_vector()
    if np.any(b < 0):
        raise InternalError("solve_relaxed expects nonnegative right-hand sides")
    if problem.n_vars == 0:
        return LpSolution(values=np.zeros(0), objective=0.0, status="optimal")
    x, obj, pivots = _bounded_simplex(
        problem.objective, problem.row_matrix(), b, np.ones(problem.n_vars)
    )
    if x is None:  # pragma: no cover
        raise InternalError("relaxed problem reported infeasible")
    return LpSolution(values=x, objective=obj, status="optimal", n_pivots=pivots)


# ---------------------------------------------------------------------------
# Residual integer program
# ---------------------------------------------------------------------------


def _residual_rows(
    problem: LpProblem, fixed: dict[int, float], free: list[int]
) -> tuple[np.ndarray, np.ndarray]:
    """Dense rows restricted to free variables, rhs adjusted for fixed ones."""
    k = len(free)
    pos = {j: t for t, j in enumerate(free)}
    M = np.zeros((problem.n_rows, k))
    rhs = problem.rhs_vector()
    for i, row in enumerate(problem.rows):
        for j, a in zip(row.idx, row.coef):
            if j in pos:
                M[i, pos[j]] = a
            else:
                rhs[i] -= a * fixed[j]
    return M, rhs


def solve_residual_integer(
    problem: LpProblem,
    fixed: dict[int, float],
    free_ids: Optional[Sequence[int]] = None,
    max_enum: int = MAX_ENUM_VARS,
    max_branch: int = MAX_BRANCH_VARS,
    backend: str = "auto",
) -> IntegerSolution:
    """Optimal 0/1 assignment over the free variables, holding ``fixed``.

    Small residuals are enumerated exhaustively. Larger ones go to HiGHS
    (scipy's MILP) under backend="auto"; backend="own" keeps everything
    in-package via LP-bounded depth-first branch and bound, which also serves
    as the fallback when HiGHS fails. Residuals beyond MILP_CAP_VARS (or
    ``max_branch`` for the own backend) raise ResidualTooLarge, telling the
    caller to fall back to randomized rounding.
    """
    free = sorted(set(range(problem.n_vars)) - set(fixed)) if free_ids is None else sorted(free_ids)
    for j, v in fixed.items():
        if v not in (0, 1, 0.0, 1.0):
            raise ValidationError(f"fixed value for variable {j} must be 0 or 1")
    if backend not in ("auto", "own"):
        raise ValidationError(f"unknown backend {backend!r}")
    x = np.zeros(problem.n_vars)
    for j, v in fixed.items():
        x[j] = v

    M, rhs = _residual_rows(problem, fixed, free)
    k = len(free)
    c_free = problem.objective[free]

    if k == 0:
        feasible = bool(np.all(rhs >= -FEAS_TOL))
        return IntegerSolution(
            values=x, objective=float(problem.objective @ x), feasible=feasible,
            method="fixed",
        )

    best_z, method = None, ""
    if k <= max_enum:
        best_z = _enumerate_binary(c_free, M, rhs, k)
        method = "enumeration"
    elif backend == "auto" and k <= MILP_CAP_VARS:
        try:
            best_z = _milp_binary(c_free, M, rhs)
            method = "milp"
        except Exception:
            best_z, method = None, ""
    if not method:
        if k > max_branch:
            raise ResidualTooLarge(f"{k} free variables exceeds the cap of {max_branch}")
        best_z = _branch_and_bound(c_free, M, rhs)
        method = "branch_and_bound"
    if best_z is None:
        return IntegerSolution(values=x, objective=-np.inf, feasible=False, method=method)
    x[free] = best_z
    return IntegerSolution(
        values=x, objective=float(problem.objective @ x), feasible=True, method=method
    )


def _milp_binary(c: np.ndarray, M: np.ndarray, rhs: np.ndarray):
    """Exact 0/1 maximization via scipy's HiGHS MILP."""
    from scipy.optimize import Bounds, LinearConstraint, milp

    k = len(c)
    if M.shape[0]:
        constraints = [LinearConstraint(sp.csr_matrix(M), -np.inf, rhs)]
    else:
        constraints = []
    res = milp(
        -c,
        constraints=constraints,
        bounds=Bounds(0, 1),
        integrality=np.ones(k),
    )
    if res.status == 2:  # infeasible
        return None
    if res.status != 0 or res.x is None:
        raise InternalError(f"MILP solver failed with status {res.status}")
    z = np.round(res.x)
    lhs_ok = not M.shape[0] or np.all(M @ z <= rhs + 1e-7)
    if not lhs_ok:
        raise InternalError("MILP solution failed the feasibility recheck")
    return z


def _enumerate_binary(c: np.ndarray, M: np.ndarray, rhs: np.ndarray, k: int):
    best_obj, best = -np.inf, None
    chunk = 1 << min(k, 16)
    bits = np.arange(k)
    for base in range(0, 1 << k, chunk):
        codes = np.arange(base, min(base + chunk, 1 << k), dtype=np.int64)
        Z = ((codes[:, None] >> bits[None, :]) & 1).astype(float)
        feas = np.all(Z @ M.T <= rhs[None, :] + FEAS_TOL, axis=1)
        if not np.any(feas):
            continue
        objs = np.where(feas, Z @ c, -np.inf)
        i = int(np.argmax(objs))
        if objs[i] > best_obj + 1e-15:
            best_obj, best = float(objs[i]), Z[i].copy()
    return best


def _branch_and_bound(c: np.ndarray, M: np.ndarray, rhs: np.ndarray):
    k = len(c)
    # Branch on large objective coefficients first; try x=1 before x=0.
    order = sorted(range(k), key=lambda j: (-c[j], j))
    best_obj = -np.inf
    best = None
    z = np.zeros(k)

    def bound(depth: int, slack: np.ndarray, fixed_obj: float):
        rest = order[depth:]
        if not rest:
            if np.any(slack < -FEAS_TOL):
                return None, None
            return fixed_obj, np.zeros(0)
        sub = sp.csc_matrix(M[:, rest])
        x, obj, _ = _bounded_simplex(c[rest], sub, slack, np.ones(len(rest)))
        if x is None:
            return None, None
        return fixed_obj + obj, x

    def dfs(depth: int, slack: np.ndarray, fixed_obj: float):
        nonlocal best_obj, best
        ub, frac = bound(depth, slack, fixed_obj)
        if ub is None or ub <= best_obj + 1e-12:
            return
        if depth == k:
            if fixed_obj > best_obj:
                best_obj = fixed_obj
                best = z.copy()
            return
        # If the node LP is already integral, it solves the subtree exactly.
        if frac is not None and np.all(np.minimum(frac, 1 - frac) < 1e-9):
            if ub > best_obj:
                z_sub = z.copy()
                z_sub[order[depth:]] = np.round(frac)
                best_obj, best = ub, z_sub
            return
        j = order[depth]
        z[j] = 1.0
        dfs(depth + 1, slack - M[:, j], fixed_obj + c[j])
        z[j] = 0.0
        dfs(depth + 1, slack, fixed_obj)

    dfs(0, rhs.copy(), 0.0)
    return best


# ---------------------------------------------------------------------------
# Randomized rounding
# ---------------------------------------------------------------------------


def randomized_rounding(
    problem: LpProblem,
    relaxed_values: np.ndarray,
    pips: np.ndarray,
    seed: int = 0,
    n_sample: int = 128,
) -> np.ndarray:
    """Feasible 0/1 assignment sampled around the relaxed optimum.

    For each disjointness row (a "location") the target selection probability
    is the relaxed mass on that row. Rows are processed by decreasing target;
    with that probability one of the still-available member variables is
    chosen proportionally to its relaxed value, and everything overlapping it
    becomes unavailable. Variables outside every disjointness row are
    selected independently with probability equal to their relaxed value.
    Afterwards the lowest-PIP selections are dropped until every constraint
    row holds, so every draw is feasible by construction; the best of
    ``n_sample`` draws by objective wins.
    """
    x_star = np.clip(np.asarray(relaxed_values, dtype=float), 0.0, 1.0)
    pips = np.asarray(pips, dtype=float)
    n = problem.n_vars
    if x_star.shape != (n,) or pips.shape != (n,):
        raise ValidationError("relaxed_values and pips must match the variable count")

    disjoint_rows = [r for r in problem.rows if r.tag != "error"]
    covered = set()
    for r in disjoint_rows:
        covered.update(r.idx)
    # Variables sharing a disjointness row may not be selected together.
    conflicts: dict[int, set[int]] = {j: {j} for j in range(n)}
    for r in disjoint_rows:
        for j in r.idx:
            conflicts[j].update(r.idx)

    # Each disjointness row (plus a pseudo-row per uncovered variable) plays
    # the role of one location; target = relaxed selection mass, clipped.
    locations: list[tuple[float, int, tuple[int, ...]]] = []
    for i, r in enumerate(disjoint_rows):
        s = min(1.0, float(sum(x_star[j] for j in r.idx)))
        locations.append((s, i, tuple(r.idx)))
    for extra, j in enumerate(sorted(set(range(n)) - covered)):
        locations.append((float(x_star[j]), len(disjoint_rows) + extra, (j,)))
    locations.sort(key=lambda t: (-t[0], t[1]))

    best_obj, best = -np.inf, None
    for i_draw in range(n_sample):
        rng = np.random.Generator(np.random.Philox(key=np.array([seed, i_draw], dtype=np.uint64)))
        alive = np.ones(n, dtype=bool)
        chosen: list[int] = []
        for s, _, members in locations:
            cands = [j for j in members if alive[j] and x_star[j] > 0]
            u = rng.random()
            if u <= s and cands:
                wts = np.array([x_star[j] for j in cands])
                pick = cands[int(rng.choice(len(cands), p=wts / wts.sum()))]
                chosen.append(pick)
                alive[list(conflicts[pick])] = False
            else:
                for j in members:
                    alive[j] = False
        z = np.zeros(n)
        z[chosen] = 1.0
        # Shed the weakest selections until the budget rows hold.
        for j in sorted(chosen, key=lambda j: (pips[j], j)):
            if problem.check_assignment(z):
                break
            z[j] = 0.0
        obj = float(problem.objective @ z)
        if obj > best_obj + 1e-15:
            best_obj, best = obj, z
    if best is None:  # n_sample == 0
        raise ValidationError("n_sample must be >= 1")
    return best
