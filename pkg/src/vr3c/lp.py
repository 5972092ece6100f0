"""Dense bounded-variable simplex for small linear programs.

Solves ::

    minimize    c @ x
    subject to  A_ub @ x <= b_ub
                A_eq @ x == b_eq
                0 <= x <= upper

Upper bounds are handled natively (nonbasic variables sit at either bound),
so the CCCP subproblems keep their natural size of 4N columns and N+2 rows.
Pricing is Dantzig's largest-reduced-cost rule; after a run of degenerate
pivots it switches to Bland's rule until progress resumes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameter, NumericalBreakdown

DEFAULT_TOL = 1e-9
_PIVOT_TOL = 1e-11
_DEGENERATE_RUN = 30


class LpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass(frozen=True, eq=False)
class LinearProgram:
    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        n = c.size
        A_ub, b_ub = _rows(self.A_ub, self.b_ub, n, "ub")
        A_eq, b_eq = _rows(self.A_eq, self.b_eq, n, "eq")
        upper = np.ones(n) if self.upper is None else np.asarray(self.upper, dtype=float).ravel()
        if upper.shape != (n,):
            raise InvalidParameter("upper bounds do not match the number of variables")
        if np.any(upper < 0) or np.any(np.isnan(upper)):
            raise InvalidParameter("upper bounds must be >= 0")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(b_ub)) and np.all(np.isfinite(b_eq))):
            raise InvalidParameter("costs and right-hand sides must be finite")
        for name, value in (("c", c), ("A_ub", A_ub), ("b_ub", b_ub), ("A_eq", A_eq), ("b_eq", b_eq), ("upper", upper)):
            object.__setattr__(self, name, value)

    @property
    def n_vars(self) -> int:
        return self.c.size


def _rows(A, b, n, label):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[1] != n or A.shape[0] != b.size:
        raise InvalidParameter(f"A_{label} has shape {A.shape}, expected ({b.size}, {n})")
    return A, b


@dataclass(eq=False)
class LpResult:
    status: LpStatus
    x: np.ndarray | None = None
    objective: float = math.nan
    # dual multipliers (y_ub <= 0 for a minimization with <= rows)
    y_ub: np.ndarray | None = None
    y_eq: np.ndarray | None = None
    dual_objective: float = math.nan
    iterations: int = 0
    info: dict = field(default_factory=dict)

    @property
    def duality_gap(self) -> float:
        return self.objective - self.dual_objective

    @property
    def relative_gap(self) -> float:
        return abs(self.duality_gap) / max(1.0, abs(self.objective))


class _Tableau:
    """Working state: B^-1 A, basic values, bound status of nonbasic columns."""

    def __init__(self, A, b, upper, basis, at_upper):
        self.A = A
        self.b = b
        self.upper = upper
        self.m, self.n = A.shape
        self.basis = np.array(basis, dtype=np.int64)
        self.at_upper = at_upper
        B = A[:, self.basis]
        self.T = np.linalg.solve(B, A)
        self.beta = np.linalg.solve(B, b - A @ self._nonbasic_values())
        self.iterations = 0

    def _nonbasic_values(self):
        x = np.where(self.at_upper, self.upper, 0.0)
        x[self.basis] = 0.0
        return x

    def values(self):
        x = np.where(self.at_upper, self.upper, 0.0)
        x[self.basis] = self.beta
        return x

    def run(self, cost, eligible, tol, max_iter):
        """Minimize ``cost @ x`` from the current basic feasible solution."""
        m = self.m
        basic = np.zeros(self.n, dtype=bool)
        basic[self.basis] = True
        d = cost - cost[self.basis] @ self.T
        scale_d = tol * max(1.0, float(np.max(np.abs(cost), initial=0.0)))
        degenerate_run = 0
        bland = False
        while True:
            movable = eligible & ~basic & (self.upper > 0)
            improving = movable & np.where(self.at_upper, d > scale_d, d < -scale_d)
            candidates = np.flatnonzero(improving)
            if candidates.size == 0:
                return "optimal"
            if self.iterations >= max_iter:
                raise NumericalBreakdown(f"simplex exceeded {max_iter} iterations")
            if bland:
                q = int(candidates[0])
            else:
                q = int(candidates[np.argmax(np.abs(d[candidates]))])
            direction = -1.0 if self.at_upper[q] else 1.0
            col = self.T[:, q] * direction

            # step theta moves x_q by direction*theta, x_B by -col*theta
            ub_B = self.upper[self.basis]
            theta = self.upper[q]
            leave = -1
            to_upper = False
            dec = col > _PIVOT_TOL
            inc = (col < -_PIVOT_TOL) & np.isfinite(ub_B)
            ratios = np.full(m, np.inf)
            ratios[dec] = np.maximum(self.beta[dec], 0.0) / col[dec]
            ratios[inc] = np.maximum(ub_B[inc] - self.beta[inc], 0.0) / -col[inc]
            rmin = float(np.min(ratios)) if m else np.inf
            if rmin < theta:
                ties = np.flatnonzero(ratios <= rmin + 1e-12 * max(1.0, rmin))
                if bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(col[ties]))])
                theta = float(ratios[r])
                leave = r
                to_upper = bool(inc[r])
            if math.isinf(theta):
                return "unbounded"

            self.iterations += 1
            if theta <= 1e-12:
                degenerate_run += 1
                if degenerate_run >= _DEGENERATE_RUN:
                    bland = True
            else:
                degenerate_run = 0
                bland = False

            self.beta -= theta * col
            if leave < 0:
                self.at_upper[q] = not self.at_upper[q]
                continue

            entering_value = self.upper[q] - theta if self.at_upper[q] else theta
            out = int(self.basis[leave])
            pivot = self.T[leave, q]
            row = self.T[leave] / pivot
            self.T -= np.outer(self.T[:, q], row)
            self.T[leave] = row
            d -= d[q] * row
            self.beta[leave] = entering_value
            self.basis[leave] = q
            basic[q] = True
            basic[out] = False
            self.at_upper[out] = to_upper
            self.at_upper[q] = False

    def refresh(self):
        """Recompute basic values from scratch; ordering of the basis is canonical."""
        order = np.argsort(self.basis)
        self.basis = self.basis[order]
        self.T = self.T[order]
        B = self.A[:, self.basis]
        self.beta = np.linalg.solve(B, self.b - self.A @ self._nonbasic_values())


@dataclass(frozen=True, eq=False)
class WarmStart:
    """A starting basis over the structural and slack columns.

    ``basis`` lists one column per constraint row (structural columns first,
    then one slack per ``<=`` row); ``at_upper`` flags nonbasic structural
    columns that sit at their upper bound.
    """

    basis: np.ndarray
    at_upper: np.ndarray


def _scaled(lp: LinearProgram):
    A_struct = np.vstack([lp.A_ub, lp.A_eq])
    b = np.concatenate([lp.b_ub, lp.b_eq])
    m = b.size
    # row scaling keeps constraint coefficients O(1) whatever the units
    row_scale = np.max(np.abs(A_struct), axis=1) if m else np.zeros(0)
    row_scale = np.where(row_scale > 0, row_scale, np.maximum(np.abs(b), 1.0))
    cost_scale = float(np.max(np.abs(lp.c))) if lp.n_vars else 0.0
    cost_scale = cost_scale if cost_scale > 0 else 1.0
    return A_struct / row_scale[:, None], b / row_scale, row_scale, lp.c / cost_scale, cost_scale


def _warm_tableau(A, b, upper, start: WarmStart, tol):
    m, ncol = A.shape
    basis = np.asarray(start.basis, dtype=np.int64)
    at_upper = np.zeros(ncol, dtype=bool)
    flags = np.asarray(start.at_upper, dtype=bool)
    if basis.shape != (m,) or flags.size > ncol or np.unique(basis).size != m:
        return None
    if m and (basis.min() < 0 or basis.max() >= ncol):
        return None
    at_upper[:flags.size] = flags
    at_upper &= np.isfinite(upper)
    at_upper[basis] = False
    B = A[:, basis]
    if m and np.linalg.cond(B) > 1e12:
        return None
    tab = _Tableau(A, b, upper, basis, at_upper)
    ub_B = upper[basis]
    feas_tol = tol * max(1.0, float(np.max(np.abs(b), initial=0.0)))
    if np.any(tab.beta < -feas_tol) or np.any(tab.beta > ub_B + feas_tol):
        return None
    np.clip(tab.beta, 0.0, ub_B, out=tab.beta)
    return tab


def solve_lp(lp: LinearProgram, tol: float = DEFAULT_TOL, max_iter: int | None = None,
             warm_start: WarmStart | None = None) -> LpResult:
    """Solve ``lp`` to a vertex optimum with a dual certificate.

    A ``warm_start`` basis that is primal feasible skips phase one; an
    unusable one is ignored and the solve starts from scratch.
    """
    n = lp.n_vars
    p = lp.b_ub.size
    q = lp.b_eq.size
    m = p + q
    if max_iter is None:
        max_iter = 50 * (n + m)
    A_struct, b, row_scale, c, cost_scale = _scaled(lp)

    tab = None
    n_art = 0
    if warm_start is not None:
        A = np.zeros((m, n + p))
        A[:, :n] = A_struct
        A[np.arange(p), n + np.arange(p)] = 1.0
        upper = np.concatenate([lp.upper, np.full(p, np.inf)])
        tab = _warm_tableau(A, b, upper, warm_start, tol)
        all_cols = np.ones(n + p, dtype=bool)

    if tab is None:
        # columns: structural | slacks of <= rows | artificials
        n_art = m
        A = np.zeros((m, n + p + m))
        A[:, :n] = A_struct
        A[np.arange(p), n + np.arange(p)] = 1.0
        upper = np.concatenate([lp.upper, np.full(p, np.inf), np.zeros(m)])
        at_upper = np.zeros(n + p + m, dtype=bool)

        basis = []
        need_art = np.zeros(m, dtype=bool)
        for i in range(m):
            if i < p and b[i] >= 0:
                basis.append(n + i)
            else:
                need_art[i] = True
                sign = 1.0 if b[i] >= 0 else -1.0
                A[i, n + p + i] = sign
                upper[n + p + i] = np.inf
                basis.append(n + p + i)
        art_cols = n + p + np.flatnonzero(need_art)

        tab = _Tableau(A, b, upper, basis, at_upper)
        all_cols = np.ones(A.shape[1], dtype=bool)
        all_cols[n + p + np.flatnonzero(~need_art)] = False

        if art_cols.size:
            phase1 = np.zeros(A.shape[1])
            phase1[art_cols] = 1.0
            tab.run(phase1, all_cols, tol, max_iter)
            infeas = float(np.sum(tab.values()[art_cols]))
            if infeas > tol * max(1.0, float(np.max(np.abs(b), initial=0.0))):
                return LpResult(LpStatus.INFEASIBLE, iterations=tab.iterations, info={"phase1": infeas})
            # artificials are pinned to zero; any still basic sit at zero and get pivoted out if they block
            tab.upper = tab.upper.copy()
            tab.upper[art_cols] = 0.0
            all_cols[art_cols] = False

    full_cost = np.concatenate([c, np.zeros(p + n_art)])
    outcome = tab.run(full_cost, all_cols, tol, max_iter)
    if outcome == "unbounded":
        return LpResult(LpStatus.UNBOUNDED, iterations=tab.iterations)

    tab.refresh()
    x_full = tab.values()
    x = x_full[:n].copy()
    ub = lp.upper
    x[np.abs(x) <= tol] = 0.0
    near_ub = np.abs(x - ub) <= tol
    x[near_ub] = ub[near_ub]

    # dual certificate from the final basis (scaled space first)
    B = tab.A[:, tab.basis]
    y_scaled = np.linalg.solve(B.T, full_cost[tab.basis])
    y = y_scaled * cost_scale / row_scale if m else np.zeros(0)
    y_ub = y[:p]
    y_eq = y[p:]
    reduced = lp.c - lp.A_ub.T @ y_ub - lp.A_eq.T @ y_eq
    finite_ub = np.isfinite(ub)
    if np.any(~finite_ub & (reduced < -tol * cost_scale)):
        dual_obj = -math.inf
    else:
        dual_obj = float(lp.b_ub @ y_ub + lp.b_eq @ y_eq
                         - np.sum(np.where(finite_ub, ub, 0.0) * np.maximum(-reduced, 0.0)))
    objective = float(lp.c @ x)
    return LpResult(LpStatus.OPTIMAL, x=x, objective=objective, y_ub=y_ub, y_eq=y_eq,
                    dual_objective=dual_obj, iterations=tab.iterations,
                    info={"basis": tab.basis.copy(), "warm": n_art == 0 and warm_start is not None,
                          "next_start": _next_start(tab, n, p)})


solve_lp.supports_warm_start = True


def _next_start(tab: _Tableau, n: int, p: int) -> WarmStart | None:
    if np.any(tab.basis >= n + p):
        return None
    return WarmStart(tab.basis.copy(), tab.at_upper[:n + p].copy())


def check_certificate(lp: LinearProgram, res: LpResult, tol: float = DEFAULT_TOL) -> dict:
    """Primal feasibility, dual feasibility and gap, each relative to its natural scale."""
    x = res.x
    scale_ub = np.maximum(1.0, np.abs(lp.A_ub) @ np.ones(lp.n_vars) + np.abs(lp.b_ub)) if lp.b_ub.size else np.zeros(0)
    scale_eq = np.maximum(1.0, np.abs(lp.A_eq) @ np.ones(lp.n_vars) + np.abs(lp.b_eq)) if lp.b_eq.size else np.zeros(0)
    ub_viol = np.max((lp.A_ub @ x - lp.b_ub) / scale_ub, initial=0.0)
    eq_viol = np.max(np.abs(lp.A_eq @ x - lp.b_eq) / scale_eq, initial=0.0)
    box_viol = max(float(np.max(-x, initial=0.0)), float(np.max(x - lp.upper, initial=0.0)))
    # y_ub must be <= 0; measured against the cost scale
    cscale = max(1.0, float(np.max(np.abs(lp.c), initial=0.0)))
    yscale = np.max(np.abs(lp.A_ub), axis=1) if lp.b_ub.size else np.zeros(0)
    dual_viol = float(np.max(res.y_ub * yscale, initial=0.0)) / cscale
    return {
        "primal": max(float(ub_viol), float(eq_viol), box_viol),
        "dual": dual_viol,
        "gap": res.relative_gap,
        "ok": max(float(ub_viol), float(eq_viol), box_viol) <= tol and dual_viol <= tol and res.relative_gap <= tol,
    }
