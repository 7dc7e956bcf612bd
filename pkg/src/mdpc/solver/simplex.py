"""Dense two-phase bounded-variable primal simplex.

Rows ``lo <= A x <= hi`` get one slack each (``A x - r = 0`` with
``r`` in ``[lo, hi]``), so every column carries its own bounds and
nonbasic columns sit at a bound. Pricing is Dantzig's rule until a run of
degenerate pivots is seen, after which Bland's rule takes over for good and
guarantees termination.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import NumericError

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-10
CHECK_TOL = 1e-7
DEGENERATE_RUN = 50
REFACTOR_EVERY = 100


@dataclass
class LinearProgram:
    c: np.ndarray
    A: np.ndarray
    row_lo: np.ndarray
    row_hi: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    c0: float = 0.0

    @classmethod
    def from_problem(cls, problem, lb=None, ub=None) -> LinearProgram:
        if not problem.is_linear():
            raise ValueError("LP relaxation needs a linear objective")
        return cls(problem.c, problem.A, problem.row_lo, problem.row_hi,
                   problem.lb if lb is None else lb, problem.ub if ub is None else ub, problem.c0)


@dataclass
class LPSolution:
    x: np.ndarray | None
    objective: float
    status: str  # optimal | infeasible | unbounded
    iterations: int = 0


class _Tableau:
    def __init__(self, M: np.ndarray, lb: np.ndarray, ub: np.ndarray, x: np.ndarray,
                 basis: np.ndarray):
        self.M = M
        self.lb = lb
        self.ub = ub
        self.x = x
        self.basis = basis
        self.iterations = 0
        self.bland = False
        self.refactor()

    def refactor(self):
        B = self.M[:, self.basis]
        cond = np.linalg.cond(B)
        if not np.isfinite(cond) or cond > 1e13:
            raise NumericError(f"basis matrix is ill-conditioned (cond={cond:.3e})")
        self.tab = np.linalg.solve(B, self.M)
        nonbasic = np.ones(self.M.shape[1], dtype=bool)
        nonbasic[self.basis] = False
        self.x[self.basis] = np.linalg.solve(B, -self.M[:, nonbasic] @ self.x[nonbasic])
        self._since_refactor = 0

    def run(self, cost: np.ndarray, max_iter: int) -> str:
        degenerate = 0
        m, N = self.tab.shape
        fixed = self.ub - self.lb <= 0.0
        while True:
            if self.iterations >= max_iter:
                raise NumericError(f"simplex exceeded {max_iter} iterations")
            d = cost - cost[self.basis] @ self.tab
            is_basic = np.zeros(N, dtype=bool)
            is_basic[self.basis] = True
            at_lo = np.isfinite(self.lb) & (self.x <= self.lb + FEAS_TOL)
            at_hi = np.isfinite(self.ub) & (self.x >= self.ub - FEAS_TOL)
            free = ~at_lo & ~at_hi
            can_up = ~is_basic & ~fixed & (at_lo | free) & (d < -OPT_TOL)
            can_dn = ~is_basic & ~fixed & (at_hi | free) & (d > OPT_TOL)
            cand = np.flatnonzero(can_up | can_dn)
            if not len(cand):
                return "optimal"
            if self.bland:
                j = int(cand[0])
            else:
                j = int(cand[np.argmax(np.abs(d[cand]))])
            sigma = 1.0 if can_up[j] else -1.0
            col = self.tab[:, j]
            delta = -sigma * col  # change of each basic variable per unit step
            xb = self.x[self.basis]
            lbb = self.lb[self.basis]
            ubb = self.ub[self.basis]
            ratios = np.full(m, np.inf)
            dec = delta < -PIVOT_TOL
            inc = delta > PIVOT_TOL
            with np.errstate(invalid="ignore"):
                ratios[dec] = (xb[dec] - lbb[dec]) / -delta[dec]
                ratios[inc] = (ubb[inc] - xb[inc]) / delta[inc]
            ratios = np.where(np.isnan(ratios), np.inf, np.maximum(ratios, 0.0))
            own = self.ub[j] - self.lb[j]
            theta = ratios.min() if m else np.inf
            if own <= theta:
                if not np.isfinite(own):
                    return "unbounded"
                # bound flip, basis unchanged
                self.x[j] += sigma * own
                self.x[self.basis] += own * delta
                self.iterations += 1
                degenerate = 0
                continue
            ties = np.flatnonzero(ratios <= theta + 1e-12)
            if self.bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(col[ties]))])
            leaving = self.basis[r]
            self.x[j] += sigma * theta
            self.x[self.basis] += theta * delta
            # snap the leaving variable onto the bound it reached
            self.x[leaving] = self.lb[leaving] if delta[r] < 0 else self.ub[leaving]
            piv = self.tab[r, j]
            self.tab[r] /= piv
            others = np.arange(m) != r
            self.tab[others] -= np.outer(self.tab[others, j], self.tab[r])
            self.basis[r] = j
            self.iterations += 1
            self._since_refactor += 1
            degenerate = degenerate + 1 if theta <= 1e-12 else 0
            if degenerate > DEGENERATE_RUN:
                self.bland = True
            if self._since_refactor >= REFACTOR_EVERY:
                self.refactor()


def solve_lp(lp: LinearProgram, max_iter: int = 50_000) -> LPSolution:
    """Minimize ``c.x + c0`` over ``row_lo <= A x <= row_hi``, ``lb <= x <= ub``."""
    A = lp.A.toarray() if sp.issparse(lp.A) else np.asarray(lp.A, dtype=float)
    m, n = A.shape
    lb = np.concatenate([np.asarray(lp.lb, float), np.asarray(lp.row_lo, float)])
    ub = np.concatenate([np.asarray(lp.ub, float), np.asarray(lp.row_hi, float)])
    if np.any(lb > ub + FEAS_TOL):
        return LPSolution(None, np.inf, "infeasible")
    ub = np.maximum(ub, lb)
    if m == 0:
        c = np.asarray(lp.c, float)
        x = np.where(c > 0, lb[:n], np.where(c < 0, ub[:n], np.where(np.isfinite(lb[:n]), lb[:n], 0.0)))
        if not np.all(np.isfinite(x)):
            return LPSolution(None, -np.inf, "unbounded")
        return LPSolution(x, float(c @ x) + lp.c0, "optimal")
    start = np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))
    M = np.hstack([A, -np.eye(m)])
    resid = -(M @ start)
    signs = np.where(resid >= 0, 1.0, -1.0)
    M = np.hstack([M, np.diag(signs)])
    total = n + m + m
    lb_all = np.concatenate([lb, np.zeros(m)])
    ub_all = np.concatenate([ub, np.full(m, np.inf)])
    x = np.concatenate([start, np.abs(resid)])
    basis = np.arange(n + m, total)
    tab = _Tableau(M, lb_all, ub_all, x, basis)

    phase1 = np.concatenate([np.zeros(n + m), np.ones(m)])
    tab.run(phase1, max_iter)
    infeas = float(tab.x[n + m:].sum())
    scale = 1.0 + float(np.abs(A).max(initial=0.0)) * float(np.abs(start).max(initial=0.0))
    if infeas > 1e-7 * scale:
        return LPSolution(None, np.inf, "infeasible", tab.iterations)

    # freeze artificials at zero and pivot the basic ones out where possible
    tab.ub[n + m:] = 0.0
    tab.x[n + m:] = 0.0
    for r in range(m):
        if tab.basis[r] >= n + m:
            row = np.abs(tab.tab[r, :n + m])
            row[tab.basis[tab.basis < n + m]] = 0.0
            j = int(np.argmax(row))
            if row[j] > 1e-9:
                piv = tab.tab[r, j]
                tab.tab[r] /= piv
                others = np.arange(m) != r
                tab.tab[others] -= np.outer(tab.tab[others, j], tab.tab[r])
                tab.basis[r] = j
    tab.refactor()

    cost = np.concatenate([np.asarray(lp.c, float), np.zeros(2 * m)])
    status = tab.run(cost, max_iter)
    if status == "unbounded":
        return LPSolution(None, -np.inf, "unbounded", tab.iterations)
    tab.refactor()
    xs = tab.x[:n].copy()
    viol = max(float(np.max(lb[:n] - xs, initial=0.0)), float(np.max(xs - ub[:n], initial=0.0)),
               float(np.max(lp.row_lo - A @ xs, initial=0.0)), float(np.max(A @ xs - lp.row_hi, initial=0.0)))
    if viol > CHECK_TOL:
        raise NumericError(f"simplex solution violates constraints by {viol:.3e}")
    xs = np.clip(xs, lb[:n], ub[:n])
    return LPSolution(xs, float(np.dot(lp.c, xs)) + lp.c0, "optimal", tab.iterations)
