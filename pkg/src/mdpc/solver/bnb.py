"""LP-based branch-and-bound for the controller problems.

Node selection is best-bound with ties broken by the lower node id, and
branching picks the most fractional binary with ties broken by the lower
column index, so a given input always produces the same search. Convex
squared terms (the load-leveling penalty) are handled by an outer
approximation: each square gets an epigraph column bounded below by
tangent cuts, refined at every node until the underestimate is below
``OA_TOL``.
"""
from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from typing import Callable, TextIO

import numpy as np
import scipy.sparse as sp

from ..errors import UnsupportedStructureError
from ..problem import Problem
from .relaxation import ENGINES, OPTIMAL, UNBOUNDED

INT_TOL = 1e-6
OA_TOL = 1e-7
OA_MAX_ROUNDS = 500


@dataclass
class MIPSolution:
    x: np.ndarray | None
    objective: float
    status: str  # optimal | gap-limit | infeasible
    bound: float
    gap: float
    nodes: int
    wall_time: float
    trace: list[tuple[int, float, float, float]] = field(default_factory=list, repr=False)


class _Square:
    """Epigraph column ``t >= weight * (affine)**2``."""

    def __init__(self, square, col, total):
        self.sq = square
        self.expr = np.zeros(total)
        self.expr[col] = 1.0

    def value(self, x):
        return self.sq.value(x)

    def gradient(self, x, total):
        grad = np.zeros(total)
        slope = 2.0 * self.sq.weight * self.sq.affine(x)
        for j, v in zip(self.sq.idx, self.sq.coefs):
            grad[j] += slope * v
        return grad


class _Relaxation:
    """Node LP with an epigraph column per squared term, cut down to ``OA_TOL``."""

    def __init__(self, problem: Problem, backend: str):
        n = problem.n_vars
        sq = problem.squares
        if any(s.weight < 0 for s in sq):
            raise UnsupportedStructureError("squared terms must have non-negative weight")
        self.n = n
        self.c0 = problem.c0
        A = problem.A
        lb, ub = problem.lb, problem.ub
        if sq:
            A = sp.hstack([A, sp.csr_matrix((A.shape[0], len(sq)))], format="csr")
            lb = np.concatenate([lb, np.zeros(len(sq))])
            ub = np.concatenate([ub, np.full(len(sq), np.inf)])
        c = np.concatenate([problem.c, np.ones(len(sq))])
        self.engine = ENGINES[backend](c, A, problem.row_lo, problem.row_hi, lb, ub)
        self.n_rows = A.shape[0]
        self.total = n + len(sq)
        self.squares = [_Square(s, n + q, self.total) for q, s in enumerate(sq)]
        cuts = []
        for term in self.squares:
            lo, hi = self._affine_range(term.sq, problem.lb, problem.ub)
            if np.isfinite(lo) and np.isfinite(hi):
                for a0 in np.linspace(lo, hi, 9):
                    cuts.append(self._square_tangent(term, a0))
        self._add(cuts)

    @staticmethod
    def _affine_range(s, lb, ub):
        lo = hi = s.const
        for j, v in zip(s.idx, s.coefs):
            lo += min(v * lb[j], v * ub[j])
            hi += max(v * lb[j], v * ub[j])
        return lo, hi

    def _square_tangent(self, term, a0):
        # t >= w (2 a0 (coefs.x + const) - a0^2)
        s = term.sq
        row = term.expr.copy()
        for j, v in zip(s.idx, s.coefs):
            row[j] -= 2.0 * s.weight * a0 * v
        return row, s.weight * (2.0 * a0 * s.const - a0 * a0), np.inf

    def _tangent(self, term, x):
        # expr.x >= f(x0) + grad.(x - x0)
        grad = term.gradient(x, self.total)
        return term.expr - grad, term.value(x) - grad @ x, np.inf

    def _add(self, cuts):
        self.engine.add_rows(cuts)
        self.n_rows += len(cuts)

    def solve(self, lb, ub, basis=None):
        if self.squares:
            lb = np.concatenate([lb, np.zeros(len(self.squares))])
            ub = np.concatenate([ub, np.full(len(self.squares), np.inf)])
        if basis is not None and basis[0] != self.n_rows:
            basis = None
        last = np.inf
        for _ in range(OA_MAX_ROUNDS):
            status, x, obj, b = self.engine.solve(lb, ub, None if basis is None else basis[1])
            basis = None
            if status != OPTIMAL:
                return status, None, obj, None
            err = [t.value(x) - t.expr @ x for t in self.squares]
            total = sum(err)
            # stalled: the new cuts are within the LP's feasibility tolerance
            if total <= OA_TOL or (total < 10 * OA_TOL and total >= 0.9 * last):
                return status, x[:self.n], obj + self.c0, (self.n_rows, b)
            last = total
            cuts = [self._tangent(t, x) for t, e in zip(self.squares, err)
                    if e > OA_TOL / len(self.squares)]
            self._add(cuts)
        return status, x[:self.n], obj + self.c0, None


def branch_and_bound(problem: Problem, gap_tol: float = 1e-6, node_limit: int = 200_000, *,
                     lp_backend: str = "highs",
                     heuristic: Callable[[Problem, np.ndarray], np.ndarray | None] | None = None,
                     heuristic_every: int = 10,
                     warm_start: np.ndarray | None = None,
                     log: TextIO | None = None) -> MIPSolution:
    """Solve a mixed-binary problem with a linear or convex-separable objective.

    ``heuristic`` maps a relaxed solution to a full binary assignment (in
    ``problem.binaries`` order) that is then completed by an LP; it runs at
    the root and every ``heuristic_every`` nodes. ``warm_start`` is such an
    assignment from elsewhere (e.g. the previous shifted plan). Neither can
    change the optimum, only how fast it is proven. ``log`` receives one
    line per node: id, node bound, incumbent.
    """
    if problem.quad:
        raise UnsupportedStructureError("linearize binary products before branch-and-bound")
    t0 = time.perf_counter()
    relax = _Relaxation(problem, lp_backend)
    bins = problem.binaries
    lb0 = problem.lb.copy()
    ub0 = problem.ub.copy()
    lb0[bins] = np.ceil(lb0[bins] - INT_TOL)
    ub0[bins] = np.floor(ub0[bins] + INT_TOL)

    best_x: np.ndarray | None = None
    best = np.inf

    def tol(value):
        return gap_tol * (1.0 + abs(value)) if np.isfinite(value) else 0.0

    def try_assignment(values) -> None:
        nonlocal best_x, best
        if values is None:
            return
        values = np.round(np.asarray(values, float))
        if np.any(values < lb0[bins]) or np.any(values > ub0[bins]):
            return
        lb = lb0.copy()
        ub = ub0.copy()
        lb[bins] = ub[bins] = values
        status, x, _, _ = relax.solve(lb, ub)
        if status != OPTIMAL:
            return
        x = np.clip(x, lb, ub)
        x[bins] = values
        value = problem.objective(x)
        if value < best:
            best, best_x = value, x

    if warm_start is not None:
        try_assignment(warm_start)

    trace = []
    heap = [(-np.inf, 0, lb0[bins], ub0[bins], None)]
    next_id = 1
    processed = 0
    hit_limit = False
    while heap:
        node_bound, nid, blo, bhi, basis = heap[0]
        if node_bound >= best - tol(best):
            break
        if processed >= node_limit:
            hit_limit = True
            break
        heapq.heappop(heap)
        lb = lb0.copy()
        ub = ub0.copy()
        lb[bins], ub[bins] = blo, bhi
        lp_status, x, obj, basis = relax.solve(lb, ub, basis)
        processed += 1
        open_bound = min(obj if lp_status == OPTIMAL else np.inf, heap[0][0] if heap else np.inf)
        trace.append((nid, obj, best, min(open_bound, best)))
        if log is not None:
            log.write(f"{nid} {obj:.12g} {best:.12g}\n")
        if lp_status == UNBOUNDED:
            raise UnsupportedStructureError("relaxation is unbounded; bound every column")
        if lp_status != OPTIMAL or obj >= best - tol(best):
            continue
        xb = x[bins]
        frac = np.abs(xb - np.round(xb))
        if frac.max(initial=0.0) <= INT_TOL:
            try_assignment(xb)
            continue
        if processed == 1:
            try_assignment(xb)
        if heuristic is not None and (processed == 1 or processed % heuristic_every == 0):
            try_assignment(heuristic(problem, x))
        cand = np.flatnonzero(frac > INT_TOL)
        k = int(cand[np.argmin(np.abs(xb[cand] - 0.5))])
        down_hi = bhi.copy()
        down_hi[k] = 0.0
        up_lo = blo.copy()
        up_lo[k] = 1.0
        heapq.heappush(heap, (obj, next_id, blo, down_hi, basis))
        heapq.heappush(heap, (obj, next_id + 1, up_lo, bhi, basis))
        next_id += 2

    wall = time.perf_counter() - t0
    bound = min(heap[0][0], best) if heap else best
    if best_x is None:
        status = "gap-limit" if hit_limit else "infeasible"
        return MIPSolution(None, np.inf, status, bound, np.inf, processed, wall, trace)
    gap = best - bound
    status = "optimal" if gap <= tol(best) else "gap-limit"
    return MIPSolution(best_x, best, status, bound, gap, processed, wall, trace)
