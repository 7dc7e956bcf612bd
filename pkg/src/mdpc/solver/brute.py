"""Exhaustive enumeration oracle.

Every admissible binary pattern is fixed in turn and the remaining
continuous problem is solved with the in-house simplex. Rows of the form
``sum of binaries == 1`` are recognised and enumerated as one-hot choices,
which is what keeps the grid-bin selectors tractable. Patterns are visited
in order of a cheap lower bound (binary part exact, continuous part from
column bounds) and the scan stops once that bound reaches the incumbent,
so every pattern is either solved or provably dominated. The binary part of
the objective (including products of binaries) is evaluated exactly on the
fixed pattern, so the oracle accepts the quadratic problem directly.
"""
from __future__ import annotations

import time

import numpy as np

from ..errors import SizeError, UnsupportedStructureError
from ..problem import Problem
from .bnb import MIPSolution
from .simplex import LinearProgram, solve_lp

MAX_PATTERNS = 2 ** 22
CHUNK = 1 << 15
TOL = 1e-9


def _one_hot_groups(problem: Problem, free: np.ndarray):
    """Split the free binaries into one-hot groups and loose binaries.

    Returns ``(choices, loose)`` where each choice is ``(members, options)``
    and every option is a 0/1 tuple over the members.
    """
    A = problem.A
    claimed: set[int] = set()
    choices = []
    free_set = set(int(j) for j in free)
    for r in range(problem.n_rows):
        if problem.row_lo[r] != 1.0 or problem.row_hi[r] != 1.0:
            continue
        cols = A.indices[A.indptr[r]:A.indptr[r + 1]]
        vals = A.data[A.indptr[r]:A.indptr[r + 1]]
        if not len(cols) or not np.all(vals == 1.0) or not np.all(problem.binary[cols]):
            continue
        members = [int(j) for j in sorted(cols) if j in free_set]
        if not members or any(j in claimed for j in members):
            continue
        fixed_ones = sum(round(problem.lb[j]) for j in cols if j not in free_set)
        claimed.update(members)
        if fixed_ones >= 1:
            options = [tuple(0.0 for _ in members)]
        else:
            options = [tuple(float(j == k) for j in members) for k in members]
        choices.append((members, options))
    loose = [int(j) for j in free if int(j) not in claimed]
    return choices, loose


def pattern_count(problem: Problem) -> int:
    """Number of binary patterns the oracle would enumerate."""
    bins = problem.binaries
    free = bins[problem.lb[bins] < problem.ub[bins]]
    choices, loose = _one_hot_groups(problem, free)
    count = 2 ** len(loose)
    for _, options in choices:
        count *= len(options)
    return count


def brute_force_solve(problem: Problem, max_patterns: int = MAX_PATTERNS) -> MIPSolution:
    if problem.squares:
        raise UnsupportedStructureError("enumeration oracle handles linear continuous parts only")
    for a, b in problem.quad:
        if not (problem.binary[a] and problem.binary[b]):
            raise UnsupportedStructureError("products must be between binaries")
    t0 = time.perf_counter()
    bins = problem.binaries
    lb, ub = problem.lb, problem.ub
    if np.any(np.ceil(lb[bins] - TOL) > np.floor(ub[bins] + TOL)):
        return MIPSolution(None, np.inf, "infeasible", np.inf, np.inf, 0, 0.0)
    free = bins[lb[bins] < ub[bins]]
    fixed_bins = bins[lb[bins] >= ub[bins]]
    choices, loose = _one_hot_groups(problem, free)
    count = 2 ** len(loose)
    for _, options in choices:
        count *= len(options)
    if count > max_patterns:
        raise SizeError(f"{count} binary patterns exceed the enumeration limit {max_patterns}")

    cont = np.flatnonzero(~problem.binary)
    A = problem.A.toarray()
    A_bin = A[:, bins]
    A_cont = A[:, cont]
    c_cont = problem.c[cont]
    pos_in_bins = {int(j): k for k, j in enumerate(bins)}
    quad = [(pos_in_bins[a], pos_in_bins[b], q) for (a, b), q in problem.quad.items()]

    # every axis is a block of options over a set of binary columns
    axes = []
    for members, options in choices:
        axes.append(([pos_in_bins[j] for j in members], np.array(options, float)))
    for j in loose:
        axes.append(([pos_in_bins[j]], np.array([[0.0], [1.0]])))
    radix = [len(opts) for _, opts in axes]
    base = np.zeros(len(bins))
    base[[pos_in_bins[int(j)] for j in fixed_bins]] = np.round(lb[fixed_bins])

    def patterns(idx):
        out = np.tile(base, (len(idx), 1))
        rest = idx.copy()
        for (cols, opts), r in zip(axes, radix):
            rest, digit = np.divmod(rest, r)
            out[:, cols] = opts[digit]
        return out

    # rows with a single continuous entry become column bounds once the
    # binaries are fixed; this gives a cheap lower bound per pattern
    nnz = A_cont != 0.0
    per_row = nnz.sum(axis=1)
    single = np.flatnonzero(per_row == 1)
    pure = np.flatnonzero(per_row == 0)
    s_col = nnz[single].argmax(axis=1) if len(single) else np.zeros(0, dtype=int)
    s_coef = A_cont[single, s_col]
    lb_c, ub_c = lb[cont], ub[cont]
    bounds = np.empty(count)
    for start in range(0, count, CHUNK):
        idx = np.arange(start, min(count, start + CHUNK))
        X = patterns(idx)
        val = X @ problem.c[bins] + problem.c0
        for a, b, q in quad:
            val += q * X[:, a] * X[:, b]
        shift = X @ A_bin[single].T
        lo_r = problem.row_lo[single] - shift
        hi_r = problem.row_hi[single] - shift
        clo = np.tile(lb_c, (len(idx), 1))
        chi = np.tile(ub_c, (len(idx), 1))
        with np.errstate(invalid="ignore", divide="ignore"):
            for k, (j, a) in enumerate(zip(s_col, s_coef)):
                lo_k, hi_k = lo_r[:, k] / a, hi_r[:, k] / a
                if a < 0:
                    lo_k, hi_k = hi_k, lo_k
                clo[:, j] = np.fmax(clo[:, j], lo_k)
                chi[:, j] = np.fmin(chi[:, j], hi_k)
            cost = np.where(c_cont > 0, c_cont * clo, np.where(c_cont < 0, c_cont * chi, 0.0))
        bad = np.any(clo > chi + 1e-7, axis=1)
        pure_ax = X @ A_bin[pure].T
        bad |= np.any(pure_ax < problem.row_lo[pure] - 1e-7, axis=1)
        bad |= np.any(pure_ax > problem.row_hi[pure] + 1e-7, axis=1)
        bounds[start:start + len(idx)] = np.where(bad, np.inf, val + cost.sum(axis=1))

    best = np.inf
    best_x = None
    evaluated = 0
    x = np.zeros(problem.n_vars)
    for p in np.argsort(bounds, kind="stable"):
        if bounds[p] >= best - 1e-12 * (1.0 + abs(best)):
            break
        xb = patterns(np.array([p]))[0]
        evaluated += 1
        shift = A_bin @ xb
        sol = _solve_continuous(A_cont, problem.row_lo - shift, problem.row_hi - shift,
                                lb_c, ub_c, c_cont)
        if sol is None:
            continue
        value_bin = float(problem.c[bins] @ xb) + problem.c0
        for a, b, q in quad:
            value_bin += q * xb[a] * xb[b]
        total = value_bin + sol[1]
        if total < best - 1e-12:
            best = total
            x[bins] = xb
            x[cont] = sol[0]
            best_x = x.copy()
    wall = time.perf_counter() - t0
    if best_x is None:
        return MIPSolution(None, np.inf, "infeasible", np.inf, np.inf, evaluated, wall)
    return MIPSolution(best_x, best, "optimal", best, 0.0, evaluated, wall)


def _solve_continuous(A, lo, hi, lb, ub, c):
    """Tighten bounds from single-column rows, then hand the rest to the simplex."""
    nnz = A != 0.0
    counts = nnz.sum(axis=1)
    empty = counts == 0
    if np.any(lo[empty] > 1e-7) or np.any(hi[empty] < -1e-7):
        return None
    single = np.flatnonzero(counts == 1)
    lb = lb.copy()
    ub = ub.copy()
    if len(single):
        cols = nnz[single].argmax(axis=1)
        coef = A[single, cols]
        with np.errstate(invalid="ignore", divide="ignore"):
            a = lo[single] / coef
            b = hi[single] / coef
        new_lo = np.where(coef > 0, a, b)
        new_hi = np.where(coef > 0, b, a)
        np.maximum.at(lb, cols, np.where(np.isnan(new_lo), -np.inf, new_lo))
        np.minimum.at(ub, cols, np.where(np.isnan(new_hi), np.inf, new_hi))
        if np.any(lb > ub + 1e-7):
            return None
        ub = np.maximum(ub, lb)
    keep = counts > 1
    fixed = ub - lb <= 1e-12
    xf = np.where(fixed, lb, 0.0)
    rows = np.flatnonzero(keep)
    cols_free = np.flatnonzero(~fixed)
    shift = A[rows][:, fixed] @ xf[fixed]
    sub = A[np.ix_(rows, cols_free)]
    lp = LinearProgram(c[cols_free], sub, lo[rows] - shift, hi[rows] - shift,
                       lb[cols_free], ub[cols_free], float(c[fixed] @ xf[fixed]))
    if not len(cols_free):
        if np.any(lp.row_lo > 1e-7) or np.any(lp.row_hi < -1e-7):
            return None
        return xf, lp.c0
    sol = solve_lp(lp)
    if sol.status != "optimal":
        return None
    out = xf.copy()
    out[cols_free] = sol.x
    return out, sol.objective
