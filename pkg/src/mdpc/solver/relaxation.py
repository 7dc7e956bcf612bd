"""LP engines used for branch-and-bound node relaxations.

Both engines hold one linear program whose column bounds change from node
to node and to which valid cuts can be appended. ``HighsEngine`` keeps a
persistent HiGHS model and hot-starts from a stored basis; ``SimplexEngine``
re-solves from scratch with the in-house simplex.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import NumericError
from .simplex import LinearProgram, solve_lp

OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded"


class SimplexEngine:
    def __init__(self, c, A, row_lo, row_hi, lb, ub):
        self.c = np.asarray(c, float)
        self.A = sp.csr_matrix(A)
        self.row_lo = np.asarray(row_lo, float)
        self.row_hi = np.asarray(row_hi, float)
        self.lb = np.asarray(lb, float)
        self.ub = np.asarray(ub, float)

    def add_rows(self, rows):
        if not rows:
            return
        extra = sp.csr_matrix(np.array([r[0] for r in rows]))
        self.A = sp.vstack([self.A, extra], format="csr")
        self.row_lo = np.concatenate([self.row_lo, [r[1] for r in rows]])
        self.row_hi = np.concatenate([self.row_hi, [r[2] for r in rows]])

    def solve(self, lb, ub, basis=None):
        sol = solve_lp(LinearProgram(self.c, self.A, self.row_lo, self.row_hi, lb, ub))
        return sol.status, sol.x, sol.objective, None


class HighsEngine:
    def __init__(self, c, A, row_lo, row_hi, lb, ub):
        import highspy

        self._hs = highspy
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("presolve", "off")
        h.setOptionValue("threads", 1)
        h.setOptionValue("random_seed", 0)
        # tangent cuts are refined below 1e-7, so rows must be honoured more tightly
        h.setOptionValue("primal_feasibility_tolerance", 1e-9)
        A = sp.csc_matrix(A)
        lp = highspy.HighsLp()
        lp.num_col_ = A.shape[1]
        lp.num_row_ = A.shape[0]
        lp.col_cost_ = np.asarray(c, float)
        lp.col_lower_ = np.asarray(lb, float)
        lp.col_upper_ = np.asarray(ub, float)
        lp.row_lower_ = np.asarray(row_lo, float)
        lp.row_upper_ = np.asarray(row_hi, float)
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr.astype(np.int32)
        lp.a_matrix_.index_ = A.indices.astype(np.int32)
        lp.a_matrix_.value_ = A.data.astype(float)
        h.passModel(lp)
        self.h = h
        self.n = A.shape[1]
        self._cols = np.arange(self.n, dtype=np.int32)

    def add_rows(self, rows):
        for coefs, lo, hi in rows:
            nz = np.flatnonzero(coefs)
            self.h.addRow(float(lo), float(hi), len(nz), nz.astype(np.int32), coefs[nz].astype(float))

    def solve(self, lb, ub, basis=None):
        h = self.h
        h.changeColsBounds(self.n, self._cols, np.asarray(lb, float), np.asarray(ub, float))
        if basis is not None:
            h.setBasis(basis)
        h.run()
        status = h.getModelStatus()
        ms = self._hs.HighsModelStatus
        if status == ms.kOptimal:
            x = np.array(h.getSolution().col_value)
            return OPTIMAL, x, float(h.getInfo().objective_function_value), h.getBasis()
        if status == ms.kInfeasible:
            return INFEASIBLE, None, np.inf, None
        if status in (ms.kUnbounded, ms.kUnboundedOrInfeasible):
            # resolve the ambiguity from a cold start
            h.clearSolver()
            h.run()
            if h.getModelStatus() == ms.kInfeasible:
                return INFEASIBLE, None, np.inf, None
            return UNBOUNDED, None, -np.inf, None
        raise NumericError(f"LP engine returned status {h.modelStatusToString(status)}")


ENGINES = {"highs": HighsEngine, "simplex": SimplexEngine}
