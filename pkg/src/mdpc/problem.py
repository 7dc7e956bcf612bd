"""Symbolic optimization problems with linear rows and a small quadratic part."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class Square:
    """``weight * (coefs . x[idx] + const)**2``, a convex term when weight >= 0."""

    weight: float
    idx: tuple[int, ...]
    coefs: tuple[float, ...]
    const: float = 0.0

    def affine(self, x: np.ndarray) -> float:
        return float(np.dot(self.coefs, x[list(self.idx)]) + self.const)

    def value(self, x: np.ndarray) -> float:
        return self.weight * self.affine(x) ** 2


@dataclass
class Problem:
    """Minimize ``c0 + c.x + sum quad[a,b] x_a x_b + sum squares`` subject to
    ``row_lo <= A x <= row_hi`` and ``lb <= x <= ub``, with ``binary`` marking
    the integer-restricted columns.

    ``quad`` keys are ordered pairs ``a <= b``; a diagonal key stands for
    ``x_a**2``. ``index`` maps a variable family name to an array of column
    indices so callers can read solutions without string lookups.
    """

    names: list[str]
    lb: np.ndarray
    ub: np.ndarray
    binary: np.ndarray
    A: sp.csr_matrix
    row_lo: np.ndarray
    row_hi: np.ndarray
    row_names: list[str]
    c: np.ndarray
    c0: float = 0.0
    quad: dict[tuple[int, int], float] = field(default_factory=dict)
    squares: list[Square] = field(default_factory=list)
    index: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def binaries(self) -> np.ndarray:
        return np.flatnonzero(self.binary)

    @property
    def n_binaries(self) -> int:
        return int(self.binary.sum())

    @property
    def n_continuous(self) -> int:
        return self.n_vars - self.n_binaries

    def is_linear(self) -> bool:
        return not self.quad and not self.squares

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        val = self.c0 + float(self.c @ x)
        for (a, b), q in self.quad.items():
            val += q * x[a] * x[b]
        for sq in self.squares:
            val += sq.value(x)
        return val

    def violation(self, x) -> float:
        """Largest bound or row violation at ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        ax = self.A @ x
        worst = max(
            float(np.max(self.lb - x, initial=0.0)),
            float(np.max(x - self.ub, initial=0.0)),
            float(np.max(self.row_lo - ax, initial=0.0)),
            float(np.max(ax - self.row_hi, initial=0.0)),
        )
        return worst

    def integrality_violation(self, x) -> float:
        x = np.asarray(x, dtype=float)[self.binary]
        if not len(x):
            return 0.0
        return float(np.max(np.abs(x - np.round(x))))


class ProblemBuilder:
    def __init__(self):
        self.names: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.binary: list[bool] = []
        self.c: list[float] = []
        self.c0 = 0.0
        self._rows: list[tuple[dict[int, float], float, float, str]] = []
        self.quad: dict[tuple[int, int], float] = {}
        self.squares: list[Square] = []

    def var(self, name: str, lb: float, ub: float, binary: bool = False, cost: float = 0.0) -> int:
        self.names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.binary.append(binary)
        self.c.append(float(cost))
        return len(self.names) - 1

    def row(self, coefs: dict[int, float], lo: float, hi: float, name: str) -> None:
        self._rows.append((coefs, float(lo), float(hi), name))

    def add_cost(self, j: int, value: float) -> None:
        self.c[j] += value

    def add_quad(self, a: int, b: int, value: float) -> None:
        key = (a, b) if a <= b else (b, a)
        self.quad[key] = self.quad.get(key, 0.0) + value

    def build(self, cls=Problem, **kwargs) -> Problem:
        data, rows, cols = [], [], []
        for r, (coefs, _, _, _) in enumerate(self._rows):
            for j, v in coefs.items():
                if v != 0.0:
                    rows.append(r)
                    cols.append(j)
                    data.append(v)
        A = sp.csr_matrix((data, (rows, cols)), shape=(len(self._rows), len(self.names)))
        return cls(
            names=list(self.names),
            lb=np.array(self.lb),
            ub=np.array(self.ub),
            binary=np.array(self.binary, dtype=bool),
            A=A,
            row_lo=np.array([r[1] for r in self._rows]),
            row_hi=np.array([r[2] for r in self._rows]),
            row_names=[r[3] for r in self._rows],
            c=np.array(self.c),
            c0=self.c0,
            quad={k: v for k, v in self.quad.items() if v != 0.0},
            squares=list(self.squares),
            **kwargs,
        )


def _fmt(v: float) -> str:
    return repr(float(v))


def _linear_expr(pairs) -> str:
    parts = []
    for v, name in pairs:
        sign = "-" if v < 0 else "+"
        parts.append(f"{sign} {_fmt(abs(v))} {name}")
    text = " ".join(parts) if parts else "0"
    return text[2:] if text.startswith("+ ") else text


def dump_lp(problem: Problem) -> str:
    """Plain-text LP-style listing.

    Sections appear in a fixed order: objective, rows, bounds, binaries.
    Quadratic binary products are listed inside ``[ ... ]`` and squared
    affine terms on separate ``square:`` lines. Ranged rows print as
    ``lo <= expr <= hi``.
    """
    names = problem.names
    out = ["\\ mdpc problem listing", "Minimize"]
    obj = [(v, names[j]) for j, v in enumerate(problem.c) if v != 0.0]
    line = " obj: " + _linear_expr(obj)
    if problem.c0:
        line += f" + {_fmt(problem.c0)} constant" if problem.c0 > 0 else f" - {_fmt(-problem.c0)} constant"
    if problem.quad:
        terms = []
        for (a, b), q in sorted(problem.quad.items()):
            prod = f"{names[a]} ^ 2" if a == b else f"{names[a]} * {names[b]}"
            terms.append(f"{'-' if q < 0 else '+'} {_fmt(abs(q))} {prod}")
        line += " + [ " + " ".join(terms) + " ]"
    out.append(line)
    for sq in problem.squares:
        expr = _linear_expr([(v, names[j]) for j, v in zip(sq.idx, sq.coefs)])
        out.append(f" square: {_fmt(sq.weight)} ( {expr} + {_fmt(sq.const)} ) ^ 2")
    out.append("Subject To")
    A = problem.A
    for r in range(problem.n_rows):
        lo, hi = problem.row_lo[r], problem.row_hi[r]
        start, end = A.indptr[r], A.indptr[r + 1]
        order = sorted(range(start, end), key=lambda k: A.indices[k])
        expr = _linear_expr([(A.data[k], names[A.indices[k]]) for k in order])
        label = problem.row_names[r]
        if lo == hi:
            out.append(f" {label}: {expr} = {_fmt(hi)}")
        elif np.isinf(lo):
            out.append(f" {label}: {expr} <= {_fmt(hi)}")
        elif np.isinf(hi):
            out.append(f" {label}: {expr} >= {_fmt(lo)}")
        else:
            out.append(f" {label}: {_fmt(lo)} <= {expr} <= {_fmt(hi)}")
    out.append("Bounds")
    for j, name in enumerate(names):
        out.append(f" {_fmt(problem.lb[j])} <= {name} <= {_fmt(problem.ub[j])}")
    out.append("Binaries")
    out.extend(f" {names[j]}" for j in problem.binaries)
    out.append("End")
    return "\n".join(out) + "\n"
