"""Per-step optimization problems for the privacy controller and the
load-leveling baseline, plus exact linearization of binary products.

Horizon steps are indexed relative to the current interval, ``k = 0 .. T``.
Columns are laid out step-major: for every ``k`` the charge split
``splus``/``sminus``, grid load ``y``, next state of charge ``e``, the
direction binary ``w`` and the grid-bin binaries ``z[k, 0..n-1]``. The
regularizer auxiliaries ``u`` follow, and product auxiliaries ``p`` are
appended by :func:`linearize_products`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormulationError, UnsupportedStructureError
from .model import BatterySpec, QuantGrid, SystemState
from .problem import Problem, ProblemBuilder, Square
from .stats import NU, ProbEstimates

# Strict side of the binning constraint, in kWh. The evaluator treats
# anything within model.BOUNDARY_TOL of an edge as on the edge, so this
# margin has to be clearly larger than that.
BIN_MARGIN = 1e-6

INF = np.inf


class MIQProblem(Problem):
    pass


class MILProblem(Problem):
    """Linear problem whose ``p`` columns stand for products of binaries.

    ``products`` maps each auxiliary column to the pair of binary columns it
    replaces.
    """

    products: dict[int, tuple[int, int]]


@dataclass(frozen=True)
class Horizon:
    """Perfect-foresight data for steps ``t .. t+T``."""

    x: np.ndarray
    g: np.ndarray
    price: np.ndarray

    def __post_init__(self):
        for name in ("x", "g", "price"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not len(self.x) == len(self.g) == len(self.price) > 0:
            raise FormulationError("horizon series must be non-empty and equally long")

    @property
    def T(self) -> int:
        return len(self.x) - 1


@dataclass(frozen=True)
class RegularizerState:
    """Plan from the previous step over the overlap ``t .. t+T-1``."""

    y_bar: np.ndarray
    x_bar: np.ndarray
    g_bar: np.ndarray
    sigma: float = 0.11
    gamma: float = 0.0


def _reachable(soc: float, horizon: Horizon, battery: BatterySpec, y_max: float):
    """Interval bounds on charge, discharge and grid load at each step.

    Valid for every integer-feasible point: uses that charging and
    discharging never overlap and that the state of charge stays in
    ``[0, capacity]``.
    """
    alpha = battery.efficiency
    cap = battery.capacity_kwh
    e_lo = e_hi = soc
    out = []
    for x, g in zip(horizon.x, horizon.g):
        charge = max(0.0, min(battery.charge_max_kwh, (cap - e_lo) / alpha))
        discharge = max(0.0, min(battery.discharge_max_kwh, alpha * e_hi))
        y_lo = max(0.0, x - g - discharge)
        y_hi = min(y_max, x - g + charge)
        out.append((charge, discharge, y_lo, y_hi))
        e_lo = max(0.0, e_lo - battery.discharge_max_kwh / alpha)
        e_hi = min(cap, e_hi + alpha * battery.charge_max_kwh)
    return out


def _bin_bounds(y_grid: QuantGrid):
    lo = y_grid.lower_edges() + BIN_MARGIN
    lo[0] = 0.0
    hi = y_grid.upper_edges()
    return lo, hi


def _add_system(b: ProblemBuilder, state: SystemState, horizon: Horizon, battery: BatterySpec,
                y_max: float, with_bins: QuantGrid | None):
    """Columns and rows shared by both controllers: balance, rate limits,
    storage dynamics and capacity, grid bounds, and optionally grid binning."""
    T = horizon.T
    alpha = battery.efficiency
    reach = _reachable(state.soc_kwh, horizon, battery, y_max)
    idx = {k: [] for k in ("splus", "sminus", "y", "e", "w")}
    idx["z"] = []
    if with_bins is not None:
        bin_lo, bin_hi = _bin_bounds(with_bins)
        centers = np.asarray(with_bins.levels)
        lo_off = bin_lo - centers
    prev_e = None
    for k in range(T + 1):
        charge, discharge, y_lo, y_hi = reach[k]
        sp_ = b.var(f"splus[{k}]", 0.0, charge)
        sm_ = b.var(f"sminus[{k}]", 0.0, discharge)
        y_ = b.var(f"y[{k}]", 0.0, y_max)
        e_ = b.var(f"e[{k + 1}]", 0.0, battery.capacity_kwh)
        w_ = b.var(f"w[{k}]", 0.0, 1.0, binary=True)
        for key, j in zip(("splus", "sminus", "y", "e", "w"), (sp_, sm_, y_, e_, w_)):
            idx[key].append(j)
        rhs = horizon.x[k] - horizon.g[k]
        b.row({y_: 1.0, sp_: -1.0, sm_: 1.0}, rhs, rhs, f"balance[{k}]")
        b.row({sp_: 1.0, w_: -battery.charge_max_kwh}, -INF, 0.0, f"charge_cap[{k}]")
        b.row({sm_: 1.0, w_: battery.discharge_max_kwh}, -INF, battery.discharge_max_kwh,
              f"discharge_cap[{k}]")
        dyn = {e_: 1.0, sp_: -alpha, sm_: 1.0 / alpha}
        if prev_e is None:
            b.row(dyn, state.soc_kwh, state.soc_kwh, f"dynamics[{k}]")
        else:
            dyn[prev_e] = -1.0
            b.row(dyn, 0.0, 0.0, f"dynamics[{k}]")
        prev_e = e_
        if with_bins is not None:
            zs = []
            for j in range(with_bins.count):
                reachable = bin_lo[j] <= y_hi + 1e-12 and bin_hi[j] >= y_lo - 1e-12
                zs.append(b.var(f"z[{k},{j}]", 0.0, 1.0 if reachable else 0.0, binary=True))
            idx["z"].append(zs)
            b.row({z: 1.0 for z in zs}, 1.0, 1.0, f"one_bin[{k}]")
            upper = {y_: 1.0}
            lower = {y_: 1.0}
            for j, z in enumerate(zs):
                upper[z] = -with_bins.half_width - centers[j]
                lower[z] = -(centers[j] + lo_off[j])
            b.row(upper, -INF, 0.0, f"bin_hi[{k}]")
            b.row(lower, 0.0, INF, f"bin_lo[{k}]")
    out = {k: np.array(v, dtype=int) for k, v in idx.items()}
    return out


def _check_state(state: SystemState, battery: BatterySpec):
    if not -1e-9 <= state.soc_kwh <= battery.capacity_kwh + 1e-9:
        raise FormulationError(f"state of charge {state.soc_kwh} outside [0, {battery.capacity_kwh}]")


def privacy_coefficients(probs: ProbEstimates):
    """Expand the linearized estimate into constant, linear and pairwise parts.

    Returns ``(const, lin, pair)`` where, for horizon steps ``k, l`` and grid
    bin ``j``, ``lin[k, j]`` multiplies ``z[k, j]`` and ``pair[k, l, j]``
    multiplies ``z[k, j] * z[l, j]`` (symmetric, diagonal included). Only the
    consumer bin fixed by the forecast at each step carries a variable.
    """
    a, b, c, ne = probs.a, probs.b, probs.c, probs.n_eps
    rows = np.asarray(probs.horizon_bins, dtype=int)
    log_ratio = np.log2(a / (b[None, :] * c[:, None]))
    const = float((a * log_ratio).sum())
    # d/dZ_ij of a_ij*(nu Z_ij/(a_ij ne)) plus Z_ij/ne * log_ratio, and the
    # B_j = sum_i Z_ij coupling through -a_ij nu B_j / (b_j ne)
    col_a = a.sum(axis=0)
    lin = (log_ratio[rows, :] + NU - NU * col_a[None, :] / b[None, :]) / ne
    same = rows[:, None] == rows[None, :]
    inv_a = 1.0 / a[rows, :]  # (K, n)
    pair = NU / ne ** 2 * (same[:, :, None] * inv_a[:, None, :] - 1.0 / b[None, None, :])
    return const, lin, pair


def build_regularizer(b: ProblemBuilder, reg: RegularizerState | None, y_cols, horizon: Horizon,
                      mu: float) -> list[int]:
    """Add the l1 tracking penalty against the previous plan.

    One auxiliary per overlap step bounds ``|y_k - y_bar_k|`` from above; the
    denominator is fixed at build time because ``x`` and ``g`` are known.
    Returns the auxiliary columns (empty when there is nothing to track).
    """
    T = horizon.T
    if reg is None or mu == 0.0 or T == 0:
        return []
    y_bar = np.asarray(reg.y_bar, dtype=float)
    if len(y_bar) != T:
        raise FormulationError(f"regularizer needs {T} predicted steps, got {len(y_bar)}")
    dev = (np.abs(horizon.x[:T] - np.asarray(reg.x_bar, dtype=float)).sum()
           + np.abs(horizon.g[:T] - np.asarray(reg.g_bar, dtype=float)).sum())
    weight = mu * reg.sigma / T / (reg.gamma * dev + 1.0)
    cols = []
    for k in range(T):
        y = int(y_cols[k])
        span = max(b.ub[y] - y_bar[k], y_bar[k] - b.lb[y], 0.0)
        u = b.var(f"u[{k}]", 0.0, span, cost=weight)
        b.row({u: 1.0, y: -1.0}, -y_bar[k], INF, f"track_up[{k}]")
        b.row({u: 1.0, y: 1.0}, y_bar[k], INF, f"track_dn[{k}]")
        cols.append(u)
    return cols


def build_mdpc_problem(state: SystemState, horizon: Horizon, probs: ProbEstimates,
                       x_grid: QuantGrid, y_grid: QuantGrid, battery: BatterySpec, mu: float,
                       reg: RegularizerState | None = None) -> MIQProblem:
    """Mixed-integer quadratic problem solved by the privacy controller at one step.

    Objective: mean energy cost over the horizon plus ``mu`` times the
    linearized mutual-information estimate, plus the tracking regularizer.
    Binaries: one grid-bin indicator per (step, bin) for the forecast
    consumer bin and one charge-direction indicator per step, i.e.
    ``(n + 1)(T + 1)`` in total. Bins the battery cannot reach are fixed to
    zero through their upper bound.
    """
    _check_state(state, battery)
    T = horizon.T
    if len(probs.horizon_bins) != T + 1:
        raise FormulationError("probability estimates and horizon disagree on T")
    if probs.a.shape != (x_grid.count, y_grid.count):
        raise FormulationError("probability estimates do not match the grids")
    if mu < 0:
        raise FormulationError(f"mu must be non-negative, got {mu}")
    b = ProblemBuilder()
    idx = _add_system(b, state, horizon, battery, y_grid.max_value, with_bins=y_grid)
    for k in range(T + 1):
        b.add_cost(int(idx["y"][k]), horizon.price[k] / (T + 1))
    if mu > 0:
        const, lin, pair = privacy_coefficients(probs)
        b.c0 += mu * const
        z = idx["z"]
        n = y_grid.count
        for k in range(T + 1):
            for j in range(n):
                b.add_cost(int(z[k, j]), mu * lin[k, j])
                b.add_quad(int(z[k, j]), int(z[k, j]), mu * pair[k, k, j])
                for l in range(k + 1, T + 1):
                    b.add_quad(int(z[k, j]), int(z[l, j]), 2.0 * mu * pair[k, l, j])
    u = build_regularizer(b, reg, idx["y"], horizon, mu)
    idx["u"] = np.array(u, dtype=int)
    bin_lo, bin_hi = _bin_bounds(y_grid)
    return b.build(MIQProblem, index=idx, meta={
        "kind": "mdpc", "T": T, "n": y_grid.count, "mu": mu, "soc": state.soc_kwh,
        "bin_lo": bin_lo, "bin_hi": bin_hi})


def build_loadlevel_problem(state: SystemState, horizon: Horizon, battery: BatterySpec,
                            mu: float, y_prev: float, y_max: float) -> MIQProblem:
    """Cost plus squared successive grid-load differences; ``w`` are the only binaries."""
    _check_state(state, battery)
    if mu < 0:
        raise FormulationError(f"mu must be non-negative, got {mu}")
    T = horizon.T
    b = ProblemBuilder()
    idx = _add_system(b, state, horizon, battery, y_max, with_bins=None)
    ys = idx["y"]
    for k in range(T + 1):
        b.add_cost(int(ys[k]), horizon.price[k] / (T + 1))
    if mu > 0:
        weight = mu / (T + 1)
        b.squares.append(Square(weight, (int(ys[0]),), (1.0,), -float(y_prev)))
        for k in range(1, T + 1):
            b.squares.append(Square(weight, (int(ys[k]), int(ys[k - 1])), (1.0, -1.0)))
    idx.pop("z")
    return b.build(MIQProblem, index=idx, meta={
        "kind": "loadlevel", "T": T, "mu": mu, "soc": state.soc_kwh})


def linearize_products(problem: Problem) -> MILProblem:
    """Replace every product of two binaries by a bounded auxiliary.

    ``p = z_a z_b`` is enforced on binary points by ``p <= z_a``,
    ``p <= z_b`` and ``p >= z_a + z_b - 1``; squares of binaries fold into
    the linear cost since ``z**2 = z``.
    """
    if problem.squares:
        raise UnsupportedStructureError("squared terms over continuous variables cannot be linearized")
    for a, b_ in problem.quad:
        if not (problem.binary[a] and problem.binary[b_]):
            raise UnsupportedStructureError(
                f"product {problem.names[a]}*{problem.names[b_]} involves a continuous variable")
    b = ProblemBuilder()
    for j, name in enumerate(problem.names):
        b.var(name, problem.lb[j], problem.ub[j], bool(problem.binary[j]), problem.c[j])
    b.c0 = problem.c0
    A = problem.A
    for r in range(problem.n_rows):
        start, end = A.indptr[r], A.indptr[r + 1]
        coefs = {int(A.indices[k]): float(A.data[k]) for k in range(start, end)}
        b.row(coefs, problem.row_lo[r], problem.row_hi[r], problem.row_names[r])
    products = {}
    for (a, c), q in sorted(problem.quad.items()):
        if a == c:
            b.add_cost(a, q)
            continue
        ub = min(problem.ub[a], problem.ub[c], 1.0)
        p = b.var(f"p[{problem.names[a]}*{problem.names[c]}]", 0.0, max(ub, 0.0), cost=q)
        b.row({p: 1.0, a: -1.0}, -INF, 0.0, f"prod_a[{p}]")
        b.row({p: 1.0, c: -1.0}, -INF, 0.0, f"prod_b[{p}]")
        b.row({p: 1.0, a: -1.0, c: -1.0}, -1.0, INF, f"prod_ab[{p}]")
        products[p] = (a, c)
    index = dict(problem.index)
    index["p"] = np.array(sorted(products), dtype=int)
    out = b.build(MILProblem, index=index, meta=dict(problem.meta, linearized=True))
    out.products = products
    return out


def complete_products(problem: MILProblem, x) -> np.ndarray:
    """Set every product auxiliary to the product of its binaries."""
    x = np.array(x, dtype=float)
    for p, (a, c) in problem.products.items():
        x[p] = x[a] * x[c]
    return x


def repair_binaries(problem: Problem, x) -> np.ndarray:
    """Binary assignment read off a relaxed point.

    Each step's direction comes from the sign of its net charge and its grid
    bin from where its grid load falls (the nearest reachable bin when that
    one is fixed out). The result is in ``problem.binaries`` order.
    """
    x = np.asarray(x, dtype=float)
    vals = np.zeros(problem.n_vars)
    idx = problem.index
    net = x[idx["splus"]] - x[idx["sminus"]]
    vals[idx["w"]] = (net > 0).astype(float)
    if "z" in idx and len(idx["z"]):
        lo, hi = problem.meta["bin_lo"], problem.meta["bin_hi"]
        centers = (lo + hi) / 2
        for k, zs in enumerate(idx["z"]):
            y = x[idx["y"][k]]
            open_ = problem.ub[zs] > 0.5
            inside = np.flatnonzero((y >= lo - 1e-9) & (y <= hi + 1e-9) & open_)
            if len(inside):
                j = inside[0]
            else:
                cand = np.flatnonzero(open_)
                if not len(cand):
                    continue
                j = cand[np.argmin(np.abs(centers[cand] - y))]
            vals[zs[j]] = 1.0
    return vals[problem.binaries]
