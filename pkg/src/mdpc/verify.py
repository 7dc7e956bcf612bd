"""Self-checks run by ``mdpc verify``: solver against enumeration, and the
mutual-information estimate against a plain double loop."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .formulation import (Horizon, RegularizerState, build_mdpc_problem, linearize_products,
                          repair_binaries)
from .model import BatterySpec, SystemState, build_grid
from .solver.bnb import branch_and_bound
from .solver.brute import brute_force_solve
from .stats import CountWindow, count_window, estimate_probs, mutual_info_exact


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def random_mdpc_instance(rng: np.random.Generator, T: int, n: int, m: int, M: int, mu: float,
                         with_regularizer: bool = True):
    """A small controller problem with random history, forecast, prices and state."""
    battery = BatterySpec(6.4, 3.3, 3.3, 0.96)
    x_grid, y_grid = build_grid(3.6, m), build_grid(7.0, n)
    history = [(rng.uniform(0, 3.6), rng.uniform(0, 7.0)) for _ in range(M)]
    x = rng.uniform(0, 3.6, T + 1)
    probs = estimate_probs(count_window(history, x_grid, y_grid, M, T, M, x), 0.1)
    horizon = Horizon(x, np.zeros(T + 1), rng.choice([13.15, 24.6], T + 1))
    reg = None
    if with_regularizer and T > 0:
        reg = RegularizerState(rng.uniform(0, 7.0, T), x[:T], np.zeros(T))
    return build_mdpc_problem(SystemState(M, rng.uniform(0, 6.4)), horizon, probs, x_grid, y_grid,
                              battery, mu, reg)


def oracle_sweep(count: int = 200, seed: int = 0, max_T: int = 4, max_bins: int = 5, max_M: int = 20):
    """Yield ``(problem, bnb_solution, brute_solution)`` for random small instances."""
    rng = np.random.default_rng(seed)
    for _ in range(count):
        T = int(rng.integers(0, max_T + 1))
        n = int(rng.integers(2, max_bins + 1))
        m = int(rng.integers(2, max_bins + 1))
        M = int(rng.integers(2, max_M + 1))
        mu = float(rng.choice([0.0, 5.0, 18.0, 45.0, 100.0]))
        miq = random_mdpc_instance(rng, T, n, m, M, mu)
        mil = linearize_products(miq)
        yield miq, branch_and_bound(mil, 1e-9, heuristic=repair_binaries), brute_force_solve(miq)


def mi_by_loops(counts: np.ndarray, eps: float) -> float:
    """Plug-in estimate from smoothed counts, written as a double loop."""
    m, n = counts.shape
    total = counts.sum() + m * n * eps
    mi = 0.0
    for i in range(m):
        px = (counts[i].sum() + n * eps) / total
        for j in range(n):
            py = (counts[:, j].sum() + m * eps) / total
            pxy = (counts[i, j] + eps) / total
            mi += pxy * math.log2(pxy / (px * py))
    return mi


def run_checks(instances: int = 50, tables: int = 200, seed: int = 0) -> list[CheckResult]:
    results = []
    worst = 0.0
    for _, bb, bf in oracle_sweep(instances, seed):
        if bb.status != bf.status:
            worst = math.inf
            break
        if bf.status == "optimal":
            worst = max(worst, abs(bb.objective - bf.objective))
    results.append(CheckResult("solver vs enumeration", worst <= 1e-6,
                               f"{instances} instances, max |diff| = {worst:.3g}"))
    rng = np.random.default_rng(seed + 1)
    err = 0.0
    for _ in range(tables):
        m, n = rng.integers(2, 8, size=2)
        counts = rng.integers(0, 20, size=(m, n))
        est = estimate_probs(CountWindow(counts, (), int(counts.sum())), 0.1)
        err = max(err, abs(mutual_info_exact(est) - mi_by_loops(counts, 0.1)))
    results.append(CheckResult("estimate vs direct summation", err <= 1e-12,
                               f"{tables} tables, max |diff| = {err:.3g}"))
    return results
