import io
import itertools

import numpy as np
import pytest
from scipy.optimize import minimize

from mdpc.errors import SizeError, UnsupportedStructureError
from mdpc.formulation import (Horizon, build_loadlevel_problem, linearize_products,
                              repair_binaries)
from mdpc.model import BatterySpec, SystemState
from mdpc.problem import ProblemBuilder
from mdpc.solver.bnb import branch_and_bound
from mdpc.solver.brute import brute_force_solve, pattern_count
from mdpc.verify import oracle_sweep, random_mdpc_instance

BATTERY = BatterySpec(6.4, 3.3, 3.3, 0.96)


def instance(seed, T=3, n=4, m=4, M=20, mu=45.0):
    return random_mdpc_instance(np.random.default_rng(seed), T, n, m, M, mu)


def test_integral_relaxation_solved_at_root():
    b = ProblemBuilder()
    z = b.var("z", 0, 1, binary=True, cost=1.0)
    x = b.var("x", 0, 5, cost=1.0)
    b.row({x: 1.0, z: 1.0}, 2.0, np.inf, "cover")
    sol = branch_and_bound(b.build())
    assert sol.status == "optimal"
    assert sol.nodes == 1
    assert sol.objective == pytest.approx(2.0)


def test_infeasible_toy():
    b = ProblemBuilder()
    z = b.var("z1", 0, 1, binary=True)
    b.row({z: 1.0}, 1.0, 1.0, "z1 = 1")
    b.row({z: 1.0}, 0.0, 0.0, "z1 = 0")
    problem = b.build()
    assert branch_and_bound(problem).status == "infeasible"
    assert brute_force_solve(problem).status == "infeasible"


def test_fractional_root_needs_branching():
    # knapsack whose relaxation is fractional
    b = ProblemBuilder()
    zs = [b.var(f"z{i}", 0, 1, binary=True, cost=-v) for i, v in enumerate([10, 13, 7, 8])]
    b.row(dict(zip(zs, [4.0, 6.0, 3.0, 5.0])), -np.inf, 10.0, "cap")
    problem = b.build()
    sol = branch_and_bound(problem, 1e-9)
    best = min(-np.dot(p, [10, 13, 7, 8]) for p in itertools.product([0, 1], repeat=4)
               if np.dot(p, [4, 6, 3, 5]) <= 10)
    assert sol.objective == pytest.approx(best)
    assert sol.nodes > 1
    assert brute_force_solve(problem).objective == pytest.approx(best)


def test_rejects_unlinearized_products():
    with pytest.raises(UnsupportedStructureError):
        branch_and_bound(instance(0))


@pytest.mark.parametrize("seed", range(6))
def test_matches_enumeration_table_instance(seed):
    miq = instance(seed, T=3, n=4, m=4, M=20)
    sol = branch_and_bound(linearize_products(miq), 1e-9)
    ref = brute_force_solve(miq)
    assert sol.status == ref.status == "optimal"
    assert sol.objective == pytest.approx(ref.objective, abs=1e-6)
    assert miq.violation(sol.x[:miq.n_vars]) <= 1e-7
    assert sol.gap <= 1e-6 * (1 + abs(sol.objective))
    assert miq.integrality_violation(sol.x[:miq.n_vars]) <= 1e-6


def test_oracle_sweep_small():
    for miq, bb, bf in oracle_sweep(20, seed=11, max_T=2, max_bins=4, max_M=10):
        assert bb.status == bf.status
        if bf.status == "optimal":
            assert bb.objective == pytest.approx(bf.objective, abs=1e-6)


def test_weak_duality_along_the_search():
    sol = branch_and_bound(linearize_products(instance(3, mu=100.0)), 1e-9)
    for _, _, incumbent, bound in sol.trace:
        assert bound <= incumbent + 1e-9 * (1 + abs(incumbent))
    assert sol.bound <= sol.objective + 1e-9


def test_deterministic():
    mil = linearize_products(instance(5, mu=100.0))
    a = branch_and_bound(mil, 1e-9, heuristic=repair_binaries)
    b = branch_and_bound(mil, 1e-9, heuristic=repair_binaries)
    assert np.array_equal(a.x, b.x)
    assert a.nodes == b.nodes
    assert [t[:3] for t in a.trace] == [t[:3] for t in b.trace]


def test_node_log_one_line_per_node():
    buf = io.StringIO()
    sol = branch_and_bound(linearize_products(instance(2)), 1e-9, log=buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == sol.nodes
    assert all(len(line.split()) == 3 for line in lines)


def test_node_limit_reports_gap_limit():
    mil = linearize_products(instance(4, T=4, n=5, m=5, mu=200.0))
    full = branch_and_bound(mil, 1e-9)
    assert full.nodes > 2
    cut = branch_and_bound(mil, 1e-9, node_limit=2)
    assert cut.nodes == 2
    assert cut.status in ("gap-limit", "optimal")
    if cut.status == "gap-limit":
        assert cut.bound <= full.objective + 1e-9
        if cut.x is not None:
            assert cut.objective >= full.objective - 1e-9


@pytest.mark.parametrize("seed", range(4))
def test_warm_start_and_heuristic_do_not_change_optimum(seed):
    miq = instance(20 + seed, mu=60.0)
    mil = linearize_products(miq)
    plain = branch_and_bound(mil, 1e-9)
    rng = np.random.default_rng(seed)
    guess = repair_binaries(mil, rng.uniform(0, 1, mil.n_vars) * mil.ub)
    warm = branch_and_bound(mil, 1e-9, heuristic=repair_binaries, warm_start=guess)
    assert warm.objective == pytest.approx(plain.objective, abs=1e-7)


@pytest.mark.parametrize("seed", range(3))
def test_lp_backends_agree(seed):
    mil = linearize_products(instance(30 + seed, T=2, n=3, m=3, M=10))
    a = branch_and_bound(mil, 1e-9, lp_backend="highs")
    b = branch_and_bound(mil, 1e-9, lp_backend="simplex")
    assert a.objective == pytest.approx(b.objective, abs=1e-6)


def loadlevel_by_enumeration(problem):
    """Fix every direction pattern and minimize the convex rest with SLSQP."""
    A = problem.A.toarray()
    best = np.inf
    for w in itertools.product([0.0, 1.0], repeat=len(problem.index["w"])):
        lb, ub = problem.lb.copy(), problem.ub.copy()
        lb[problem.index["w"]] = ub[problem.index["w"]] = w
        cons = []
        eq = problem.row_lo == problem.row_hi
        cons.append({"type": "eq", "fun": lambda x, A=A[eq], r=problem.row_lo[eq]: A @ x - r})
        lo_fin = np.isfinite(problem.row_lo) & ~eq
        hi_fin = np.isfinite(problem.row_hi) & ~eq
        cons.append({"type": "ineq", "fun": lambda x, A=A[lo_fin], r=problem.row_lo[lo_fin]: A @ x - r})
        cons.append({"type": "ineq", "fun": lambda x, A=A[hi_fin], r=problem.row_hi[hi_fin]: r - A @ x})
        x0 = np.clip(np.zeros(problem.n_vars), lb, ub)
        res = minimize(problem.objective, x0, method="SLSQP", bounds=list(zip(lb, ub)),
                       constraints=cons, options={"ftol": 1e-12, "maxiter": 500})
        if res.success and problem.violation(res.x) <= 1e-7:
            best = min(best, res.fun)
    return best


@pytest.mark.parametrize("seed", range(4))
def test_loadlevel_against_direction_enumeration(seed):
    rng = np.random.default_rng(seed)
    T = 3
    horizon = Horizon(rng.uniform(0, 3.6, T + 1), np.zeros(T + 1), rng.choice([13.15, 24.6], T + 1))
    problem = build_loadlevel_problem(SystemState(0, rng.uniform(0, 6.4)), horizon, BATTERY,
                                      float(rng.choice([1.0, 10.0, 45.0])), rng.uniform(0, 3), 7.0)
    sol = branch_and_bound(problem, 1e-9)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(loadlevel_by_enumeration(problem), abs=1e-5)


# enumeration oracle


def test_brute_single_step_two_bins_pattern_count():
    miq = instance(1, T=0, n=2, m=2, M=5)
    assert pattern_count(miq) <= 4
    assert brute_force_solve(miq).status == "optimal"


def test_brute_too_large():
    miq = instance(1, T=8, n=10, m=4, M=20)
    with pytest.raises(SizeError):
        brute_force_solve(miq)


def test_brute_all_patterns_infeasible():
    b = ProblemBuilder()
    z1 = b.var("z1", 0, 1, binary=True)
    z2 = b.var("z2", 0, 1, binary=True)
    x = b.var("x", 0, 1)
    b.row({z1: 1.0, z2: 1.0}, 1.0, 1.0, "one")
    b.row({x: 1.0}, 2.0, np.inf, "x big")
    assert brute_force_solve(b.build()).status == "infeasible"


def test_brute_accepts_quadratic_form_directly():
    miq = instance(8, T=2, n=3, m=3, M=10)
    a = brute_force_solve(miq)
    b = brute_force_solve(linearize_products(miq))
    assert a.objective == pytest.approx(b.objective, abs=1e-9)


def test_brute_rejects_squares():
    problem = build_loadlevel_problem(SystemState(0, 3.0), Horizon(np.ones(2), np.zeros(2), np.ones(2)),
                                      BATTERY, 5.0, 0.0, 7.0)
    with pytest.raises(UnsupportedStructureError):
        brute_force_solve(problem)


def test_brute_matches_plain_enumeration():
    # exhaustive loop over every pattern without bound ordering
    from mdpc.solver.simplex import LinearProgram, solve_lp

    miq = instance(9, T=1, n=3, m=3, M=10)
    bins = miq.binaries
    best = np.inf
    for pattern in itertools.product([0.0, 1.0], repeat=len(bins)):
        lb, ub = miq.lb.copy(), miq.ub.copy()
        if np.any(np.array(pattern) > ub[bins]):
            continue
        lb[bins] = ub[bins] = pattern
        c = miq.c.copy()
        const = miq.c0
        for (a, b), q in miq.quad.items():
            const += q * lb[a] * lb[b]
        sol = solve_lp(LinearProgram(c, miq.A, miq.row_lo, miq.row_hi, lb, ub, const))
        if sol.status == "optimal":
            best = min(best, sol.objective)
    assert brute_force_solve(miq).objective == pytest.approx(best, abs=1e-9)
