import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mdpc.errors import SafeguardError, SmoothingError
from mdpc.model import build_grid
from mdpc.stats import (NU, CountWindow, count_window, epsilon_from_rho, estimate_probs,
                        max_log_derivative, mutual_info_exact, mutual_info_linearized, static_window)


def direct_mi(counts, horizon_x, horizon_y, N, eps):
    """Second implementation: build every probability from raw tallies and sum by loops."""
    m, n = len(counts), len(counts[0])
    ne = N + m * n * eps
    total = 0.0
    for i in range(m):
        xi = sum(counts[i]) + sum(1 for h in horizon_x if h == i)
        px = (xi + n * eps) / ne
        for j in range(n):
            hij = sum(1 for h, g in zip(horizon_x, horizon_y) if (h, g) == (i, j))
            hj = sum(1 for g in horizon_y if g == j)
            pxy = (counts[i][j] + hij + eps) / ne
            py = (sum(counts[k][j] for k in range(m)) + hj + m * eps) / ne
            total += pxy * math.log(pxy / (px * py), 2)
    return total


def random_window(rng, m, n, T, N):
    counts = np.zeros((m, n), dtype=np.int64)
    past = N - T - 1
    np.add.at(counts, (rng.integers(0, m, past), rng.integers(0, n, past)), 1)
    return CountWindow(counts, tuple(int(v) for v in rng.integers(0, m, T + 1)), N)


# -- count_window ----------------------------------------------------------

@pytest.fixture
def grids():
    return build_grid(4.0, 4), build_grid(8.0, 4)


def test_count_window_empty(grids):
    w = count_window([], *grids, M=10, T=2, t=0, forecast=[0.1, 0.2, 3.9])
    assert w.past_counts.sum() == 0
    assert w.horizon_bins == (0, 0, 3)
    assert (w.N, w.M, w.T) == (12, 10, 2)


def test_count_window_identical_pairs(grids):
    M = 6
    history = [(2.2, 7.0)] * 20
    w = count_window(history, *grids, M=M, T=1, t=20, forecast=[0, 0])
    assert w.past_counts[2, 3] == M - 1
    assert w.past_counts.sum() == M - 1


def test_count_window_hand_tally(grids):
    # x grid edges 0|1|2|3|4, y grid edges 0|2|4|6|8
    history = [(0.5, 1.0), (1.5, 2.0), (1.0, 2.5), (3.5, 7.9)]
    w = count_window(history, *grids, M=5, T=0, t=4, forecast=[1.0])
    expected = np.zeros((4, 4), int)
    expected[0, 0] = 1  # (0.5, 1.0)
    expected[1, 0] = 1  # (1.5, 2.0): 2.0 sits on an edge and goes down
    expected[0, 1] = 1  # (1.0, 2.5): 1.0 on an edge goes down
    expected[3, 3] = 1
    assert np.array_equal(w.past_counts, expected)


def test_count_window_only_recent(grids):
    history = [(0.5, 1.0)] * 5 + [(3.5, 7.0)] * 5
    w = count_window(history, *grids, M=4, T=0, t=10, forecast=[0.0])
    assert w.past_counts[3, 3] == 3 and w.past_counts.sum() == 3


def test_count_window_forecast_length(grids):
    with pytest.raises(ValueError):
        count_window([], *grids, M=4, T=2, t=0, forecast=[0.0])


# -- estimate_probs --------------------------------------------------------

def test_zero_counts_table_one_defaults():
    w = CountWindow(np.zeros((15, 15), int), tuple([0] * 13), 132)
    p = estimate_probs(w, 0.1)
    assert p.n_eps == pytest.approx(154.5)
    assert np.allclose(p.a, 0.1 / 154.5)
    assert p.a[0, 0] == pytest.approx(6.472e-4, rel=1e-3)


def test_single_observation():
    counts = np.zeros((15, 15), int)
    counts[2, 3] = 1
    p = estimate_probs(CountWindow(counts, tuple([0] * 13), 132), 0.1)
    assert p.a[2, 3] == pytest.approx(1.1 / 154.5)
    others = np.delete(p.a.ravel(), 2 * 15 + 3)
    assert np.allclose(others, 0.1 / 154.5)


def test_marginals_against_recount():
    rng = np.random.default_rng(3)
    w = random_window(rng, 4, 5, 3, 30)
    p = estimate_probs(w, 0.2)
    ne = 30 + 20 * 0.2
    for j in range(5):
        col = sum(w.past_counts[i, j] for i in range(4))
        assert p.b[j] == pytest.approx((col + 4 * 0.2) / ne)
    for i in range(4):
        row = sum(w.past_counts[i]) + w.horizon_bins.count(i)
        assert p.c[i] == pytest.approx((row + 5 * 0.2) / ne)


@given(st.integers(2, 8), st.integers(2, 8), st.integers(0, 6), st.integers(0, 10_000),
       st.floats(0.01, 2.0))
def test_normalization(m, n, T, seed, eps):
    rng = np.random.default_rng(seed)
    N = T + 1 + int(rng.integers(0, 40))
    w = random_window(rng, m, n, T, N)
    p = estimate_probs(w, eps)
    assert p.a.sum() + (T + 1) / p.n_eps == pytest.approx(1.0, abs=1e-12)
    assert p.b.sum() + (T + 1) / p.n_eps == pytest.approx(1.0, abs=1e-12)
    assert p.c.sum() == pytest.approx(1.0, abs=1e-12)
    assert (p.a > 0).all() and (p.b > 0).all() and (p.c > 0).all()


@pytest.mark.parametrize("eps", [0.0, -0.1])
def test_smoothing_must_be_positive(eps):
    with pytest.raises(SmoothingError):
        estimate_probs(CountWindow(np.zeros((2, 2), int), (0,), 5), eps)


# -- mutual information ----------------------------------------------------

def test_independent_table_is_zero():
    # outer product counts; with an empty horizon and eps tiny this is independent exactly
    counts = np.outer([2, 4, 6], [3, 1]) * 10
    w = CountWindow(counts, (), int(counts.sum()))
    # smoothing by eps on every cell keeps the table a product of its marginals
    # only when the smoothed table is itself rank one, so build that case directly
    p = estimate_probs(w, 1e-12)
    assert mutual_info_exact(p) == pytest.approx(0.0, abs=1e-9)


def test_uniform_table_is_zero():
    w = CountWindow(np.full((3, 4), 7), (), 84)
    assert mutual_info_exact(estimate_probs(w, 0.1)) == pytest.approx(0.0, abs=1e-15)


def test_identical_fair_bits_approach_one():
    counts = np.array([[10 ** 6, 0], [0, 10 ** 6]])
    p = estimate_probs(CountWindow(counts, (), int(counts.sum())), 1e-6)
    assert mutual_info_exact(p) == pytest.approx(1.0, abs=1e-6)


def test_exact_matches_direct_summation():
    rng = np.random.default_rng(0)
    for _ in range(50):
        w = random_window(rng, 3, 3, int(rng.integers(0, 4)), 12)
        z = rng.integers(0, 3, w.T + 1)
        p = estimate_probs(w, 0.1)
        ref = direct_mi(w.past_counts.tolist(), w.horizon_bins, list(z), 12, 0.1)
        assert mutual_info_exact(p, z) == pytest.approx(ref, abs=1e-12)


@settings(max_examples=60)
@given(st.integers(2, 6), st.integers(2, 6), st.integers(0, 10_000))
def test_mi_bounds(m, n, seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(0, 5))
    w = random_window(rng, m, n, T, T + 1 + int(rng.integers(0, 50)))
    z = rng.integers(0, n, T + 1)
    v = mutual_info_exact(estimate_probs(w, float(rng.uniform(0.01, 1.0))), z)
    assert -1e-12 <= v <= math.log2(min(m, n)) + 1e-12


def test_mi_permutation_invariant():
    rng = np.random.default_rng(1)
    counts = rng.integers(0, 9, (4, 5))
    base = mutual_info_exact(estimate_probs(CountWindow(counts, (), int(counts.sum())), 0.3))
    for perm_i, perm_j in [([3, 1, 0, 2], [0, 1, 2, 3, 4]), ([0, 1, 2, 3], [4, 2, 0, 1, 3])]:
        c2 = counts[perm_i][:, perm_j]
        v = mutual_info_exact(estimate_probs(CountWindow(c2, (), int(c2.sum())), 0.3))
        assert v == pytest.approx(base, abs=1e-13)


def test_linearized_constant_part():
    rng = np.random.default_rng(2)
    w = random_window(rng, 4, 4, 3, 30)
    p = estimate_probs(w, 0.1)
    const = float((p.a * np.log2(p.a / (p.b[None, :] * p.c[:, None]))).sum())
    assert mutual_info_linearized(p, np.zeros((4, 4))) == pytest.approx(const, abs=1e-14)


def test_linearized_error_is_second_order():
    # one horizon step: the gap shrinks like (1/N_eps)**2 as the window grows
    rng = np.random.default_rng(4)
    gaps = []
    for scale in (1, 10, 100):
        counts = rng.integers(5, 15, (3, 3)) * scale
        N = int(counts.sum()) + 1
        w = CountWindow(counts, (1,), N)
        p = estimate_probs(w, 0.1)
        gaps.append(abs(mutual_info_linearized(p, [2]) - mutual_info_exact(p, [2])) * p.n_eps ** 2)
    # scaled gaps stay bounded, i.e. the raw gap is O(1/N_eps**2)
    assert max(gaps) < 10 * min(gaps) + 1


def test_linearized_gap_decreases_with_window():
    rng = np.random.default_rng(5)
    means = []
    for scale in (1, 10, 100):
        errs = []
        for _ in range(100):
            w = random_window(rng, 15, 15, 12, 132 * scale)
            z = rng.integers(0, 15, 13)
            p = estimate_probs(w, 0.1)
            errs.append(abs(mutual_info_linearized(p, z) - mutual_info_exact(p, z)))
        means.append(np.mean(errs))
    assert means[0] > means[1] > means[2]


def test_horizon_count_matrix_equivalent():
    rng = np.random.default_rng(6)
    w = random_window(rng, 3, 4, 2, 20)
    p = estimate_probs(w, 0.1)
    z = [1, 3, 1]
    Z = np.zeros((3, 4))
    for i, j in zip(w.horizon_bins, z):
        Z[i, j] += 1
    assert mutual_info_exact(p, z) == mutual_info_exact(p, Z)
    assert mutual_info_linearized(p, z) == mutual_info_linearized(p, Z)


def test_static_window():
    g = build_grid(4.0, 4)
    w = static_window([0.5, 0.5, 3.5], [0.5, 0.5, 0.5], g, g)
    assert w.N == 3 and w.T == -1 and w.past_counts[0, 0] == 2


# -- epsilon from rho ------------------------------------------------------

def test_epsilon_from_rho_table_one():
    rho = NU * (132 / 0.1 + 225)
    assert epsilon_from_rho(132, 15, 15, rho) == pytest.approx(0.1, rel=1e-12)


def test_epsilon_from_rho_boundary():
    with pytest.raises(SafeguardError):
        epsilon_from_rho(132, 15, 15, NU * 225)
    with pytest.raises(SafeguardError):
        epsilon_from_rho(50, 4, 4, NU * 10)


@given(st.integers(1, 2000), st.integers(2, 20), st.integers(2, 20), st.floats(1.001, 1e4))
def test_epsilon_meets_bound(N, m, n, factor):
    rho = NU * m * n * factor
    eps = epsilon_from_rho(N, m, n, rho)
    p = estimate_probs(CountWindow(np.zeros((m, n), int), (), N), eps)
    assert max_log_derivative(p) <= rho
    assert NU * (N + m * n * eps) / eps <= rho


def test_safeguard_on_reachable_windows():
    rng = np.random.default_rng(7)
    rho = NU * 2000.0
    eps = epsilon_from_rho(132, 15, 15, rho)
    for _ in range(50):
        p = estimate_probs(random_window(rng, 15, 15, 12, 132), eps)
        assert float((NU / p.a).max()) <= rho
        assert float((NU / p.b).max()) <= rho


def test_direct_mi_oracle_self_check():
    # the loop oracle itself: perfectly correlated 2x2 approaches 1 bit
    val = direct_mi([[500, 0], [0, 500]], (), (), 1000, 1e-9)
    assert val == pytest.approx(1.0, abs=1e-6)
