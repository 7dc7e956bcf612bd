"""Receding-horizon closed loop, baselines and evaluation metrics.

At every interval the controller sees perfect forecasts of load,
generation and price over the next ``T + 1`` intervals, solves its
problem, applies only the first battery action and moves on. Near the end
of the profile the forecast is padded by holding the last known value.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .errors import SimulationError, WindowError
from .formulation import (Horizon, RegularizerState, build_loadlevel_problem,
                          build_mdpc_problem, linearize_products, repair_binaries)
from .model import (BatterySpec, QuantGrid, SystemState, battery_step, grid_load, price_at,
                    quantize_many)
from .profile import LoadProfile
from .solver.bnb import branch_and_bound
from .stats import count_window, estimate_probs, mutual_info_exact, static_window

PHYSICS_TOL = 1e-9


@dataclass
class SimTrace:
    """Realized per-interval record of one run.

    ``soc[t]`` is the state of charge at the start of interval ``t`` and
    ``soc_next[t]`` the one after applying ``s[t]``. ``plan_y[t]`` is the
    grid load the controller planned for ``t .. t+T`` (empty for runs
    without a controller).
    """

    x: np.ndarray
    g: np.ndarray
    price: np.ndarray
    s: np.ndarray
    soc: np.ndarray
    soc_next: np.ndarray
    y: np.ndarray
    status: list[str]
    nodes: np.ndarray
    solve_time: np.ndarray
    plan_y: list[np.ndarray]
    x_grid: QuantGrid
    y_grid: QuantGrid
    eps: float
    battery: BatterySpec
    kind: str = "mdpc"
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.x)

    @property
    def x_bins(self) -> np.ndarray:
        return quantize_many(self.x, self.x_grid)

    @property
    def y_bins(self) -> np.ndarray:
        return quantize_many(self.y, self.y_grid)


@dataclass(frozen=True)
class MetricReport:
    i_c: float  # bits
    i_t: np.ndarray  # bits, one value per t >= window - 1
    total_cost_chf: float
    total_energy_kwh: float  # grid import
    consumer_energy_kwh: float


def _horizon(profile: LoadProfile, t: int, T: int, config: RunConfig) -> Horizon:
    L = len(profile)
    idx = np.minimum(np.arange(t, t + T + 1), L - 1)  # hold the last value past the end
    price = [price_at(t + k, config.tariff, profile.start_hour, profile.interval_hours)
             for k in range(T + 1)]
    return Horizon(profile.x[idx], profile.g[idx], np.array(price))


class _Recorder:
    def __init__(self, profile: LoadProfile, config: RunConfig, battery: BatterySpec, kind: str):
        self.profile = profile
        self.config = config
        self.battery = battery
        self.kind = kind
        L = len(profile)
        self.s = np.zeros(L)
        self.soc = np.zeros(L)
        self.soc_next = np.zeros(L)
        self.y = np.zeros(L)
        self.price = np.zeros(L)
        self.nodes = np.zeros(L, dtype=int)
        self.solve_time = np.zeros(L)
        self.status: list[str] = []
        self.plan_y: list[np.ndarray] = []

    def apply(self, t: int, soc: float, s: float, price: float) -> float:
        """Clip ``s`` to what is physically admissible, advance and record."""
        b = self.battery
        x, g = self.profile.x[t], self.profile.g[t]
        # solver output is feasible to ~1e-7; project onto the exact limits
        hi = min(b.charge_max_kwh, (b.capacity_kwh - soc) / b.efficiency)
        lo = -min(b.discharge_max_kwh, soc * b.efficiency)
        s = min(max(s, lo), hi)
        if x + s - g < 0:
            s = min(g - x, hi)
        if abs(s) < 1e-12:
            s = 0.0
        soc_next = battery_step(soc, s, b)
        soc_next = min(max(soc_next, 0.0), b.capacity_kwh)
        self.s[t], self.soc[t], self.soc_next[t] = s, soc, soc_next
        self.y[t] = grid_load(x, s, g)
        self.price[t] = price
        return soc_next

    def trace(self, x_grid, y_grid, eps, **meta) -> SimTrace:
        return SimTrace(self.profile.x.copy(), self.profile.g.copy(), self.price, self.s, self.soc,
                        self.soc_next, self.y, self.status, self.nodes, self.solve_time, self.plan_y,
                        x_grid, y_grid, eps, self.battery, self.kind, meta)


def _shifted_guess(problem, previous: dict | None) -> np.ndarray | None:
    """Binary assignment from the previous plan moved forward one step."""
    if previous is None:
        return None
    idx = problem.index
    x = np.zeros(problem.n_vars)
    T = len(idx["y"]) - 1
    for key in ("splus", "sminus", "y"):
        old = previous[key]
        new = np.concatenate([old[1:], old[-1:]])[:T + 1]
        x[idx[key]] = new
    return repair_binaries(problem, x)


def _plan(problem, x) -> dict:
    idx = problem.index
    return {key: x[idx[key]].copy() for key in ("splus", "sminus", "y")}


def _check_profile(profile: LoadProfile, config: RunConfig, y_max: float):
    if len(profile) < config.horizon + 1:
        raise SimulationError(f"profile has {len(profile)} intervals, need at least T+1={config.horizon + 1}")
    if np.max(profile.x - profile.g, initial=0.0) > y_max + 1e-12:
        raise SimulationError(f"net load exceeds the grid limit {y_max}")


def run_simulation(profile: LoadProfile, config: RunConfig, log=None) -> SimTrace:
    """Closed-loop run of the privacy controller with ``config.mu``."""
    x_grid, y_grid = config.grids(profile.x)
    _check_profile(profile, config, y_grid.max_value)
    battery = config.battery
    eps = config.smoothing
    T, M = config.horizon, config.past
    rec = _Recorder(profile, config, battery, "mdpc")
    soc = config.initial_soc * battery.capacity_kwh
    history: list[tuple[float, float]] = []
    previous = None
    for t in range(len(profile)):
        hz = _horizon(profile, t, T, config)
        probs = estimate_probs(count_window(history, x_grid, y_grid, M, T, t, hz.x), eps)
        reg = None
        if previous is not None and T > 0:
            reg = RegularizerState(previous["y"][1:], previous["x"][1:], previous["g"][1:],
                                   config.sigma, config.gamma)
        state = SystemState(t, soc)
        problem = linearize_products(build_mdpc_problem(
            state, hz, probs, x_grid, y_grid, battery, config.mu, reg))
        start = time.perf_counter()
        sol = branch_and_bound(problem, config.gap_tol, config.node_limit,
                               lp_backend=config.lp_backend, heuristic=repair_binaries,
                               warm_start=_shifted_guess(problem, previous), log=log)
        rec.solve_time[t] = time.perf_counter() - start
        if sol.x is None:
            raise SimulationError(f"controller problem is {sol.status}", t)
        idx = problem.index
        s = float(sol.x[idx["splus"][0]] - sol.x[idx["sminus"][0]])
        soc = rec.apply(t, soc, s, hz.price[0])
        rec.status.append(sol.status)
        rec.nodes[t] = sol.nodes
        previous = _plan(problem, sol.x)
        previous["x"], previous["g"] = hz.x, hz.g
        rec.plan_y.append(previous["y"])
        history.append((profile.x[t], rec.y[t]))
    return rec.trace(x_grid, y_grid, config.evaluation_smoothing, mu=config.mu, horizon=T)


def run_loadlevel(profile: LoadProfile, config: RunConfig) -> SimTrace:
    """Closed-loop run of the load-leveling baseline with weight ``config.mu``."""
    x_grid, y_grid = config.grids(profile.x)
    _check_profile(profile, config, y_grid.max_value)
    battery = config.battery
    T = config.horizon
    rec = _Recorder(profile, config, battery, "loadlevel")
    soc = config.initial_soc * battery.capacity_kwh
    y_prev = 0.0
    previous = None
    for t in range(len(profile)):
        hz = _horizon(profile, t, T, config)
        problem = build_loadlevel_problem(SystemState(t, soc), hz, battery, config.mu, y_prev,
                                          y_grid.max_value)
        start = time.perf_counter()
        sol = branch_and_bound(problem, config.gap_tol, config.node_limit,
                               lp_backend=config.lp_backend, heuristic=repair_binaries,
                               warm_start=_shifted_guess(problem, previous))
        rec.solve_time[t] = time.perf_counter() - start
        if sol.x is None:
            raise SimulationError(f"load-leveling problem is {sol.status}", t)
        idx = problem.index
        s = float(sol.x[idx["splus"][0]] - sol.x[idx["sminus"][0]])
        soc = rec.apply(t, soc, s, hz.price[0])
        rec.status.append(sol.status)
        rec.nodes[t] = sol.nodes
        previous = _plan(problem, sol.x)
        rec.plan_y.append(previous["y"])
        y_prev = rec.y[t]
    return rec.trace(x_grid, y_grid, config.evaluation_smoothing, mu=config.mu, horizon=T)


def run_no_battery(profile: LoadProfile, config: RunConfig) -> SimTrace:
    """Reference without storage: the grid sees net load, floored at zero."""
    x_grid, y_grid = config.grids(profile.x)
    battery = BatterySpec(0.0, 0.0, 0.0, config.efficiency)
    rec = _Recorder(profile, config, battery, "nobattery")
    for t in range(len(profile)):
        price = price_at(t, config.tariff, profile.start_hour, profile.interval_hours)
        rec.s[t] = 0.0
        rec.y[t] = max(grid_load(profile.x[t], 0.0, profile.g[t]), 0.0)
        rec.price[t] = price
        rec.status.append("none")
        rec.plan_y.append(np.zeros(0))
    return rec.trace(x_grid, y_grid, config.evaluation_smoothing)


# -- metrics ---------------------------------------------------------------

def cumulative_mi(trace: SimTrace, eps: float | None = None) -> float:
    """Mutual-information estimate over the whole run in one static window."""
    window = static_window(trace.x, trace.y, trace.x_grid, trace.y_grid)
    return mutual_info_exact(estimate_probs(window, trace.eps if eps is None else eps))


def moving_mi(trace: SimTrace, N: int, t: int, eps: float | None = None) -> float:
    """Estimate over the realized pairs of intervals ``t-N+1 .. t``."""
    if N < 1 or t < N - 1 or t >= len(trace):
        raise WindowError(f"window of length {N} ending at {t} does not fit a trace of {len(trace)}")
    sl = slice(t - N + 1, t + 1)
    window = static_window(trace.x[sl], trace.y[sl], trace.x_grid, trace.y_grid)
    return mutual_info_exact(estimate_probs(window, trace.eps if eps is None else eps))


def mi_series(trace: SimTrace, N: int, eps: float | None = None) -> np.ndarray:
    return np.array([moving_mi(trace, N, t, eps) for t in range(N - 1, len(trace))])


def total_cost_chf(trace: SimTrace) -> float:
    return float(np.dot(trace.price, trace.y)) / 100.0  # Rp -> CHF


def compute_metrics(trace: SimTrace, window: int = 132, eps: float | None = None) -> MetricReport:
    series = mi_series(trace, window, eps) if len(trace) >= window else np.zeros(0)
    return MetricReport(cumulative_mi(trace, eps), series, total_cost_chf(trace),
                        float(trace.y.sum()), float(trace.x.sum()))


def energy_balance(trace: SimTrace) -> float:
    """Residual of load + losses + stored change against grid import + generation."""
    a = trace.battery.efficiency
    charge = np.clip(trace.s, 0.0, None)
    discharge = np.clip(-trace.s, 0.0, None)
    losses = ((1 - a) * charge + (1 / a - 1) * discharge).sum()
    stored = trace.soc_next[-1] - trace.soc[0] if len(trace) else 0.0
    supplied = trace.y.sum() + trace.g.sum()
    used = trace.x.sum() + losses + stored
    return float(supplied - used)


def check_trace(trace: SimTrace, tol: float = PHYSICS_TOL) -> None:
    """Assert the system equations along the whole trace; raise on the first violation."""
    b = trace.battery
    y_max = trace.y_grid.max_value
    for t in range(len(trace)):
        s = trace.s[t]
        if abs(trace.y[t] - grid_load(trace.x[t], s, trace.g[t])) > tol:
            raise SimulationError("grid balance violated", t)
        if s > b.charge_max_kwh + tol or s < -b.discharge_max_kwh - tol:
            raise SimulationError("rate limit violated", t)
        if abs(trace.soc_next[t] - battery_step(trace.soc[t], s, b)) > tol:
            raise SimulationError("storage dynamics violated", t)
        if not -tol <= trace.soc_next[t] <= b.capacity_kwh + tol:
            raise SimulationError("capacity violated", t)
        if not -tol <= trace.y[t] <= y_max + tol:
            raise SimulationError("grid limit violated", t)
        if t and trace.soc[t] != trace.soc_next[t - 1]:
            raise SimulationError("state of charge not carried over", t)
    if len(trace) and abs(energy_balance(trace)) > tol * max(1.0, len(trace)):
        raise SimulationError("energy balance does not close")


def longest_plateau(bins) -> int:
    """Length of the longest run of equal consecutive values."""
    bins = np.asarray(bins)
    if not len(bins):
        return 0
    best = run = 1
    for prev, cur in zip(bins[:-1], bins[1:]):
        run = run + 1 if cur == prev else 1
        best = max(best, run)
    return best
