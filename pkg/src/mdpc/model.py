"""Domain types and single-step system equations.

All energies are kWh per interval. The simulations run at hourly
resolution, so a power rating in kW and an energy in kWh/interval are the
same number.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidGridError, InvalidValueError, RateLimitError

# A value this close above a bin boundary still counts as "on" it (and
# therefore goes to the lower bin). Must stay well below BIN_MARGIN in
# formulation so the controller and the evaluator bin identically.
BOUNDARY_TOL = 1e-7

RATE_TOL = 1e-9


@dataclass(frozen=True)
class BatterySpec:
    capacity_kwh: float = 6.4
    charge_max_kwh: float = 3.3
    discharge_max_kwh: float = 3.3
    efficiency: float = 0.96

    def __post_init__(self):
        if not 0.0 < self.efficiency < 1.0:
            raise InvalidValueError(f"efficiency must lie in (0, 1), got {self.efficiency}")
        for name in ("capacity_kwh", "charge_max_kwh", "discharge_max_kwh"):
            value = getattr(self, name)
            if not value >= 0.0:
                raise InvalidValueError(f"{name} must be >= 0, got {value}")

    @classmethod
    def from_power(cls, capacity_kwh: float, power_kw: float, efficiency: float = 0.96,
                   interval_hours: float = 1.0) -> BatterySpec:
        """Symmetric charge/discharge limits from a power rating."""
        return cls(capacity_kwh, power_kw * interval_hours, power_kw * interval_hours, efficiency)


@dataclass(frozen=True)
class TariffSchedule:
    """Daily time-of-use windows as ``(start_hour, end_hour, price)``.

    The windows must tile ``[0, 24)`` in order. Prices are Rp/kWh.
    """

    windows: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        windows = tuple((float(a), float(b), float(p)) for a, b, p in self.windows)
        object.__setattr__(self, "windows", windows)
        if not windows:
            raise InvalidValueError("tariff needs at least one window")
        edge = 0.0
        for start, end, price in windows:
            if start != edge or end <= start:
                raise InvalidValueError(f"tariff windows must tile the day; bad window {start}-{end}")
            if price <= 0:
                raise InvalidValueError(f"tariff prices must be positive, got {price}")
            edge = end
        if edge != 24.0:
            raise InvalidValueError("tariff windows must end at hour 24")

    @classmethod
    def two_tier(cls, high: float = 24.6, low: float = 13.15,
                 high_start: float = 7.0, high_end: float = 20.0) -> TariffSchedule:
        windows = []
        if high_start > 0:
            windows.append((0.0, high_start, low))
        windows.append((high_start, high_end, high))
        if high_end < 24:
            windows.append((high_end, 24.0, low))
        return cls(tuple(windows))

    @classmethod
    def flat(cls, price: float) -> TariffSchedule:
        return cls(((0.0, 24.0, price),))


@dataclass(frozen=True)
class QuantGrid:
    levels: tuple[float, ...]
    half_width: float
    max_value: float

    @property
    def count(self) -> int:
        return len(self.levels)

    def lower_edges(self) -> np.ndarray:
        return np.asarray(self.levels) - self.half_width

    def upper_edges(self) -> np.ndarray:
        return np.asarray(self.levels) + self.half_width


@dataclass(frozen=True)
class SystemState:
    """Controller-visible state at the start of interval ``t``.

    ``history`` holds the realized ``(x, g, c, y, s)`` tuples of intervals
    ``0 .. t-1``.
    """

    t: int
    soc_kwh: float
    history: tuple[tuple[float, float, float, float, float], ...] = field(default=())

    def check(self, battery: BatterySpec, tol: float = 1e-9) -> None:
        if not -tol <= self.soc_kwh <= battery.capacity_kwh + tol:
            raise InvalidValueError(
                f"state of charge {self.soc_kwh} outside [0, {battery.capacity_kwh}]")


def build_grid(max_value: float, level_count: int) -> QuantGrid:
    """Evenly spaced levels anchored so the outer bin edges are 0 and ``max_value``."""
    if not (isinstance(max_value, (int, float)) and max_value > 0) or math.isnan(max_value):
        raise InvalidGridError(f"max_value must be positive, got {max_value}")
    if int(level_count) != level_count or level_count < 2:
        raise InvalidGridError(f"level_count must be an integer >= 2, got {level_count}")
    level_count = int(level_count)
    delta = max_value / (2 * level_count)
    levels = tuple((2 * k - 1) * delta for k in range(1, level_count + 1))
    return QuantGrid(levels, delta, float(max_value))


def quantize(value: float, grid: QuantGrid) -> int:
    """Zero-based index of the nearest level.

    Values outside ``[0, max_value]`` are clamped to the outer bins. A value
    on the boundary between two bins goes to the lower one.
    """
    if math.isnan(value):
        raise InvalidValueError("cannot quantize NaN")
    idx = math.ceil((value - BOUNDARY_TOL) / (2.0 * grid.half_width)) - 1
    return min(max(idx, 0), grid.count - 1)


def quantize_many(values, grid: QuantGrid) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if np.isnan(values).any():
        raise InvalidValueError("cannot quantize NaN")
    idx = np.ceil((values - BOUNDARY_TOL) / (2.0 * grid.half_width)).astype(int) - 1
    return np.clip(idx, 0, grid.count - 1)


def battery_step(soc: float, s: float, spec: BatterySpec) -> float:
    """Next state of charge after storing ``s`` kWh (negative discharges)."""
    if s > spec.charge_max_kwh + RATE_TOL or s < -spec.discharge_max_kwh - RATE_TOL:
        raise RateLimitError(
            f"s={s} outside [{-spec.discharge_max_kwh}, {spec.charge_max_kwh}]")
    if s >= 0:
        return soc + spec.efficiency * s
    return soc + s / spec.efficiency


def grid_load(x: float, s: float, g: float) -> float:
    return x + s - g


def price_at(t: int, schedule: TariffSchedule, start_hour: float = 0.0,
             interval_hours: float = 1.0) -> float:
    """Price in Rp/kWh for interval ``t`` of a run starting at ``start_hour``."""
    hour = (start_hour + t * interval_hours) % 24.0
    for start, end, price in schedule.windows:
        if start <= hour < end:
            return price
    return schedule.windows[-1][2]
