"""Run configuration and its key=value file dialect.

The file format is one ``key = value`` pair per line. ``#`` starts a
comment, blank lines are ignored, keys are the field names of
:class:`RunConfig` and ``none`` marks an unset optional value.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError, MDPCError
from .model import BatterySpec, TariffSchedule, build_grid
from .stats import epsilon_from_rho

DEFAULT_EPSILON = 0.1


@dataclass(frozen=True)
class RunConfig:
    horizon: int = 12
    past: int = 120
    bins_x: int = 15
    bins_y: int = 15
    epsilon: float | None = None  # defaults to 0.1 unless rho is given
    rho: float | None = None
    eval_epsilon: float | None = None  # smoothing for I_c / I_t; None reuses the controller's
    mu: float = 0.0
    sigma: float = 0.11
    gamma: float = 0.0
    battery_kwh: float = 6.4
    battery_kw: float = 3.3
    efficiency: float = 0.96
    initial_soc: float = 0.5  # fraction of capacity
    price_high: float = 24.6
    price_low: float = 13.15
    high_start: float = 7.0
    high_end: float = 20.0
    x_max: float | None = 3.6  # None: take the profile maximum
    y_max: float | None = None  # None: x_max + charge limit, rounded up to 0.5
    moving_window: int = 132
    seed: int = 1
    padding: str = "hold"
    gap_tol: float = 1e-6
    node_limit: int = 20_000
    lp_backend: str = "highs"
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        self.validate()

    # -- derived values -------------------------------------------------
    @property
    def window(self) -> int:
        return self.past + self.horizon

    @property
    def battery(self) -> BatterySpec:
        return BatterySpec.from_power(self.battery_kwh, self.battery_kw, self.efficiency)

    @property
    def tariff(self) -> TariffSchedule:
        if self.price_high == self.price_low:
            return TariffSchedule.flat(self.price_high)
        return TariffSchedule.two_tier(self.price_high, self.price_low, self.high_start, self.high_end)

    @property
    def smoothing(self) -> float:
        if self.rho is not None:
            return epsilon_from_rho(self.window, self.bins_x, self.bins_y, self.rho)
        return DEFAULT_EPSILON if self.epsilon is None else self.epsilon

    @property
    def evaluation_smoothing(self) -> float:
        return self.smoothing if self.eval_epsilon is None else self.eval_epsilon

    def resolve_x_max(self, loads=None) -> float:
        if self.x_max is not None:
            return self.x_max
        peak = max(loads, default=0.0) if loads is not None else 0.0
        if not peak > 0:
            raise ConfigError("x_max", "cannot derive from a profile without positive load")
        return float(peak)

    def resolve_y_max(self, x_max: float) -> float:
        if self.y_max is not None:
            return self.y_max
        return math.ceil((x_max + self.battery.charge_max_kwh) / 0.5 - 1e-9) * 0.5

    def grids(self, loads=None):
        x_max = self.resolve_x_max(loads)
        return build_grid(x_max, self.bins_x), build_grid(self.resolve_y_max(x_max), self.bins_y)

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)

    # -- validation -----------------------------------------------------
    def validate(self) -> None:
        def need(ok, name, message):
            if not ok:
                raise ConfigError(name, message)

        need(self.horizon >= 0, "horizon", "must be >= 0")
        need(self.past >= 1, "past", "must be >= 1")
        need(self.bins_x >= 2, "bins_x", "must be >= 2")
        need(self.bins_y >= 2, "bins_y", "must be >= 2")
        need(not (self.epsilon is not None and self.rho is not None), "rho",
             "epsilon and rho are mutually exclusive")
        need(self.epsilon is None or self.epsilon > 0, "epsilon", "must be > 0")
        need(self.eval_epsilon is None or self.eval_epsilon > 0, "eval_epsilon", "must be > 0")
        need(self.mu >= 0, "mu", "must be non-negative")
        need(self.sigma >= 0, "sigma", "must be non-negative")
        need(self.gamma >= 0, "gamma", "must be non-negative")
        need(self.battery_kwh >= 0, "battery_kwh", "must be >= 0")
        need(self.battery_kw >= 0, "battery_kw", "must be >= 0")
        need(0 < self.efficiency < 1, "efficiency", "must lie in (0, 1)")
        need(0 <= self.initial_soc <= 1, "initial_soc", "must lie in [0, 1]")
        need(self.price_high > 0, "price_high", "must be > 0")
        need(self.price_low > 0, "price_low", "must be > 0")
        need(0 <= self.high_start < self.high_end <= 24, "high_start",
             "need 0 <= high_start < high_end <= 24")
        need(self.x_max is None or self.x_max > 0, "x_max", "must be > 0")
        need(self.y_max is None or self.y_max > 0, "y_max", "must be > 0")
        need(self.moving_window >= 1, "moving_window", "must be >= 1")
        need(self.padding == "hold", "padding", "only 'hold' is supported")
        need(self.gap_tol > 0, "gap_tol", "must be > 0")
        need(self.node_limit >= 1, "node_limit", "must be >= 1")
        need(self.lp_backend in ("highs", "simplex"), "lp_backend", "must be 'highs' or 'simplex'")
        if self.rho is not None:
            try:
                self.smoothing
            except MDPCError as exc:
                raise ConfigError("rho", str(exc)) from None
        if self.x_max is not None:
            need(self.resolve_y_max(self.x_max) >= self.x_max, "y_max",
                 "must be at least x_max or the controller can become infeasible")


_FIELDS = {f.name: f for f in fields(RunConfig) if f.name != "extra"}


def _convert(name: str, text: str):
    f = _FIELDS[name]
    kind = f.type
    text = text.strip()
    optional = "None" in str(kind)
    if optional and text.lower() == "none":
        return None
    try:
        if "int" in str(kind):
            return int(text)
        if "float" in str(kind):
            value = float(text)
            if not math.isfinite(value):
                raise ValueError(text)
            return value
    except ValueError:
        raise ConfigError(name, f"cannot parse {text!r}") from None
    return text


def parse_config(path: str | Path | None = None, **overrides) -> RunConfig:
    """Read a key=value file (optional) and apply keyword overrides on top.

    Overrides whose value is ``None`` are ignored so argparse namespaces can
    be passed through directly.
    """
    values = {}
    if path is not None:
        try:
            lines = Path(path).read_text().splitlines()
        except OSError as exc:
            raise ConfigError("file", str(exc)) from None
        for lineno, line in enumerate(lines, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("file", f"line {lineno}: expected key = value")
            key, _, raw = line.partition("=")
            key = key.strip()
            if key not in _FIELDS:
                raise ConfigError(key, f"unknown setting (line {lineno})")
            values[key] = _convert(key, raw)
    for key, value in overrides.items():
        if key not in _FIELDS:
            raise ConfigError(key, "unknown setting")
        if value is not None:
            values[key] = value
    return RunConfig(**values)


def emit_config(config: RunConfig) -> str:
    """Serialize every field; ``parse_config`` reads it back to an equal config."""
    lines = []
    for name in _FIELDS:
        value = getattr(config, name)
        lines.append(f"{name} = {'none' if value is None else repr(value) if isinstance(value, float) else value}")
    return "\n".join(lines) + "\n"
