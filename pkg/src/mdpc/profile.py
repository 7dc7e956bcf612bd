"""Load profiles: CSV ingestion, CSV writing, and a seeded synthetic generator.

The synthetic generator is simple plumbing for experiments and tests, not a
model of any particular household: a smooth daily shape with per-day
scaling plus a few randomly placed appliance runs.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .errors import IngestionError

DEFAULT_START = datetime(2024, 1, 1)
SYNTH_MAX = 3.6


@dataclass(frozen=True)
class LoadProfile:
    start: datetime
    interval_hours: float
    x: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        g = np.zeros_like(x) if self.g is None else np.asarray(self.g, dtype=float)
        if x.ndim != 1 or g.shape != x.shape:
            raise IngestionError("load and generation series must be 1-D and equally long")
        if np.any(x < 0) or np.any(g < 0):
            raise IngestionError("loads and generation must be non-negative")
        if not self.interval_hours > 0:
            raise IngestionError("interval length must be positive")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "g", g)

    def __len__(self) -> int:
        return len(self.x)

    @property
    def start_hour(self) -> float:
        return self.start.hour + self.start.minute / 60.0 + self.start.second / 3600.0

    def timestamp(self, t: int) -> datetime:
        return self.start + timedelta(hours=self.interval_hours * t)

    def daily_totals(self) -> np.ndarray:
        per_day = int(round(24 / self.interval_hours))
        days = len(self.x) // per_day
        return self.x[:days * per_day].reshape(days, per_day).sum(axis=1)


def load_profile_csv(path: str | Path) -> LoadProfile:
    """Read ``timestamp,load_kwh[,gen_kwh]``; row numbers in errors are file lines."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise IngestionError("empty file", 1)
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["timestamp", "load_kwh"] or len(header) > 3 or (
            len(header) == 3 and header[2] != "gen_kwh"):
        raise IngestionError("header must be timestamp,load_kwh[,gen_kwh]", 1)
    has_gen = len(header) == 3
    stamps, xs, gs = [], [], []
    step = None
    for line, row in enumerate(rows[1:], 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise IngestionError(f"expected {len(header)} fields, got {len(row)}", line)
        try:
            stamp = datetime.fromisoformat(row[0].strip())
            x = float(row[1])
            g = float(row[2]) if has_gen else 0.0
        except ValueError as exc:
            raise IngestionError(str(exc), line) from None
        if not (math.isfinite(x) and math.isfinite(g)):
            raise IngestionError("non-finite value", line)
        if x < 0:
            raise IngestionError(f"negative load {x}", line)
        if g < 0:
            raise IngestionError(f"negative generation {g}", line)
        if stamps:
            diff = (stamp - stamps[-1]).total_seconds()
            if step is None:
                if diff <= 0:
                    raise IngestionError("timestamps must increase", line)
                step = diff
            elif diff != step:
                ratio = diff / step
                if ratio > 1 and ratio == int(ratio):
                    raise IngestionError(f"gap: {int(ratio) - 1} missing interval(s) before this row", line)
                raise IngestionError("non-uniform interval", line)
        stamps.append(stamp)
        xs.append(x)
        gs.append(g)
    if not stamps:
        raise IngestionError("no data rows", 2)
    hours = 1.0 if step is None else step / 3600.0
    return LoadProfile(stamps[0], hours, np.array(xs), np.array(gs))


def write_profile_csv(profile: LoadProfile, path: str | Path) -> None:
    has_gen = bool(np.any(profile.g))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "load_kwh"] + (["gen_kwh"] if has_gen else []))
        for t in range(len(profile)):
            row = [profile.timestamp(t).isoformat(), f"{profile.x[t]:.6f}"]
            if has_gen:
                row.append(f"{profile.g[t]:.6f}")
            w.writerow(row)


def generate_synthetic_profile(days: int, seed: int = 1, start: datetime = DEFAULT_START) -> LoadProfile:
    """Hourly consumer load for ``days`` days, deterministic in ``seed``.

    Peak load never exceeds 3.6 kWh and each day totals between 4 and 12 kWh.
    """
    if days < 1:
        raise ValueError("days must be >= 1")
    rng = np.random.default_rng(seed)
    hours = np.arange(24)
    # standby plus small morning and evening bumps
    shape = (0.10
             + 0.08 * np.exp(-0.5 * ((hours - 7.5) / 1.2) ** 2)
             + 0.12 * np.exp(-0.5 * ((hours - 19.0) / 1.8) ** 2))
    out = []
    for _ in range(days):
        day = shape + rng.uniform(0.0, 0.1, 24)
        for _ in range(rng.integers(2, 5)):
            # appliance run: one or two hours at a fixed draw, mostly daytime
            begin = int(rng.choice(24, p=_appliance_hours()))
            length = int(rng.integers(1, 3))
            day[begin:begin + length] += rng.uniform(0.8, 3.0)
        day = np.clip(day, 0.05, SYNTH_MAX)
        total = day.sum()
        # keep clear of the [4, 12] limits so rounding cannot cross them
        if total > 11.9:
            day *= 11.9 / total
        elif total < 4.1:
            day = np.minimum(day * (4.1 / total), SYNTH_MAX)
        out.append(np.round(day, 3))
    return LoadProfile(start, 1.0, np.concatenate(out), None)


def _appliance_hours() -> np.ndarray:
    w = np.array([0.2] * 6 + [1.0] * 3 + [0.6] * 8 + [1.5] * 5 + [0.5] * 2)
    return w / w.sum()
