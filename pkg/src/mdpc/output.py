"""CSV egress for traces, metrics and sweeps.

Floats are written with ``repr`` so a file read back gives the exact same
numbers, and nothing time-dependent (wall clock, solve time) is written, so
equal inputs give byte-identical files.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .config import RunConfig, emit_config
from .sim import MetricReport, SimTrace

TRACE_COLUMNS = ["t", "x_kwh", "g_kwh", "price_rp", "s_kwh", "soc_kwh", "soc_next_kwh",
                 "y_kwh", "x_bin", "y_bin", "status", "nodes"]
SWEEP_COLUMNS = ["controller", "mu", "i_c_bits", "cost_chf", "grid_energy_kwh", "i_t_mean_bits"]


def _num(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _writer(path: Path):
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)


def write_trace_csv(trace: SimTrace, path: str | Path) -> None:
    fh, w = _writer(Path(path))
    with fh:
        w.writerow(TRACE_COLUMNS)
        xb, yb = trace.x_bins, trace.y_bins
        for t in range(len(trace)):
            w.writerow([t, _num(trace.x[t]), _num(trace.g[t]), _num(trace.price[t]), _num(trace.s[t]),
                        _num(trace.soc[t]), _num(trace.soc_next[t]), _num(trace.y[t]),
                        int(xb[t]), int(yb[t]), trace.status[t], int(trace.nodes[t])])


def read_trace_csv(path: str | Path, config: RunConfig, kind: str = "mdpc") -> SimTrace:
    """Rebuild a trace written by :func:`write_trace_csv` (grids come from ``config``)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    col = {name: np.array([float(r[name]) for r in rows]) for name in TRACE_COLUMNS
           if name not in ("t", "status", "x_bin", "y_bin")}
    x_grid, y_grid = config.grids(col["x_kwh"])
    battery = config.battery
    if kind == "nobattery":
        battery = type(battery)(0.0, 0.0, 0.0, config.efficiency)
    return SimTrace(col["x_kwh"], col["g_kwh"], col["price_rp"], col["s_kwh"], col["soc_kwh"],
                    col["soc_next_kwh"], col["y_kwh"], [r["status"] for r in rows],
                    col["nodes"].astype(int), np.zeros(len(rows)), [np.zeros(0)] * len(rows),
                    x_grid, y_grid, config.evaluation_smoothing, battery, kind)


def write_metrics_csv(report: MetricReport, path: str | Path) -> None:
    fh, w = _writer(Path(path))
    with fh:
        w.writerow(["metric", "value"])
        w.writerow(["i_c_bits", _num(report.i_c)])
        w.writerow(["i_t_mean_bits", _num(report.i_t.mean()) if len(report.i_t) else ""])
        w.writerow(["total_cost_chf", _num(report.total_cost_chf)])
        w.writerow(["grid_energy_kwh", _num(report.total_energy_kwh)])
        w.writerow(["consumer_energy_kwh", _num(report.consumer_energy_kwh)])


def write_series_csv(report: MetricReport, window: int, path: str | Path) -> None:
    fh, w = _writer(Path(path))
    with fh:
        w.writerow(["t", "i_t_bits"])
        for k, v in enumerate(report.i_t):
            w.writerow([window - 1 + k, _num(v)])


def write_sweep_csv(rows, path: str | Path) -> None:
    """``rows`` are ``(controller, mu, MetricReport)`` tuples."""
    fh, w = _writer(Path(path))
    with fh:
        w.writerow(SWEEP_COLUMNS)
        for controller, mu, rep in rows:
            it = _num(rep.i_t.mean()) if len(rep.i_t) else ""
            w.writerow([controller, _num(mu), _num(rep.i_c), _num(rep.total_cost_chf),
                        _num(rep.total_energy_kwh), it])


def emit_outputs(trace: SimTrace, report: MetricReport, out_dir: str | Path,
                 config: RunConfig | None = None, prefix: str = "") -> list[Path]:
    """Write the trace, metrics and I_t series (and the config when given)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"{prefix}trace.csv", out / f"{prefix}metrics.csv", out / f"{prefix}it_series.csv"]
    write_trace_csv(trace, paths[0])
    write_metrics_csv(report, paths[1])
    write_series_csv(report, config.moving_window if config else 132, paths[2])
    if config is not None:
        paths.append(out / f"{prefix}config.txt")
        paths[-1].write_text(emit_config(config))
    return paths
