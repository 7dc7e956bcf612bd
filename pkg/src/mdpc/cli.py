"""Command-line entry point: ``mdpc <command> [options]``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import RunConfig, parse_config
from .errors import MDPCError
from .output import emit_outputs, write_sweep_csv
from .profile import generate_synthetic_profile, load_profile_csv, write_profile_csv
from .sim import compute_metrics, run_loadlevel, run_no_battery, run_simulation

RUNNERS = {"none": run_simulation, "loadlevel": run_loadlevel, "nobattery": run_no_battery}
NAMES = {"none": "mdpc", "loadlevel": "loadlevel", "nobattery": "nobattery"}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--mu", type=float, help="privacy weight, Rp per bit")
    p.add_argument("--horizon", type=int, help="prediction horizon T")
    p.add_argument("--battery-kwh", type=float, help="battery capacity")
    p.add_argument("--battery-kw", type=float, help="charge and discharge limit")
    p.add_argument("--bins-x", type=int, help="consumer load levels m")
    p.add_argument("--bins-y", type=int, help="grid load levels n")
    p.add_argument("--epsilon", type=float, help="additive smoothing constant")
    p.add_argument("--rho", type=float, help="log-derivative bound; derives epsilon")
    p.add_argument("--seed", type=int, help="seed for the synthetic profile")
    p.add_argument("--days", type=int, default=7, help="synthetic profile length (default 7)")
    p.add_argument("--profile", help="load profile CSV instead of the synthetic one")
    p.add_argument("--out", default="out", help="output directory (default ./out)")


def _config(args) -> RunConfig:
    return parse_config(args.config, mu=args.mu, horizon=args.horizon, battery_kwh=args.battery_kwh,
                        battery_kw=args.battery_kw, bins_x=args.bins_x, bins_y=args.bins_y,
                        epsilon=args.epsilon, rho=args.rho, seed=args.seed)


def _profile(args, config: RunConfig):
    if args.profile:
        return load_profile_csv(args.profile)
    return generate_synthetic_profile(args.days, config.seed)


def _mus(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_simulate(args) -> int:
    config = _config(args)
    profile = _profile(args, config)
    trace = RUNNERS[args.baseline](profile, config)
    report = compute_metrics(trace, config.moving_window)
    emit_outputs(trace, report, args.out, config)
    print(f"{NAMES[args.baseline]}: I_c={report.i_c:.4f} bits cost={report.total_cost_chf:.4f} CHF "
          f"grid={report.total_energy_kwh:.3f} kWh -> {args.out}")
    return 0


def cmd_sweep(args) -> int:
    config = _config(args)
    profile = _profile(args, config)
    controller = "loadlevel" if args.baseline == "loadlevel" else "none"
    rows = []
    for mu in _mus(args.mus):
        trace = RUNNERS[controller](profile, config.replace(mu=mu))
        report = compute_metrics(trace, config.moving_window)
        rows.append((NAMES[controller], mu, report))
        print(f"mu={mu:g}: I_c={report.i_c:.4f} bits cost={report.total_cost_chf:.4f} CHF", flush=True)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    write_sweep_csv(rows, Path(args.out) / "sweep.csv")
    return 0


def cmd_compare(args) -> int:
    config = _config(args)
    profile = _profile(args, config)
    rows = []
    for key in ("none", "loadlevel", "nobattery"):
        trace = RUNNERS[key](profile, config)
        report = compute_metrics(trace, config.moving_window)
        emit_outputs(trace, report, args.out, prefix=f"{NAMES[key]}_")
        rows.append((NAMES[key], config.mu, report))
        print(f"{NAMES[key]}: I_c={report.i_c:.4f} bits cost={report.total_cost_chf:.4f} CHF", flush=True)
    write_sweep_csv(rows, Path(args.out) / "compare.csv")
    return 0


def cmd_gen_profile(args) -> int:
    config = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_profile_csv(generate_synthetic_profile(args.days, config.seed), out / "profile.csv")
    print(f"wrote {out / 'profile.csv'}")
    return 0


def cmd_verify(args) -> int:
    from .verify import run_checks

    ok = True
    for res in run_checks(args.instances, seed=args.seed or 0):
        ok &= res.passed
        print(f"{'PASS' if res.passed else 'FAIL'} {res.name}: {res.detail}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdpc", description="Privacy-aware battery control simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", help="run one closed-loop simulation")
    _common(p)
    p.add_argument("--baseline", choices=list(RUNNERS), default="none",
                   help="controller: none (privacy controller), loadlevel or nobattery")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("sweep-mu", help="privacy/cost trade-off over several mu values")
    _common(p)
    p.add_argument("--mus", default="0,5,10,15,20,25,30,35,40,45", help="comma-separated mu values")
    p.add_argument("--baseline", choices=["none", "loadlevel"], default="none")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("compare-baselines", help="privacy controller, load leveling and no battery")
    _common(p)
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("gen-profile", help="write the synthetic load profile as CSV")
    _common(p)
    p.set_defaults(func=cmd_gen_profile)
    p = sub.add_parser("verify", help="run the solver and estimator self-checks")
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MDPCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
