"""Command-line driver: ``sicnn {check,simulate,ap,stability,scan}``.

Exit codes: 0 pass, 1 certification/verification failure, 2 config error,
3 solver failure.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import config as cfg
from .activation import validate_bounds
from .analysis import (
    CertificationError,
    bounded_solution,
    pi_residual,
    stability_envelope,
    translation_scan,
)
from .integrator import HistoryLookupError, PicardConvergenceError, solve_ivp
from .network import check_conditions
from .schedule import ScheduleRangeError
from .svg import line_plot

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _emit(report: dict, args) -> None:
    text = json.dumps(_jsonable(report), indent=2, sort_keys=False) + "\n"
    sys.stdout.write(text)
    if getattr(args, "report", None):
        Path(args.report).write_text(text)


def _apply_override(raw: dict, assignment: str) -> None:
    key, sep, value = assignment.partition("=")
    if not sep or not key:
        raise cfg.ConfigError(f"--set expects KEY=VALUE, got {assignment!r}")
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    node = raw
    parts = key.split(".")
    for part in parts[:-1]:
        if not isinstance(node, dict):
            raise cfg.ConfigError(f"cannot set {key!r}")
        node = node.setdefault(part, {})
    node[parts[-1]] = parsed


def _load(args) -> cfg.RunConfig:
    if args.config and args.preset:
        raise cfg.ConfigError("give either --config or --preset, not both")
    if args.preset:
        raw = cfg.preset(args.preset)
    elif args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise cfg.ConfigError(f"cannot read {args.config}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise cfg.ConfigError(f"{args.config}: invalid JSON ({exc})") from None
    else:
        raise cfg.ConfigError("one of --config or --preset is required")
    raw = copy.deepcopy(raw)
    for assignment in args.set or ():
        _apply_override(raw, assignment)
    return cfg.build(raw)


def _positive(name, value):
    if value is not None and not value > 0:
        raise cfg.ConfigError(f"--{name} must be positive")


def _write_plot(path, traj, stride, t0=None, t1=None, title=""):
    times = traj.sample_times(stride, t0, t1)
    Path(path).write_text(line_plot(times, traj.eval(times), traj.net.cell_labels, title))


def cmd_check(args, rc: cfg.RunConfig) -> int:
    report = check_conditions(rc.net, rc.schedule, rc.act)
    bounds = validate_bounds(rc.act, samples=args.samples, amplitude=args.amplitude,
                             tau=rc.net.tau, seed=rc.seed)
    out = report.to_dict()
    out["activation_sampling"] = bounds.to_dict()
    out["pass"] = report.all_passed
    _emit(out, args)
    return EXIT_PASS if report.all_passed else EXIT_FAIL


def cmd_simulate(args, rc: cfg.RunConfig) -> int:
    if rc.setup is None:
        raise cfg.ConfigError("simulate needs an 'initial' block (sigma, phi)")
    if not args.t_end > rc.setup.sigma:
        raise cfg.ConfigError("--t-end must exceed sigma")
    traj = solve_ivp(rc.net, rc.schedule, rc.act, rc.setup, args.t_end, rc.opts)
    if args.csv and args.csv != "-":
        traj.write_csv(args.csv, args.stride)
    else:
        traj.write_csv(sys.stdout, args.stride)
    if args.plot:
        _write_plot(args.plot, traj, min(args.stride, 0.02), title="SICNN solution")
    summary = {
        "sigma": traj.sigma,
        "t_end": traj.end,
        "regime": traj.regime,
        "intervals": len(traj.intervals),
        "max_picard_iterations": max(s.iterations for s in traj.intervals),
        "sup_norm": traj.sup_norm(),
    }
    sys.stderr.write(json.dumps(_jsonable(summary)) + "\n")
    return EXIT_PASS


def cmd_ap(args, rc: cfg.RunConfig) -> int:
    if not args.t1 > args.t0:
        raise cfg.ConfigError("--t1 must exceed --t0")
    traj = bounded_solution(rc.net, rc.schedule, rc.act, args.t0, args.t1, args.accuracy, rc.opts)
    H = traj.report.constants.H
    sup = traj.sup_norm(stride=0.01)
    res = pi_residual(rc.net, rc.act, traj, t_from=min(args.t0 + 5.0, 0.5 * (args.t0 + args.t1)))
    ok = sup <= H + args.accuracy
    if args.csv:
        traj.write_csv(args.csv, args.stride)
    if args.plot:
        _write_plot(args.plot, traj, min(args.stride, 0.02), title="Bounded (almost periodic) solution")
    _emit({
        "window": [args.t0, args.t1],
        "t_back": traj.t_back,
        "accuracy": args.accuracy,
        "H": H,
        "sup_norm": sup,
        "bound": H + args.accuracy,
        "pi_residual": res,
        "pass": ok,
    }, args)
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_stability(args, rc: cfg.RunConfig) -> int:
    if rc.setup is None:
        raise cfg.ConfigError("stability needs an 'initial' block (sigma, phi)")
    if args.delta < 0:
        raise cfg.ConfigError("--delta must be non-negative")
    rep = stability_envelope(rc.net, rc.schedule, rc.act, rc.setup, args.delta, args.horizon, rc.opts)
    if args.csv:
        with open(args.csv, "w") as fh:
            rep.write_csv(fh)
    out = rep.to_dict()
    out["guaranteed_rate"] = rep.rate
    _emit(out, args)
    return EXIT_PASS if rep.passed else EXIT_FAIL


def cmd_scan(args, rc: cfg.RunConfig) -> int:
    if args.alpha_max < args.alpha_min:
        raise cfg.ConfigError("--alpha-max must be >= --alpha-min")
    t1 = args.t0 + args.window + max(args.alpha_max, 0.0)
    t_start = args.t0 + min(args.alpha_min, 0.0)
    traj = bounded_solution(rc.net, rc.schedule, rc.act, t_start, t1, args.accuracy, rc.opts)
    rep = translation_scan(traj, args.eps, (args.alpha_min, args.alpha_max), args.alpha_step,
                           (args.t0, args.t0 + args.window))
    seq = None
    if rc.schedule.p_min <= -210 and rc.schedule.p_max >= 4210:
        seq = rc.schedule.almost_period_scan(args.eps, (-200, 200), range(-3, 4), k_range=(1, 4000))
    ok = bool(rep.accepted) and math.isfinite(rep.max_gap)
    out = {"translation": rep.to_dict(), "pass": ok}
    if seq is not None:
        out["schedule_almost_periods"] = seq.to_dict()
    _emit(out, args)
    return EXIT_PASS if ok else EXIT_FAIL


COMMANDS = {
    "check": cmd_check,
    "simulate": cmd_simulate,
    "ap": cmd_ap,
    "stability": cmd_stability,
    "scan": cmd_scan,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sicnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--preset", choices=sorted(cfg.PRESETS), help="built-in configuration")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry, e.g. activation.M=15 (value parsed as JSON)")
        p.add_argument("--report", help="also write the JSON report to this file")
        return p

    p = common(sub.add_parser("check", help="certify the existence/stability conditions"))
    p.add_argument("--samples", type=int, default=2000, help="random segment pairs for the f check")
    p.add_argument("--amplitude", type=float, default=0.2, help="sup norm of sampled segments")

    p = common(sub.add_parser("simulate", help="integrate the initial value problem"))
    p.add_argument("--t-end", type=float, default=20.0)
    p.add_argument("--stride", type=float, default=0.01, help="CSV sampling stride")
    p.add_argument("--csv", help="CSV output path (default: stdout)")
    p.add_argument("--plot", help="SVG output path")

    p = common(sub.add_parser("ap", help="approximate the bounded / almost periodic solution"))
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t1", type=float, default=40.0)
    p.add_argument("--accuracy", type=float, default=1e-6)
    p.add_argument("--stride", type=float, default=0.01)
    p.add_argument("--csv")
    p.add_argument("--plot")

    p = common(sub.add_parser("stability", help="verify the exponential stability envelope"))
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--csv", help="write t, ||w||, envelope")

    p = common(sub.add_parser("scan", help="scan for eps-translation numbers"))
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--alpha-min", type=float, default=0.0)
    p.add_argument("--alpha-max", type=float, default=100.0)
    p.add_argument("--alpha-step", type=float, default=0.05)
    p.add_argument("--window", type=float, default=30.0, help="length of the comparison window")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--accuracy", type=float, default=1e-6)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        for name in ("t_end", "stride", "horizon", "accuracy", "eps", "alpha_step", "window",
                     "amplitude", "samples"):
            _positive(name.replace("_", "-"), getattr(args, name, None))
        rc = _load(args)
    except cfg.ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args, rc)
    except cfg.ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except CertificationError as exc:
        _emit({"pass": False, "error": str(exc), "failed": exc.failed,
               "conditions": exc.report.to_dict()}, args)
        return EXIT_FAIL
    except (PicardConvergenceError, HistoryLookupError, ScheduleRangeError, FloatingPointError) as exc:
        sys.stderr.write(f"solver failure: {exc}\n")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
