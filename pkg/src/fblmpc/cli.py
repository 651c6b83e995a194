"""Command-line entry point: run, sweep, audit, baseline."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .baselines import BaselineKind, FixedPath, fixed_path_rates, qos_satisfaction, run_offline_joint, run_offline_mpc
from .experiments import MISSION_SCHEMES, PATH_SCHEMES, SWEEP_PARAMS, SweepSpec, emit, run_sweep
from .mpc import run_mission
from .scenario import ConfigError, default_scenario, load_scenario, make_streams, place_users


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int = 1):
        super().__init__(message)
        self.kind, self.code = kind, code


def _config(args):
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = load_scenario(fh.read())
        except OSError as exc:
            raise CliError("config-unreadable", str(exc), 2)
    else:
        cfg = default_scenario()
    if args.disturbance is not None:
        cfg = cfg.replace(disturbance=args.disturbance)
    return cfg


def _write(args, name: str, payload: str):
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(payload)
        return path
    sys.stdout.write(payload if payload.endswith("\n") else payload + "\n")
    return None


def _mission(cfg, scheme, seed):
    st = make_streams(seed)
    users = place_users(cfg, st.users)
    if scheme == "online-mpc":
        return run_mission(cfg, users, st.disturbance, st.nlos_key)
    if scheme == "offline-mpc":
        return run_offline_mpc(cfg, users, st.disturbance, st.nlos_key)
    if scheme == "offline-joint":
        return run_offline_joint(cfg, users, st.disturbance, st.nlos_key)
    raise CliError("unknown-scheme", f"{scheme!r} is not a mission scheme; choose from {MISSION_SCHEMES}", 2)


def _emit_trace(args, trace):
    if args.format == "csv":
        path = _write(args, "trace.csv", trace.to_csv())
    else:
        path = _write(args, "summary.json", trace.to_json())
    if path:
        print(json.dumps({"status": "ok", "written": [path], "summary": trace.summary()}, sort_keys=True))


def cmd_run(args):
    cfg = _config(args)
    _emit_trace(args, _mission(cfg, args.scheme or "online-mpc", args.seed))


def cmd_baseline(args):
    cfg = _config(args)
    scheme = args.scheme or "offline-mpc"
    if scheme in MISSION_SCHEMES:
        _emit_trace(args, _mission(cfg, scheme, args.seed))
        return
    if scheme not in PATH_SCHEMES:
        raise CliError("unknown-scheme", f"{scheme!r}; choose from {MISSION_SCHEMES + PATH_SCHEMES}", 2)
    st = make_streams(args.seed)
    users = place_users(cfg, st.users)
    ref = run_mission(cfg.replace(disturbance=0.0), users, st.disturbance, st.nlos_key)
    rates = fixed_path_rates(BaselineKind(scheme), cfg, users, FixedPath.from_trace(ref), st.nlos_key)
    doc = {"scheme": scheme, "seed": args.seed, "steps": int(rates.shape[0]),
           "sum_rate": float(rates.sum(axis=1).mean()), "min_rate": float(rates.min(axis=1).mean()),
           "satisfaction_pct": qos_satisfaction(rates, cfg.r_min)}
    if args.format == "csv":
        lines = ["step," + ",".join(f"rate_{k}" for k in range(rates.shape[1]))]
        lines += [f"{t}," + ",".join(repr(float(x)) for x in row) for t, row in enumerate(rates)]
        _write(args, "baseline.csv", "\n".join(lines) + "\n")
    else:
        _write(args, "baseline.json", json.dumps(doc, indent=2, sort_keys=True))


def cmd_sweep(args):
    cfg = _config(args)
    if not args.param:
        raise CliError("bad-arguments", "--param is required for sweep", 2)
    values = [float(v) for v in args.values.split(",")] if args.values else []
    schemes = args.scheme.split(",") if args.scheme else (
        ["bf-proposed"] if args.fixed_trajectory else ["online-mpc"])
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [args.seed]
    try:
        spec = SweepSpec(args.param, tuple(values), tuple(schemes), tuple(seeds), args.fixed_trajectory)
    except ValueError as exc:
        raise CliError("bad-sweep", str(exc), 2)
    res = run_sweep(spec, cfg, workers=args.workers)
    formats = [args.format] if args.format else ["csv", "json"]
    if args.out:
        paths = emit(res, args.out, formats)
        print(json.dumps({"status": "ok", "written": paths, "failures": len(res.failures)}))
    else:
        from .experiments import to_csv, to_json
        sys.stdout.write(to_csv(res) if formats[0] == "csv" else to_json(res) + "\n")


def cmd_audit(args):
    from .audits import run_audits
    cfg = _config(args)
    summary = run_audits(cfg, args.seed, draws=args.draws, samples_per_draw=args.samples,
                         mission_seeds=(args.seed,) if args.mission_curvature else ())
    _write(args, "audit.json", summary.to_json())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fblmpc", description="UAV finite-blocklength MPC simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", metavar="PATH", help="scenario config document")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--disturbance", type=float, metavar="METERS", help="disturbance bound override")
        sp.add_argument("--scheme", metavar="NAME")
        sp.add_argument("--out", metavar="DIR", help="output directory (stdout when omitted)")
        sp.add_argument("--format", choices=("csv", "json"), default=None)

    sp = sub.add_parser("run", help="closed-loop mission")
    common(sp)
    sp.set_defaults(func=cmd_run, format_default="json")
    sp = sub.add_parser("baseline", help="open-loop schemes or fixed-path beamformers")
    common(sp)
    sp.set_defaults(func=cmd_baseline, format_default="json")
    sp = sub.add_parser("sweep", help="parameter sweep")
    common(sp)
    sp.add_argument("--param", choices=sorted(SWEEP_PARAMS))
    sp.add_argument("--values", help="comma-separated grid")
    sp.add_argument("--seeds", help="comma-separated seeds (default: --seed)")
    sp.add_argument("--fixed-trajectory", action="store_true")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_sweep, format_default=None)
    sp = sub.add_parser("audit", help="surrogate and curvature audits")
    common(sp)
    sp.add_argument("--draws", type=int, default=20)
    sp.add_argument("--samples", type=int, default=500, help="beam samples per draw")
    sp.add_argument("--mission-curvature", action="store_true",
                    help="take curvature pairs from a flown mission instead of random draws")
    sp.set_defaults(func=cmd_audit, format_default="json")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code not in (0, None):
            print(json.dumps({"status": "error", "kind": "bad-arguments", "message": "invalid command line"}),
                  file=sys.stderr)
        return int(exc.code or 0)
    if args.format is None and args.format_default:
        args.format = args.format_default
    try:
        args.func(args)
    except CliError as exc:
        print(json.dumps({"status": "error", "kind": exc.kind, "message": str(exc)}), file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(json.dumps({"status": "error", "kind": "config", "message": str(exc),
                          "violations": exc.violations}), file=sys.stderr)
        return 2
    except Exception as exc:
        print(json.dumps({"status": "error", "kind": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
