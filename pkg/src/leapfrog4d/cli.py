"""Command-line interface.

Subcommands:
  run          integrate one preset/config and write records + summary
  limit-study  compare the scaled relativistic method against the classic
               pusher for a list of epsilon values
  converge     measure observed convergence orders against the reference
               oracle

Exit codes: 0 success, 2 configuration/validation error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import json
import re
import sys

import numpy as np

from . import backend
from .diagnostics import convergence_order
from .experiment import (ConfigError, ExperimentConfig, PRESETS,
                         format_float, run_experiment, run_limit_study)
from .integrators import NoConvergenceError, StepSizeError
from .minkowski import Position4, SingularMatrixError, Velocity4

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _parse_perturb(text: str) -> dict:
    m = re.fullmatch(r"k\*([0-9.eE+-]+):(\d+)", text)
    if not m:
        raise ConfigError(
            f"bad perturbation spec {text!r}; expected k*<base>:<count>, "
            f"e.g. k*1e-15:5")
    return {"base": float(m.group(1)), "count": int(m.group(2))}


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok]
    except ValueError:
        raise ConfigError(f"bad float list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leapfrog4d",
        description="Leapfrog integrators for relativistic charged-particle "
                    "dynamics (4D space-time form)")
    parser.add_argument("--backend-info", action="store_true",
                        help="print the selected kernel backend and exit")
    sub = parser.add_subparsers(dest="command")

    run = sub.add_parser("run", help="integrate one configuration")
    run.add_argument("--config", help="JSON config file (flags override it)")
    run.add_argument("--preset", choices=sorted(PRESETS))
    run.add_argument("--method")
    run.add_argument("--h", type=float)
    run.add_argument("--tau-end", type=float)
    run.add_argument("--record-every", type=int)
    run.add_argument("--out")
    run.add_argument("--tol", type=float)
    run.add_argument("--max-iter", type=int)
    run.add_argument("--scheme", choices=["fixed-point", "newton"])
    run.add_argument("--perturb", help="k*<base>:<count>, e.g. k*1e-15:5")
    run.add_argument("--noether", action="store_true",
                     help="record the rotation invariant about x3")

    limit = sub.add_parser("limit-study",
                           help="epsilon-scaling comparison with the pusher")
    limit.add_argument("--epsilons", required=True,
                       help="comma-separated values in (0, 0.5]; 0 allowed")
    limit.add_argument("--h", type=float, required=True)
    limit.add_argument("--tau-end", type=float, required=True)
    limit.add_argument("--preset", choices=sorted(PRESETS), default="example1")
    limit.add_argument("--out", help="optional CSV of (epsilon, sup_diff)")

    conv = sub.add_parser("converge",
                          help="observed orders against the reference oracle")
    conv.add_argument("--method", required=True)
    conv.add_argument("--h-list", required=True,
                      help="comma-separated decreasing step sizes (>= 3)")
    conv.add_argument("--preset", choices=sorted(PRESETS), default="example1")
    conv.add_argument("--tau-end", type=float, default=10.0)
    conv.add_argument("--h-ref", type=float, default=1e-4)
    conv.add_argument("--out", help="optional CSV of (h, error, order)")
    return parser


def _cmd_run(args) -> int:
    data = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file is not valid JSON: {e}")
    overrides = {
        "preset": args.preset, "method": args.method, "h": args.h,
        "tau_end": args.tau_end, "record_every": args.record_every,
        "out": args.out, "tol": args.tol, "max_iter": args.max_iter,
        "scheme": args.scheme,
    }
    for key, val in overrides.items():
        if val is not None:
            data[key] = val
    if args.perturb:
        data["perturb"] = _parse_perturb(args.perturb)
    if args.noether:
        data["record_noether"] = True
    cfg = ExperimentConfig.from_dict(data)
    summary = run_experiment(cfg)
    json.dump(summary, sys.stdout, sort_keys=True, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def _cmd_limit_study(args) -> int:
    out = run_limit_study({
        "epsilons": _parse_floats(args.epsilons),
        "h": args.h, "tau_end": args.tau_end, "preset": args.preset,
    })
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("epsilon,sup_diff\n")
            for row in out["table"]:
                fh.write(f"{format_float(row['epsilon'])},"
                         f"{format_float(row['sup_diff'])}\n")
    json.dump(out, sys.stdout, sort_keys=True, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def _cmd_converge(args) -> int:
    h_list = _parse_floats(args.h_list)
    preset = PRESETS[args.preset]
    model = preset.field_factory()
    try:
        rows = convergence_order(
            args.method, model, Position4(0.0, np.asarray(preset.x0)),
            Velocity4.on_shell(np.asarray(preset.u0)), args.tau_end, h_list,
            h_ref=args.h_ref)
    except ValueError as e:
        raise ConfigError(str(e))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("h,error,observed_order\n")
            for h, err, order in rows:
                fh.write(f"{format_float(h)},{format_float(err)},"
                         f"{format_float(order)}\n")
    json.dump({"method": args.method, "preset": args.preset,
               "tau_end": args.tau_end,
               "rows": [{"h": h, "error": e, "observed_order": o}
                        for h, e, o in rows]},
              sys.stdout, sort_keys=True, indent=2, allow_nan=True)
    sys.stdout.write("\n")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.backend_info:
        print(backend.BACKEND)
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "limit-study":
            return _cmd_limit_study(args)
        return _cmd_converge(args)
    except (ConfigError, StepSizeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoConvergenceError, SingularMatrixError) as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
