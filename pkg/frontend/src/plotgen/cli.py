"""plotgen command line.

  plotgen energy --csv f1.csv f2.csv f3.csv --c 2 --out fig1.png
  plotgen converge --csv conv.csv --out conv.png

Exit codes: 0 success, 2 bad input (missing file, schema mismatch).
"""
from __future__ import annotations

import argparse
import sys

from .figures import PanelSpec, render_convergence, render_energy_panels
from .records import SchemaError, read_convergence


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plotgen")
    sub = parser.add_subparsers(dest="command", required=True)

    energy = sub.add_parser("energy",
                            help="stacked energy-error panels, one per CSV")
    energy.add_argument("--csv", nargs="+", required=True)
    energy.add_argument("--c", type=float, required=True,
                        help="envelope constant; panel y-range is +-c h^2")
    energy.add_argument("--out", required=True)
    energy.add_argument("--title", default="")

    conv = sub.add_parser("converge", help="log-log convergence plot")
    conv.add_argument("--csv", required=True)
    conv.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "energy":
            spec = PanelSpec(csv_paths=tuple(args.csv),
                             envelope_constant=args.c, title=args.title)
            render_energy_panels(spec, args.out)
        else:
            table = read_convergence(args.csv)
            slope = render_convergence(table, args.out)
            if slope is not None:
                print(f"fitted slope: {slope:.4f}")
    except (FileNotFoundError, SchemaError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
