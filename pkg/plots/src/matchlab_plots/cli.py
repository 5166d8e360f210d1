"""CLI: plot --kind pareto --in pareto.csv --out fig3.png

Exit codes: 0 on success, 2 on schema mismatch or bad arguments,
1 on other errors.
"""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, FigureSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plot")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--in", dest="input", required=True, help="input CSV")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--title", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        info = render(FigureSpec((args.input,), args.kind, args.out, args.title))
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {info.output} ({info.series} series, {info.points} points)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
