"""Command-line entry point: figplots <figure_id> --csv <path> --out <path>."""

from __future__ import annotations

import argparse
import sys

from .render import RenderError, render
from .spec import FIGURES


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="figplots", description="Render a fluctlab CSV into its figure analog."
    )
    parser.add_argument("figure_id", choices=sorted(FIGURES))
    parser.add_argument("--csv", required=True, help="input result table")
    parser.add_argument("--out", required=True, help="output PNG path")
    args = parser.parse_args(argv)
    try:
        render(args.csv, FIGURES[args.figure_id], args.out)
    except (RenderError, FileNotFoundError) as exc:
        print(f"figplots error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
