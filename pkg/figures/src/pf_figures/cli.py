"""Command line for rendering figures from pfsolve exports.

    pf-figures --in DIR --out DIR --figure trajectory --format png
    pf-figures --in DIR --out DIR --figure all

Exit codes: 0 success (including warned placeholders), 2 missing input
files, 3 schema violations (missing columns, unknown figure).
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

from .io import MissingColumnError
from .render import FIGURES, FigureJob, RenderWarning, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pf-figures", description="Render figures from pfsolve CSV exports"
    )
    parser.add_argument("--in", dest="input_dir", required=True,
                        help="directory holding trajectory.csv/comparison.csv/meta.json")
    parser.add_argument("--out", dest="out_dir", required=True)
    parser.add_argument("--figure", required=True,
                        help=f"one of {', '.join(FIGURES)}, or 'all'")
    parser.add_argument("--format", dest="fmt", default="png", choices=("png", "svg"))
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    names = FIGURES if args.figure == "all" else (args.figure,)
    try:
        for name in names:
            job = FigureJob(
                input_dir=Path(args.input_dir), out_dir=Path(args.out_dir),
                figure=name, fmt=args.fmt,
            )
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", RenderWarning)
                path = render(job)
            for w in caught:
                print(f"warning: {w.message}", file=sys.stderr)
            print(f"wrote {path}")
    except FileNotFoundError as exc:
        print(f"error: missing-input: {exc}", file=sys.stderr)
        return 2
    except (MissingColumnError, ValueError) as exc:
        print(f"error: schema: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
