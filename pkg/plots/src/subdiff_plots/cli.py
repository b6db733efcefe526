"""Command-line figure rendering.

    subdiff-plots render --curves curves.csv --summary summary.json \
        --out figure.png [--algos a,b] [--theory exact,small_mu]
"""

from __future__ import annotations

import argparse
import sys

from subdiff_plots.errors import MissingSeries, SchemaMismatch
from subdiff_plots.render import FigureSpec, render_comparison


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subdiff-plots", description="Render comparison figures")
    sub = parser.add_subparsers(dest="command", required=True)
    render = sub.add_parser("render", help="render a learning-curve comparison figure")
    render.add_argument("--curves", required=True, help="curves.csv from a harness run")
    render.add_argument("--summary", required=True, help="summary.json from the same run")
    render.add_argument("--out", required=True, help="output image path (png or svg)")
    render.add_argument("--algos", default=None, help="comma-separated algorithm names (default: all)")
    render.add_argument(
        "--theory", default="exact,small_mu", help="overlays to draw: exact,small_mu (default both)"
    )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    algorithms = None
    if args.algos is not None:
        algorithms = [tok.strip() for tok in args.algos.split(",") if tok.strip()]
    theory = [tok.strip() for tok in args.theory.split(",") if tok.strip()]
    spec = FigureSpec(
        curves_path=args.curves,
        summary_path=args.summary,
        out_path=args.out,
        algorithms=algorithms,
        theory=theory,
    )
    try:
        path = render_comparison(spec)
    except (SchemaMismatch, MissingSeries) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
