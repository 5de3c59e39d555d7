"""Command-line figure renderer: kind, input CSVs, output image."""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, FigureSpec, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mcplots", description="Render figures from experiment CSV files."
    )
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("inputs", nargs="+", help="input CSV files")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--log", action="store_true",
                        help="logarithmic loss axis variant")
    args = parser.parse_args(argv)
    try:
        spec = FigureSpec(args.kind, list(args.inputs), args.out, args.log)
        render(spec)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
