"""Command-line figure rendering: one invocation per figure id."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .render import RENDERERS, FigureDataError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dtmec-figures",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("figure_id", choices=sorted(RENDERERS))
    parser.add_argument("--bundle", required=True,
                        help="directory holding the experiment CSV bundle")
    parser.add_argument("--out", required=True, help="output image path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        path = render(args.figure_id, args.bundle, args.out)
    except FigureDataError as exc:
        print(f"figure error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
