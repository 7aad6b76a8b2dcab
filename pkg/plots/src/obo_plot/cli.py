"""obo-plot: batch figure rendering from experiment artifacts."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import FIGURES, PlotSpec, render
from .schema import SchemaError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="obo-plot", description="Render figures from obo run artifacts."
    )
    parser.add_argument("--figure", required=True, choices=FIGURES)
    parser.add_argument("--in", dest="input_dir", required=True,
                        help="directory holding <run>.csv/<run>.json pairs")
    parser.add_argument("--out", required=True, help="output image path (.png or .svg)")
    parser.add_argument("--log-y", action="store_true", help="log-scale the y axis")
    args = parser.parse_args(argv)

    try:
        spec = PlotSpec(
            input_dir=Path(args.input_dir),
            figure=args.figure,
            out_path=Path(args.out),
            log_y=args.log_y,
        )
        out = render(spec)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
