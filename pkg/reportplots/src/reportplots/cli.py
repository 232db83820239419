"""mspde-plot: turn mspde CSV outputs into figures.

    mspde-plot <kind> --in <csv> [--in <csv> ...] --out <png>

Kinds: sv-decay, error-vs-k, field-heatmap, mode-gallery.
"""

import argparse
import sys

from .plots import KINDS, PlotSpec, SchemaError, render


def build_parser():
    parser = argparse.ArgumentParser(prog="mspde-plot",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--in", dest="inputs", action="append", required=True,
                        metavar="CSV", help="input CSV (repeatable)")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--log-x", action="store_true")
    parser.add_argument("--title", default="")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        spec = PlotSpec(kind=args.kind, inputs=args.inputs, output=args.out,
                        log_x=args.log_x, title=args.title)
        path = render(spec)
    except (SchemaError, ValueError, OSError) as exc:
        print(f"mspde-plot: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
