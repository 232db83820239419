"""Command line interface.

    mspde <rte|elliptic> <command> [flags]

Commands: local-svd, projection-error, global, diffusion-check (rte only),
compare-msfem (elliptic only). Flags override keys of the JSON config
given with --config. Exit codes: 0 success, 2 configuration error,
3 numerical failure.
"""

import argparse
import sys

from .config import load_config
from .errors import NumericalError, ParameterError
from . import experiments

_COMMANDS = {
    "rte": {
        "local-svd": experiments.run_local_svd,
        "projection-error": experiments.run_projection_error,
        "global": experiments.run_global,
        "diffusion-check": experiments.run_diffusion_check,
    },
    "elliptic": {
        "local-svd": experiments.run_local_svd,
        "projection-error": experiments.run_projection_error,
        "global": experiments.run_global,
        "compare-msfem": experiments.run_compare_msfem,
    },
}


def _int_list(text):
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _float_list(text):
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _add_flags(parser, model):
    parser.add_argument("--config", help="JSON config document")
    parser.add_argument("--eps", type=_float_list, metavar="E[,E...]")
    parser.add_argument("--m", type=int, help="patches per dimension")
    parser.add_argument("--resolution", type=float,
                        help="fine mesh size (dx or h)")
    parser.add_argument("--k-m", dest="k_m", type=_int_list, metavar="K[,K...]")
    parser.add_argument("--seed", dest="seeds", type=_int_list,
                        metavar="S[,S...]")
    parser.add_argument("--buffer-factor", dest="buffer_factor", type=float)
    parser.add_argument("--boundary-data", dest="boundary_data")
    parser.add_argument("--patch", type=_int_list,
                        metavar="M" if model == "rte" else "M1,M2")
    parser.add_argument("--mode", choices=("full", "reduced"))
    parser.add_argument("--reference", choices=("full", "monolithic"))
    parser.add_argument("--boundary-weight", dest="boundary_weight", type=float)
    parser.add_argument("--orthonormalize", dest="orthonormalize",
                        action="store_true", default=None)
    parser.add_argument("--no-orthonormalize", dest="orthonormalize",
                        action="store_false", default=None)
    parser.add_argument("--modes", dest="modes_dump", type=int,
                        help="dump the leading singular-vector fields")
    parser.add_argument("--out", help="output CSV path")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--cache-dir", dest="cache_dir")
    if model == "rte":
        parser.add_argument("--n-v", dest="n_v", type=int)
        parser.add_argument("--collision",
                            choices=("henyey-greenstein", "homogeneous"))
        parser.add_argument("--g", type=float, help="scattering anisotropy")
        parser.add_argument("--sigma", type=float,
                            help="homogeneous cross-section")
    else:
        parser.add_argument("--media",
                            choices=("oscillatory", "high-contrast", "constant"))
        parser.add_argument("--a0", type=float, help="constant media value")
        parser.add_argument("--element", choices=("p1", "q1"))
        parser.add_argument("--boundary-full", dest="boundary_full",
                            action="store_true", default=None)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mspde",
        description="randomized domain decomposition experiments")
    models = parser.add_subparsers(dest="model", required=True)
    for model, commands in _COMMANDS.items():
        mp = models.add_parser(model)
        sub = mp.add_subparsers(dest="command", required=True)
        for command in commands:
            cp = sub.add_parser(command)
            _add_flags(cp, model)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items()
                 if k not in ("model", "command", "config") and v is not None}
    try:
        cfg = load_config(args.model, json_path=args.config,
                          overrides=overrides)
        paths = _COMMANDS[args.model][args.command](cfg)
    except ParameterError as exc:
        print(f"mspde: config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"mspde: numerical failure: {exc}", file=sys.stderr)
        return 3
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
