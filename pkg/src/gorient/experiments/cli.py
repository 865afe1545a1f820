"""Command line entry point.

Exit codes: 0 success, 2 unreadable or malformed input, 3 estimation
failure, 4 bad configuration or arguments.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ..errors import GOrientError, NormError, ParseError
from ..estimator import EMConfig
from ..sampler import make_rng, sample_family, sample_uniform_sphere, wrap_to_fz
from ..symgroup import group_by_name, map_to_fundamental_zone, unit_quaternion
from .fit import fit_command
from .io import OrientationFormat, format_orientations, ingest_orientations
from .roc import ROC_METHODS, RocConfig, run_roc
from .sweep import DESK_KAPPAS, DESK_TRIALS, FULL_KAPPAS, FULL_TRIALS, METHODS, SweepConfig, dump_json, run_estimation_sweep

EXIT_OK, EXIT_PARSE, EXIT_ESTIMATION, EXIT_CONFIG = 0, 2, 3, 4


class _ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _global_flags(p, suppress):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0), help="base seed (default 0)")
    p.add_argument("--group", choices=("cubic", "sign"), default=d("cubic"))
    p.add_argument("--family", choices=("vmf", "watson"), default=d("vmf"))
    p.add_argument("--out", type=Path, default=d(None), help="output path (default stdout where possible)")
    p.add_argument("--desk", action="store_true", default=d(False),
                   help="desk-scale sweep defaults (20 trials x 10 kappas)")


def _em_flags(p):
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--restarts", type=int, default=3)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    parser = _Parser(prog="gorient", description="Symmetry-aware orientation estimation and clustering.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="draw a wrapped orientation sample")
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--clusters", type=int, default=1, choices=(1, 2))
    p.add_argument("--mu", type=_floats, default=None, help="q1,q2,q3,q4 of the first mean (default random)")
    p.add_argument("--no-wrap", action="store_true", help="skip the fundamental-zone mapping")
    p.add_argument("--format", choices=("quat", "euler"), default="quat")

    p = sub.add_parser("fit", parents=[common], help="fit one cluster or a mixture with the GLRT")
    p.add_argument("path", type=Path)
    p.add_argument("--format", choices=("quat", "euler"), default="quat")
    p.add_argument("--clusters", type=int, default=1)
    p.add_argument("--alpha-level", type=float, default=0.05)
    _em_flags(p)

    p = sub.add_parser("sweep", parents=[common], help="estimation sweep over kappa")
    p.add_argument("--kappas", type=_floats, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--methods", type=_names, default=METHODS)
    p.add_argument("--data-families", type=_names, default=None,
                   help="generating families (default: --family)")
    _em_flags(p)

    p = sub.add_parser("roc", parents=[common], help="GLRT detection study")
    p.add_argument("--sets", type=int, default=None, help="number of sets (default 200, 1000 without --desk)")
    p.add_argument("--kappa", type=float, default=50.0)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--methods", type=_names, default=ROC_METHODS)
    p.add_argument("--min-separation", type=float, default=0.0)
    p.add_argument("--alpha-level", type=float, default=0.05)
    _em_flags(p)

    p = sub.add_parser("fz-map", parents=[common], help="map orientations into the fundamental zone")
    p.add_argument("path", type=Path)
    p.add_argument("--format", choices=("quat", "euler"), default="quat")
    return parser


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _em_config(args):
    return EMConfig(max_iters=args.max_iters, tol=args.tol, n_restarts=args.restarts, seed=args.seed)


def _simulate(args):
    g = group_by_name(args.group)
    rng = make_rng(args.seed)
    if args.n < 1 or args.kappa < 0 and args.family == "vmf":
        raise _ConfigError("need n >= 1 and, for VMF, kappa >= 0")
    mus = [unit_quaternion(args.mu) if args.mu else sample_uniform_sphere(1, rng)[0]]
    if args.clusters == 2:
        mus.append(sample_uniform_sphere(1, rng)[0])
        z = rng.random(args.n) < 0.5
        x = np.empty((args.n, 4))
        x[z] = sample_family(args.family, mus[0], args.kappa, int(z.sum()), rng)
        x[~z] = sample_family(args.family, mus[1], args.kappa, int((~z).sum()), rng)
    else:
        x = sample_family(args.family, mus[0], args.kappa, args.n, rng)
    if not args.no_wrap:
        x = wrap_to_fz(x, g)
    _emit(format_orientations(x, args.format), args.out)


def _fit(args):
    report = fit_command(args.path, args.family, args.group, args.clusters, args.seed,
                         args.format, args.alpha_level, _em_config(args))
    _emit(dump_json(report), args.out)


def _sweep(args):
    kappas = args.kappas or (DESK_KAPPAS if args.desk else FULL_KAPPAS)
    trials = args.trials or (DESK_TRIALS if args.desk else FULL_TRIALS)
    cfg = SweepConfig(kappa_grid=kappas, trials=trials, n=args.n, seed=args.seed,
                      data_families=args.data_families or (args.family,), methods=args.methods,
                      group=args.group, em_max_iters=args.max_iters, em_tol=args.tol,
                      em_restarts=args.restarts)
    out = args.out or Path("sweep.csv")
    csv_path, json_path = run_estimation_sweep(cfg, out)
    print(f"wrote {csv_path} and {json_path}")


def _roc(args):
    sets = args.sets or (200 if args.desk else 1000)
    cfg = RocConfig(n_sets=sets, n=args.n, kappa=args.kappa, family=args.family, seed=args.seed,
                    methods=args.methods, group=args.group, min_separation=args.min_separation,
                    alpha_level=args.alpha_level, em_max_iters=args.max_iters, em_tol=args.tol,
                    em_restarts=args.restarts)
    out = args.out or Path("roc.csv")
    csv_path, json_path = run_roc(cfg, out)
    print(f"wrote {csv_path} and {json_path}")


def _fz_map(args):
    if args.group != "cubic":
        raise _ConfigError("fz-map needs the cubic group")
    x = ingest_orientations(args.path, args.format)
    _emit(format_orientations(map_to_fundamental_zone(x, group_by_name("cubic")), args.format), args.out)


COMMANDS = {"simulate": _simulate, "fit": _fit, "sweep": _sweep, "roc": _roc, "fz-map": _fz_map}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (ParseError, NormError, OSError) as err:
        print(f"gorient: input error: {err}", file=sys.stderr)
        return EXIT_PARSE
    except GOrientError as err:
        print(f"gorient: estimation failed: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_ESTIMATION
    except (_ConfigError, ValueError) as err:
        print(f"gorient: configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
