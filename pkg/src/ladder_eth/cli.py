"""Command line entry point: ``ladder-eth <subcommand> [flags]``."""
from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError
from .harness import ExperimentConfig, emit, run

SUBCOMMANDS = {
    "eth-exact": ("eth-exact", "exact shell statistics of D from full diagonalization"),
    "eth-typ": ("eth-typicality", "the same statistics from pure-state dynamics"),
    "mod-relax": ("mod-relax", "relaxation of <D(t)> from tuned MOD states and Lambda"),
    "nnsd": ("nnsd", "level-spacing distribution and Brody fit"),
    "scan": ("scan", "v(N), Lambda(N) and gamma over the kappa x N_R grid"),
}


def _common(p: argparse.ArgumentParser):
    p.add_argument("--nr", type=int, nargs="+", required=True, metavar="N_R",
                   help="short-leg lengths (N = 3 N_R - 1)")
    p.add_argument("--kappa", type=float, nargs="+", required=True, help="rung couplings")
    p.add_argument("--delta", type=float, default=0.1, help="XXZ anisotropy (default 0.1)")
    p.add_argument("--ebar", type=float, default=0.0, help="shell centre (default 0)")
    p.add_argument("--sigmae", type=float, default=0.6, help="shell width (default 0.6)")
    p.add_argument("--seed", type=int, default=0, help="first random seed (default 0)")
    p.add_argument("--samples", type=int, default=None,
                   help="number of consecutive seeds (default 5 for eth-typ, 3 otherwise)")
    p.add_argument("--tmax", type=float, default=400.0, help="trajectory length (default 400)")
    p.add_argument("--dt", type=float, default=0.5, help="time step (default 0.5)")
    p.add_argument("--two-sz", type=int, default=None, dest="two_sz",
                   help="override the magnetization sector (2 S^z)")
    p.add_argument("--half-width", type=float, default=2.0, dest="half_width",
                   help="NNSD energy window half width (default 2)")
    p.add_argument("--cache", default=None, help="spectrum cache directory (default OUT/cache)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ladder-eth",
        description="ETH and equilibration diagnostics for asymmetric XXZ spin ladders. "
                    "Worker threads follow LADDER_ETH_THREADS; LADDER_ETH_BACKEND=numpy "
                    "disables the compiled kernels.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in SUBCOMMANDS.items():
        _common(sub.add_parser(name, help=help_text, description=help_text))
    return parser


def config_from_args(args) -> ExperimentConfig:
    mode = SUBCOMMANDS[args.command][0]
    n = args.samples if args.samples is not None else (5 if mode == "eth-typicality" else 3)
    if n < 1:
        raise ConfigError("--samples must be at least 1")
    return ExperimentConfig(
        mode=mode, kappas=tuple(args.kappa), n_rights=tuple(args.nr),
        seeds=tuple(range(args.seed, args.seed + n)), delta=args.delta, e_bar=args.ebar,
        sigma_e=args.sigmae, dt=args.dt, t_max=args.tmax, avg_window=(50.0, min(400.0, args.tmax)),
        nnsd_half_width=args.half_width, two_sz=args.two_sz, out=args.out, cache_dir=args.cache,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args).validate()
    except ConfigError as exc:
        print(f"ladder-eth: configuration error: {exc}", file=sys.stderr)
        return 2
    result = run(cfg)
    written = emit(result, cfg.out)
    failed = [r for r in result.records if not r.ok]
    print(f"{len(result.records)} records, {len(failed)} failed; wrote {len(written)} files to {cfg.out}")
    for r in failed:
        print(f"  FAILED {r.kind} {r.inputs}: {r.message}", file=sys.stderr)
    return 0 if not failed else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
