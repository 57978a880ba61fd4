"""Command-line entry point (``mvanc``).

Verbs::

    mvanc run <preset|config.yaml> [--seed N] [--samples N] [--mu-scale X]
              [--algorithm mcalms|mcfxlms] [--threads N] [--stride N]
              [--plant-seed N | --plant plant.json] [--out DIR] [--no-plots]
    mvanc complexity [--nx 512] [--nh 128] [--L 256] [--ch-max 10] [--out DIR]
    mvanc spectrum SNAPSHOT [SNAPSHOT ...] [--bank NAME] [--band LO HI] [--out DIR]
    mvanc show-config [preset]
    mvanc list-presets

The output root defaults to ``$MVANC_OUT`` or ``./mvanc-out``.

Exit codes: 0 success, 2 usage/configuration error, 3 divergence, 4 I/O or
parse error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import reports, snapshots
from .errors import ConfigurationError, DivergenceError, SnapshotParseError
from .pipeline import ALGORITHMS

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4
OUT_ENV = "MVANC_OUT"

log = logging.getLogger("mvanc")


def default_out() -> Path:
    return Path(os.environ.get(OUT_ENV, "mvanc-out"))


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mvanc", description="Multichannel virtual-sensing ANC simulations.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run a preset or YAML config end to end")
    r.add_argument("target", help="preset name or path to a YAML config")
    r.add_argument("--seed", type=int, help="noise seed (default: the preset's)")
    r.add_argument("--samples", type=_positive_int, help="samples per stage")
    r.add_argument("--mu-scale", type=_positive_float, help="step-size scale")
    r.add_argument("--algorithm", choices=ALGORITHMS, action="append",
                   help="restrict to this algorithm (repeatable)")
    r.add_argument("--threads", type=_positive_int, default=1, help="algorithms run in parallel")
    r.add_argument("--stride", type=_positive_int, default=16, help="CSV row decimation")
    plant = r.add_mutually_exclusive_group()
    plant.add_argument("--plant-seed", type=int, help="seed of the synthetic acoustic paths")
    plant.add_argument("--plant", type=Path, help="pathset snapshot to use instead of synthesising")
    r.add_argument("--out", type=Path, help=f"output root (default ${OUT_ENV} or ./mvanc-out)")
    r.add_argument("--no-plots", action="store_true")

    c = sub.add_parser("complexity", help="operation-count sweep over channel counts")
    c.add_argument("--nx", type=_positive_int, default=512)
    c.add_argument("--nh", type=_positive_int, default=128)
    c.add_argument("--L", dest="L", type=_positive_int, default=256)
    c.add_argument("--ch-max", type=_positive_int, default=10)
    c.add_argument("--reconcile", nargs=3, type=_positive_int, metavar=("J", "K", "M"),
                   help="also print the term-by-term reconciliation for one system size")
    c.add_argument("--out", type=Path)
    c.add_argument("--no-plots", action="store_true")

    s = sub.add_parser("spectrum", help="magnitude responses of snapshot filter banks")
    s.add_argument("snapshots", nargs="+", type=Path)
    s.add_argument("--bank", help="bank name to select from every snapshot")
    s.add_argument("--band", nargs=2, type=float, metavar=("LO", "HI"), help="band to shade")
    s.add_argument("--sample-rate", type=_positive_float, default=16000.0)
    s.add_argument("--out", type=Path)
    s.add_argument("--no-plots", action="store_true")

    sc = sub.add_parser("show-config", help="print a preset (or the defaults) as YAML")
    sc.add_argument("preset", nargs="?", default="fig6-comparison")

    sub.add_parser("list-presets", help="list the built-in presets")
    return p


def _cmd_run(args) -> int:
    from .experiments import override, run_experiment
    from .presets import resolve

    preset = override(resolve(args.target), seed=args.seed, n_samples=args.samples,
                      mu_scale=args.mu_scale, algorithms=args.algorithm, plant_seed=args.plant_seed)
    plant = snapshots.load_pathset(args.plant) if args.plant else None
    out = args.out or default_out()
    summary = run_experiment(preset, out, stride=args.stride, threads=args.threads,
                             plant=plant, plots=not args.no_plots)
    for alg, m in summary["algorithms"].items():
        nr = ", ".join(f"{v:.1f}" for v in m["control_virtual_nr_db"])
        print(f"{alg}: steady-state virtual NR [{nr}] dB")
    if "algorithm_gap_db" in summary:
        print(f"algorithm gap {summary['algorithm_gap_db']:.2f} dB")
    for key, chk in summary["expectations"].items():
        status = "n/a" if chk["passed"] is None else ("pass" if chk["passed"] else "FAIL")
        value = "-" if chk["value"] is None else f"{chk['value']:.2f}"
        print(f"  {key}: {value} (threshold {chk['threshold']}) {status}")
    print(f"wrote {out / preset.name}")
    return EXIT_OK


def _cmd_complexity(args) -> int:
    out = (args.out or default_out()) / "complexity"
    path = reports.complexity_report(args.nx, args.nh, args.L, args.ch_max, out, plot=not args.no_plots)
    print(path.read_text(), end="")
    if args.reconcile:
        J, K, M = args.reconcile
        text = reports.reconciliation_text(J, K, M, args.nx, args.nh, args.L)
        (out / "reconciliation.txt").write_text(text)
        print(text, end="")
    return EXIT_OK


def _cmd_spectrum(args) -> int:
    out = (args.out or default_out()) / "spectrum"
    path = reports.spectrum_report(args.snapshots, out, bank=args.bank, band=args.band,
                                   sample_rate=args.sample_rate, plot=not args.no_plots)
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_show_config(args) -> int:
    from .presets import dump_preset, resolve

    print(dump_preset(resolve(args.preset)), end="")
    return EXIT_OK


def _cmd_list_presets(args) -> int:
    from .presets import PRESETS

    for name, p in PRESETS.items():
        print(f"{name:24s} {p.description}")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "complexity": _cmd_complexity, "spectrum": _cmd_spectrum,
            "show-config": _cmd_show_config, "list-presets": _cmd_list_presets}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except ConfigurationError as exc:
        print(f"mvanc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"mvanc: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (SnapshotParseError, OSError) as exc:
        print(f"mvanc: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
