"""Command line entry point: ``hystera <preset> --config <path> [--jobs N] [--out DIR]``.

Exit codes
----------
0
    The run finished and every check passed.
1
    The solver aborted (step halving exhausted or a numeric failure).
2
    A check failed, or the configuration was rejected.
"""

import argparse
import os
import sys

from .config import PRESETS, parse_config
from .errors import ConfigError, NumericError, SolverAbort
from .presets import PRESET_RUNNERS, run_tau_sweep, write_rho_csv, write_run_files

EXIT_OK = 0
EXIT_ABORT = 1
EXIT_CHECK = 2


def build_parser():
    ap = argparse.ArgumentParser(prog="hystera", description="Regularized play-type hysteresis experiments.")
    ap.add_argument("preset", choices=PRESETS)
    ap.add_argument("--config", metavar="PATH", help="key=value file; all keys optional")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for tau-sweep members")
    ap.add_argument("--out", metavar="DIR", help="output directory (overrides out_dir)")
    return ap


def run_preset(name, cfg, jobs=1, out=None, stderr=None):
    """Run one preset, write its files and return the exit code."""
    stderr = sys.stderr if stderr is None else stderr
    out = out or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    cfg.write_echo(out)
    try:
        if name == "tau-sweep":
            result = run_tau_sweep(cfg, jobs=jobs, out=out)
        else:
            result = PRESET_RUNNERS[name](cfg)
    except SolverAbort as exc:
        dump = getattr(exc, "dump", {}) or {}
        print(f"hystera: solver abort at t={dump.get('t')!r} dt={dump.get('dt')!r}: {exc}", file=stderr)
        return EXIT_ABORT
    except NumericError as exc:
        print(f"hystera: solver abort: {exc}", file=stderr)
        return EXIT_ABORT
    write_run_files(result, cfg, out)
    if result.constitutive is not None and name == "scan-loop":
        write_rho_csv(result.constitutive.rho, out, cfg.run_id)
    if result.report.passed:
        return EXIT_OK
    for check in result.report.failures:
        print(f"hystera: check {check.name} failed, worst violation {check.worst!r}"
              + (f" ({check.note})" if check.note else ""), file=stderr)
    return EXIT_CHECK


def main(argv=None):
    args = build_parser().parse_args(argv)
    text = ""
    try:
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg = parse_config(text, preset=args.preset)
    except (ConfigError, OSError) as exc:
        print(f"hystera: config error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    return run_preset(args.preset, cfg, jobs=args.jobs, out=args.out)


if __name__ == "__main__":
    sys.exit(main())
