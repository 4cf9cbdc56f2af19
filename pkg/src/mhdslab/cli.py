"""Command line interface.

    mhdslab run <config.ini | thm-2.1 | thm-2.2> [--output-dir DIR] [--t-final T]
    mhdslab verify <geometry|operators|elliptic|balance|decay>
    mhdslab resume <snapshot.npz> <config.ini | preset>

Exit codes: 0 ok, 1 usage or configuration error, 2 runtime failure,
3 verification failure.  ``MHDSLAB_THREADS`` sets the per-mode solver thread
count (results do not depend on it).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import PRESETS, load_config, preset_config
from .errors import ConfigError, MHDSlabError, SnapshotError
from .io import read_snapshot_bundle, snapshot_write, write_series_csv, write_summary
from .simulation import plan_for, run, summarize
from .verify import SUITES, format_table, run_suite

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("mhdslab")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser():
    p = _Parser(prog="mhdslab", description="Free-surface MHD slab simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run an experiment from a config file or preset")
    r.add_argument("config", help=f"config file or preset ({', '.join(PRESETS)})")
    r.add_argument("--output-dir", help="override [output] directory")
    r.add_argument("--t-final", type=float, help="override [time] t_final")
    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", help=f"one of {', '.join(SUITES)}")
    s = sub.add_parser("resume", help="continue a run from a snapshot")
    s.add_argument("snapshot")
    s.add_argument("config")
    s.add_argument("--output-dir", help="override [output] directory")
    return p


def _load(spec, output_dir=None, t_final=None):
    overrides = {}
    if output_dir is not None:
        overrides["directory"] = output_dir
    if t_final is not None:
        overrides["t_final"] = t_final
    if spec in PRESETS:
        return preset_config(spec, **overrides)
    cfg = load_config(spec)
    for key, value in overrides.items():
        setattr(cfg, key, value)
    cfg.validate()
    return cfg


def _execute(cfg, resume=None):
    result = run(cfg, resume=resume)
    out = Path(cfg.directory)
    out.mkdir(parents=True, exist_ok=True)
    write_series_csv(result.reports, cfg.output_path("csv"), cfg.N)
    write_summary(summarize(result), cfg.output_path("summary"))
    snapshot_write(result.final_state, cfg.output_path("snapshot"), plan_for(cfg),
                   history=result.history, accumulator=result.accumulator)
    print(f"status: {result.status}; {len(result.reports)} reports written to {out}")
    if result.status != "ok":
        print(result.message, file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "verify":
            if args.suite not in SUITES:
                print(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}",
                      file=sys.stderr)
                return EXIT_USAGE
            checks = run_suite(args.suite)
            print(format_table(checks))
            return EXIT_OK if all(c.passed for c in checks) else EXIT_VERIFY
        if args.command == "run":
            return _execute(_load(args.config, args.output_dir, args.t_final))
        if args.command == "resume":
            cfg = _load(args.config, args.output_dir)
            bundle = read_snapshot_bundle(args.snapshot, plan_for(cfg))
            return _execute(cfg, resume=bundle)
    except (ConfigError, SnapshotError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MHDSlabError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_USAGE  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
