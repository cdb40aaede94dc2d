"""Command line front end: ``hodgeheat <command> --config FILE --out DIR``."""

from __future__ import annotations

import argparse
import sys
import time

from pathlib import Path

from .harness.config import ConfigError, ExperimentConfig, parse_config_text
from .harness.experiments import run_experiment
from .harness.reports import failure_list, write_outputs

COMMANDS = {
    "mesh": ("mesh",),
    "elliptic": ("elliptic-convergence",),
    "parabolic": ("parabolic-convergence", "decay"),
    "crimes": ("crimes",),
    "cshape": ("cshape",),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hodgeheat", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="key = value configuration file")
        p.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    allowed = COMMANDS[args.command]
    try:
        mapping = parse_config_text(Path(args.config).read_text(encoding="utf-8"))
        mapping.setdefault("experiment.kind", allowed[0])
        if mapping["experiment.kind"] not in allowed:
            raise ConfigError(f"command {args.command!r} cannot run "
                              f"experiment.kind = {mapping['experiment.kind']}")
        cfg = ExperimentConfig.from_mapping(mapping)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    start = time.perf_counter()
    result = run_experiment(cfg)
    timings = {"total": time.perf_counter() - start}
    write_outputs(args.out, cfg, result, timings)
    for c in result.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    if not result.passed:
        print(failure_list(result), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
