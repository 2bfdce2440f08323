"""``kuratowski <experiment> --config <path> [--out DIR] [--seed N] [--method KIND]``.

Exit status: 0 when every check passes, 1 when a check fails, 2 for usage or
configuration errors, 3 for resource errors (memory budget, unwritable output).
"""

from __future__ import annotations

import argparse
import logging
import sys

from ..distance import KINDS
from ..errors import DomainError, OutOfRangeError, ResourceError, UsageError
from .config import CLI_NAMES, load_file
from .experiments import output_dir, run
from .report import write_report

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RESOURCE = 0, 1, 2, 3
COMMANDS = ("net", "sweep", "firstvar", "continuity", "systole", "oracle-check")

log = logging.getLogger("kuratowski")


def build_parser():
    parser = argparse.ArgumentParser(prog="kuratowski", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="key = value config file")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="overrides rng_seed")
        p.add_argument("--method", choices=KINDS, help="overrides method.kind")
        p.add_argument("-q", "--quiet", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    overrides = {}
    if args.seed is not None:
        overrides["rng_seed"] = str(args.seed)
    if args.method is not None:
        overrides["method.kind"] = args.method
    if args.out is not None:
        overrides["output_dir"] = args.out
    try:
        cfg = load_file(args.config, overrides)
        wanted = CLI_NAMES.get(args.command, args.command)
        if cfg.experiment != wanted:
            raise UsageError(f"config is for experiment {cfg.experiment!r}, not {wanted!r}")
        result = run(cfg)
        out = output_dir(cfg)
        write_report(result, out, cfg.echo())
    except ResourceError as exc:
        log.error("%s", exc)
        return EXIT_RESOURCE
    except (UsageError, OutOfRangeError, DomainError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    for line in result.log:
        log.info("%s", line)
    if not result.passed:
        log.warning("violated: %s", ", ".join(result.failed))
        print(f"{cfg.experiment}: FAIL ({', '.join(result.failed)}) -> {out}")
        return EXIT_FAIL
    print(f"{cfg.experiment}: pass -> {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
