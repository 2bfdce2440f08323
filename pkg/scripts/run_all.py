"""Run every shipped config through the CLI and print one status line each.

Usage: python3 scripts/run_all.py [--out DIR] [config ...]

Outputs land in DIR/<config name>/. The script exits with the worst CLI exit
code seen (0 when everything passes).
"""

import argparse
import glob
import os
import sys
import time

from kuratowski.harness import cli
from kuratowski.harness.config import load_file

HERE = os.path.dirname(os.path.abspath(__file__))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("configs", nargs="*")
    parser.add_argument("--out", default="runs")
    args = parser.parse_args(argv)
    paths = args.configs or sorted(glob.glob(os.path.join(HERE, os.pardir, "configs", "*.cfg")))
    worst = 0
    for path in paths:
        name = os.path.splitext(os.path.basename(path))[0]
        command = load_file(path).experiment.replace("_", "-")
        t0 = time.perf_counter()
        code = cli.main([command, "--config", path, "--out", os.path.join(args.out, name), "-q"])
        print(f"{name:28s} exit {code}  {time.perf_counter() - t0:6.1f} s", flush=True)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
