"""Print baseline entries for the configs that carry frozen statistics.

The output is meant to be reviewed and pasted into
``src/kuratowski/harness/baselines.txt`` by hand; nothing is written here.

    python3 scripts/freeze_baselines.py configs/sweep_flat.cfg configs/systole_flat.cfg
"""

import argparse
import sys

from kuratowski.harness.config import load_file
from kuratowski.harness.experiments import run

VALUE_TOL = 1e-9


def entries(cfg, result):
    stats = dict(result.summary)
    prefix = f"{cfg.experiment}.{cfg.digest}"
    if cfg.experiment == "sweep":
        for e in cfg.epsilons:
            tag = repr(float(e))
            yield f"{prefix}.C_eps{tag} = {stats[f'eps{tag}.C']!r} {VALUE_TOL}"
            yield f"{prefix}.near_C_eps{tag} = {stats[f'eps{tag}.near_diagonal_C']!r} {VALUE_TOL}"
    elif cfg.experiment == "systole":
        yield f"{prefix}.min_pullback = {stats['min_pullback']!r} {VALUE_TOL}"
    elif cfg.experiment == "firstvar":
        yield f"# firstvar.K.{cfg.manifold.family} observed {stats['K_observed']!r}"


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("configs", nargs="+")
    args = parser.parse_args(argv)
    for path in args.configs:
        cfg = load_file(path)
        result = run(cfg, baselines={})
        print(f"# {path} (digest {cfg.digest})")
        for line in entries(cfg, result):
            print(line)
        sys.stdout.flush()


if __name__ == "__main__":
    main()
