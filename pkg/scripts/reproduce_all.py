"""Run every synthetic experiment and write its table to an output directory.

usage: python3 scripts/reproduce_all.py [OUT_DIR] [--skip fig6 ...]
"""

import argparse
import sys
import time
from pathlib import Path

from rootdist import experiments
from rootdist.cli import main as cli_main

FIGURES = ("fig4", "fig5", "fig6", "fig7", "fig10", "fig11")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out", nargs="?", default="results")
    parser.add_argument("--skip", nargs="*", default=[], choices=FIGURES + ("learning",))
    args = parser.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    status = 0
    for fig in FIGURES:
        if fig in args.skip:
            continue
        t0 = time.perf_counter()
        code = cli_main(["reproduce", fig, "--out", str(out)])
        print(f"  [{fig} done in {time.perf_counter() - t0:.1f} s, exit {code}]")
        status = max(status, code)
    if "learning" not in args.skip:
        res = experiments.classification_and_clustering()
        print(res.check.line())
        status = max(status, 0 if res.check.passed else 3)
    return status


if __name__ == "__main__":
    sys.exit(main())
