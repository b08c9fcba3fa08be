"""Difference between the regularized and the singular reference solution as eps -> 0.

Writes results/eps_study_t<t_final>.csv for each final time and prints the fitted slopes.
"""

import argparse

from blowup_cpm.harness import cmd_eps_study, load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--output", default="results")
    ap.add_argument("--set", action="append", default=[], dest="overrides", metavar="KEY=VALUE")
    args = ap.parse_args()
    cmd_eps_study(load_config(None, [f"output={args.output}"] + args.overrides))


if __name__ == "__main__":
    main()
