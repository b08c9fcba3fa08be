"""Double-logarithmic plots of the CSV outputs (needs matplotlib, which the package does not)."""

import argparse
import csv
import glob
import os


def read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--results", default="results")
    args = ap.parse_args()
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for path in sorted(glob.glob(os.path.join(args.results, "convergence_*.csv"))):
        rows = [r for r in read(path) if r["linf_error"] != "nan"]
        for eps in sorted({r["eps"] for r in rows}):
            sel = [r for r in rows if r["eps"] == eps]
            axes[0].loglog([float(r["h"]) for r in sel], [float(r["linf_error"]) for r in sel], "o-",
                           label=f"{sel[0]['scheme']} eps={eps}")
    axes[0].set_xlabel("h")
    axes[0].set_ylabel("max error")
    axes[0].legend()
    for path in sorted(glob.glob(os.path.join(args.results, "eps_study_t*.csv"))):
        rows = read(path)
        axes[1].loglog([float(r["eps"]) for r in rows], [float(r["linf_diff"]) for r in rows], "o-",
                       label=f"t_f={rows[0]['t_final']}")
    axes[1].set_xlabel("eps")
    axes[1].set_ylabel("max difference to eps = 0")
    axes[1].legend()
    fig.tight_layout()
    fig.savefig(os.path.join(args.results, "convergence.png"), dpi=150)


if __name__ == "__main__":
    main()
