"""Plot the columns of a diag.csv written by `dyadic-cascade simulate` or `tree`.

usage: python plot_diag.py OUT_DIR [--log]
"""
import argparse
import csv
import pathlib

import matplotlib.pyplot as plt


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir", type=pathlib.Path)
    ap.add_argument("--log", action="store_true", help="log scale for the norm axis")
    args = ap.parse_args()

    with open(args.out_dir / "diag.csv", newline="") as f:
        rows = list(csv.DictReader(f))
    t = [float(r["t"]) for r in rows]
    norms = [c for c in rows[0] if c.startswith("h") or c == "sup_scaled"]

    fig, (top, bottom) = plt.subplots(2, 1, sharex=True, figsize=(7, 6))
    for c in norms:
        top.plot(t, [float(r[c]) for r in rows], label=c)
    if args.log:
        top.set_yscale("log")
    top.legend()
    bottom.plot(t, [float(r["energy"]) for r in rows])
    bottom.set_ylabel("energy")
    bottom.set_xlabel("t")
    fig.tight_layout()
    plt.show()


if __name__ == "__main__":
    main()
