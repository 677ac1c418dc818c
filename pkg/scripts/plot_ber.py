#!/usr/bin/env python3
"""Render BER-vs-SNR curves from one or more results CSVs (semilog plot)."""

import argparse
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

MARKERS = {"zf": "o", "onebit-zf": "s", "bcd-fista": "d"}


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("csvs", nargs="+", type=Path)
    parser.add_argument("--out", default="ber.png")
    parser.add_argument("--floor", type=float, default=1e-6, help="clip zero BERs to this value")
    args = parser.parse_args()

    curves = defaultdict(list)
    for path in args.csvs:
        with open(path) as fh:
            for row in csv.DictReader(fh):
                label = f"{row['precoder']} (N={row['N']}, {4 * int(row['qam']) ** 2}-QAM)"
                curves[label].append((float(row["snr_db"]), float(row["ber"])))

    plt.figure(figsize=(6.5, 4.5))
    for label, points in sorted(curves.items()):
        points.sort()
        snr = [p[0] for p in points]
        ber = [max(p[1], args.floor) for p in points]
        marker = MARKERS.get(label.split(" ")[0], "x")
        plt.semilogy(snr, ber, marker=marker, label=label)
    plt.xlabel("P / sigma_n^2 (dB)")
    plt.ylabel("BER")
    plt.grid(True, which="both", alpha=0.4)
    plt.legend(fontsize=8)
    plt.tight_layout()
    plt.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
