#!/usr/bin/env python3
"""Run every desk-scale BER experiment and drop the CSVs under results/.

Equivalent to calling `onebit-mimo simulate --config configs/<name>.cfg` for
each shipped config except the full-scale one, which takes hours.
"""

import argparse
import logging
import time
from pathlib import Path

from onebit_mimo import load_config, run_sweep, write_results

REPO = Path(__file__).resolve().parent.parent
DESK_CONFIGS = [
    "fig1_desk.cfg",
    "fig2_desk.cfg",
    "fig3_desk_n120.cfg",
    "fig3_desk_n160.cfg",
    "fig3_desk_n200.cfg",
]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default=REPO / "results", type=Path)
    parser.add_argument("--configs", nargs="*", default=DESK_CONFIGS)
    args = parser.parse_args()

    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for name in args.configs:
        cfg = load_config(REPO / "configs" / name)
        out = args.out_dir / (Path(name).stem + ".csv")
        t0 = time.time()
        records = run_sweep(cfg)
        write_results(records, out)
        print(f"{name}: {len(records)} cells -> {out} ({time.time() - t0:.0f}s)")


if __name__ == "__main__":
    main()
