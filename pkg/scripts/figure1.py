"""Streaming vs multi-pass risk curves, written as plot-ready CSV.

Thin wrapper around ``hsgdlab figure1`` that also prints the two orderings
the figure is about: at small n multi-pass ends well below the streaming
level, at large n multi-pass trails streaming at equal step counts.

    python scripts/figure1.py --config configs/figure1.cfg --out out/figure1
"""

import argparse
import csv
import json
from collections import defaultdict
from pathlib import Path

from hsgdlab.cli import main as cli_main


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default="configs/figure1.cfg")
    p.add_argument("--out", default="out/figure1")
    args = p.parse_args()
    out = Path(args.out)
    code = cli_main(["figure1", "--config", args.config, "--out", str(out)])
    if code:
        raise SystemExit(code)

    curves = defaultdict(list)
    with (out / "trajectories.csv").open() as fh:
        for row in csv.DictReader(fh):
            curves[(row["source"], row["statistic"])].append((float(row["time"]), float(row["value"])))
    sizes = json.loads((out / "summary.json").read_text())["dataset_sizes"]
    level_times = sorted(curves[("streaming_levels", "population_risk[sgd]")])
    for n, (t, stream_level) in zip(sizes, level_times):
        mp = curves[("sgd_multipass", f"population_risk[n={n}]")]
        at_n = min(mp, key=lambda tv: abs(tv[0] - t))[1]
        print(f"n={n:<7} streaming after n: {stream_level:.4f}  multi-pass at n steps: {at_n:.4f}  "
              f"multi-pass at end: {mp[-1][1]:.4f}")


if __name__ == "__main__":
    main()
