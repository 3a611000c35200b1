"""Run the headline sweep and print the hop, latency and delivery tables.

    python scripts/reproduce_figures.py [--config configs/headline.conf] [--out results/sweep.csv]

The full CSV (raw runs plus per-point means) goes to --out; the tables on
stdout use the mean rows only.
"""
import argparse
import os
import sys
import time
from pathlib import Path

from gossipsim.experiment import parse_config, run_experiment, write_csv

ROOT = Path(__file__).resolve().parents[1]


def table(means, metric, fmt):
    ns = sorted({r["n"] for r in means})
    cols = sorted({(r["protocol"], r["loss"]) for r in means}, key=lambda c: (c[0] != "gossip", c[1]))
    head = "n".rjust(6) + "".join(f"{p}@{l:g}".rjust(16) for p, l in cols)
    lines = [head]
    for n in ns:
        cells = []
        for p, l in cols:
            hit = [r for r in means if r["n"] == n and r["protocol"] == p and r["loss"] == l]
            cells.append(format(hit[0][metric], fmt).rjust(16) if hit else "-".rjust(16))
        lines.append(str(n).rjust(6) + "".join(cells))
    return "\n".join(lines)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "headline.conf"))
    ap.add_argument("--out", default=str(ROOT / "results" / "sweep.csv"))
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    args = ap.parse_args()

    spec = parse_config(args.config)
    t0 = time.perf_counter()
    rows = run_experiment(spec, jobs=args.jobs)
    print(f"{len(rows)} rows in {time.perf_counter() - t0:.0f}s", file=sys.stderr)

    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        write_csv(rows, fh)

    means = []
    for r in rows:
        if r["run"] == "mean":
            means.append({**r, "protocol": r["scenario"].split(":")[1]})
    print("mean hops\n" + table(means, "mean_hops", ".3f"))
    print("\nmean latency (ms)\n" + table(means, "mean_latency_ms", ".2f"))
    print("\ndelivery rate\n" + table(means, "delivery_rate", ".5f"))
    print("\nproducer transmissions per event\n" + table(means, "producer_transmissions", ".1f"))


if __name__ == "__main__":
    main()
