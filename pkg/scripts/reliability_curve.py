"""Reliability of one dissemination against fanout, at loss 0 and 0.05.

    python scripts/reliability_curve.py [--n 250] [--hops 5] [--runs 100]

Prints average-receiver and atomic-run percentages per fanout side by side
so the two loss settings can be compared against the reference curve.
"""
import argparse
from pathlib import Path

from gossipsim.experiment import CURVE_COLUMNS, reliability_curve, write_csv

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=250)
    ap.add_argument("--hops", type=int, default=5)
    ap.add_argument("--runs", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--losses", default="0,0.05")
    ap.add_argument("--out", default=str(ROOT / "results" / "curve.csv"))
    args = ap.parse_args()

    losses = [float(x) for x in args.losses.split(",")]
    curves = {loss: reliability_curve(args.n, args.hops, range(1, 13), args.runs, args.seed, loss)
              for loss in losses}

    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        rows = [{**r, "loss": loss} for loss, c in curves.items() for r in c]
        write_csv(rows, fh, CURVE_COLUMNS + ("loss",))

    print("fanout" + "".join(f"   avg%@{l:<5g} atomic%@{l:<5g}" for l in losses))
    for i, f in enumerate(range(1, 13)):
        cells = "".join(f"   {curves[l][i]['avg_receivers_pct']:>10.2f} {curves[l][i]['atomic_runs_pct']:>13.0f}"
                        for l in losses)
        print(f"{f:>6}{cells}")


if __name__ == "__main__":
    main()
