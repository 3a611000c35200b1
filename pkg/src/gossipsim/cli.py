"""Command-line front end for experiment sweeps and reliability curves."""
from __future__ import annotations

import argparse
import logging
import sys
from contextlib import ExitStack

from .experiment import (
    CURVE_COLUMNS,
    ConfigParseError,
    parse_config,
    reliability_curve,
    run_experiment,
    write_csv,
)
from .simnet import ConfigError

log = logging.getLogger("gossipsim")


def _fanout_range(text: str):
    lo, sep, hi = text.partition("..")
    try:
        if sep:
            return list(range(int(lo), int(hi) + 1))
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'A..B' or a comma list, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="gossipsim",
        description="Simulate gossip dissemination against a sequential-unicast eventing baseline.",
    )
    p.add_argument("--config", metavar="PATH", help="flat key = value experiment file")
    p.add_argument("--nodes", metavar="LIST", help="comma-separated node counts, e.g. 10,50,250")
    p.add_argument("--fanout", metavar="INT|auto", help="fanout, or 'auto' to size it from --error-rate/--assurance")
    p.add_argument("--hops", type=int, help="initial hop budget")
    p.add_argument("--loss", metavar="FLOAT", help="datagram loss probability (comma list sweeps)")
    p.add_argument("--variant", help="eager-push, lazy-push, eager-pull or lazy-pull")
    p.add_argument("--policy", help="infect-and-die or balls-and-bins")
    p.add_argument("--runs", type=int, help="runs per sweep point")
    p.add_argument("--seed", type=int, help="seed of run 0; run i uses seed + i")
    p.add_argument("--protocol", help="gossip or eventing (comma list sweeps both)")
    p.add_argument("--events", type=int, help="events emitted per run")
    p.add_argument("--error-rate", type=float, help="expected loss used by --fanout auto")
    p.add_argument("--assurance", type=float, help="delivery assurance used by --fanout auto")
    p.add_argument("--out", metavar="PATH", help="CSV output file (default: stdout)")
    p.add_argument("--tx-log", metavar="PATH", help="write every transmission as a JSON line")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for independent runs")
    p.add_argument("--curve", action="store_true",
                   help="print the fanout reliability curve instead of running a sweep")
    p.add_argument("--fanout-range", type=_fanout_range, default=list(range(1, 13)),
                   metavar="A..B", help="fanouts for --curve (default 1..12)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _overrides(args) -> dict:
    return {
        "nodes": args.nodes,
        "fanout": args.fanout,
        "hops": args.hops,
        "loss": args.loss,
        "variant": args.variant,
        "policy": args.policy,
        "runs": args.runs,
        "seed": args.seed,
        "protocol": args.protocol,
        "events": args.events,
        "error_rate": args.error_rate,
        "assurance": args.assurance,
    }


def _summarise(rows):
    for row in rows:
        if row["run"] != "mean":
            continue
        log.info("%s n=%s fanout=%s loss=%s: delivery=%.5f hops=%.3f latency=%.3f ms",
                 row["scenario"], row["n"], row["fanout"], row["loss"],
                 row["delivery_rate"], row["mean_hops"], row["mean_latency_ms"])


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        spec = parse_config(args.config, _overrides(args))
        with ExitStack() as stack:
            out = sys.stdout
            if args.out:
                out = stack.enter_context(open(args.out, "w", encoding="utf-8", newline=""))
            if args.curve:
                rows = []
                for n in spec.nodes:
                    rows += reliability_curve(n, spec.hops, args.fanout_range, spec.runs,
                                              seed=spec.seed, loss=spec.loss[0])
                write_csv(rows, out, CURVE_COLUMNS)
                return 0
            tx = None
            if args.tx_log:
                tx = stack.enter_context(open(args.tx_log, "w", encoding="utf-8", newline=""))
            rows = run_experiment(spec, jobs=args.jobs, tx_log=tx)
            write_csv(rows, out)
            _summarise(rows)
    except (ConfigParseError, ConfigError, ValueError, OSError) as exc:
        print(f"gossipsim: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
