"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (shown in the terminal summary and
printed with ``-s``) and then asserts, so a failing criterion still reports
its measured values. Criteria 3-6 share one sweep, computed once per session.

Run only these with ``pytest tests/test_acceptance.py -s``.
"""
import io
import statistics
import time

import pytest

from conftest import ACCEPTANCE
from gossipsim.cli import main
from gossipsim.experiment import ExperimentSpec, reliability_curve, run_experiment
from gossipsim.fanout import ReliabilityTarget, compute_fanout

SWEEP_N = [10, 50, 100, 150, 200, 250]
LOSSES = [0.0, 0.1]


def record(key, failures, detail):
    ok = not failures
    line = f"{'PASS' if ok else 'FAIL'} criterion {key}: {detail}"
    if failures:
        line += " | failed: " + "; ".join(failures)
    ACCEPTANCE[key] = (ok, line.split(": ", 1)[1])
    print(line)
    assert ok, line


@pytest.fixture(scope="session")
def sweep():
    """Mean rows and raw rows keyed by (protocol, n, loss), plus per-point wall time."""
    out = {"mean": {}, "raw": {}, "seconds": {}}
    for protocol in ("gossip", "eventing"):
        for n in SWEEP_N:
            for loss in (LOSSES if protocol == "gossip" else [0.0]):
                spec = ExperimentSpec(nodes=[n], loss=[loss], protocol=[protocol], runs=5,
                                      events=120, hops=5).validate()
                t0 = time.perf_counter()
                rows = run_experiment(spec)
                out["seconds"][protocol, n, loss] = time.perf_counter() - t0
                out["raw"][protocol, n, loss] = rows[:-1]
                out["mean"][protocol, n, loss] = rows[-1]
    return out


def test_criterion_1_fanout_anchors():
    got = {n: compute_fanout(ReliabilityTarget(n, 0.05, 0.99)) for n in (10, 250)}
    failures = [f"n={n} gave {f}, want {w}" for (n, f), w in zip(got.items(), (8, 11)) if f != w]
    record(1, failures, f"fanout(10)={got[10]}, fanout(250)={got[250]}")


def test_criterion_2_reliability_curve():
    t0 = time.perf_counter()
    rows = reliability_curve(n=250, hops=5, fanouts=range(1, 13), runs=100, seed=0)
    elapsed = time.perf_counter() - t0
    by_f = {r["fanout"]: r for r in rows}
    failures = []
    for f, r in by_f.items():
        if f >= 5 and r["avg_receivers_pct"] < 99.0:
            failures.append(f"f={f} avg receivers {r['avg_receivers_pct']:.2f}% < 99%")
        if f >= 8 and r["atomic_runs_pct"] < 90.0:
            failures.append(f"f={f} atomic runs {r['atomic_runs_pct']:.0f}% < 90%")
        if f <= 3 and r["atomic_runs_pct"] >= 50.0:
            failures.append(f"f={f} atomic runs {r['atomic_runs_pct']:.0f}% >= 50%")
    if elapsed >= 180:
        failures.append(f"runtime {elapsed:.0f}s >= 180s")
    curve = " ".join(f"f{f}={r['avg_receivers_pct']:.2f}/{r['atomic_runs_pct']:.0f}"
                     for f, r in by_f.items())
    record(2, failures, f"avg%/atomic% per fanout: {curve} ({elapsed:.0f}s)")


def test_criterion_3_loss_resilience(sweep):
    failures = []
    worst = {}
    for n in (10, 50, 100, 250):
        rates = [r["delivery_rate"] for r in sweep["raw"]["gossip", n, 0.1]]
        worst[n] = min(rates)
        if worst[n] < 0.999:
            failures.append(f"n={n} run delivery {worst[n]:.5f} < 0.999")
    secs = sweep["seconds"]["gossip", 250, 0.1]
    if secs >= 300:
        failures.append(f"n=250 took {secs:.0f}s >= 300s")
    detail = ", ".join(f"n={n} min {v:.5f}" for n, v in worst.items())
    record(3, failures, f"per-run delivery at loss 0.1: {detail} (n=250 in {secs:.0f}s)")


def test_criterion_4_hop_scaling(sweep):
    hops = {(n, loss): sweep["mean"]["gossip", n, loss]["mean_hops"] for n in SWEEP_N for loss in LOSSES}
    failures = []
    if not 1.0 <= hops[10, 0.0] <= 1.8:
        failures.append(f"n=10 hops {hops[10, 0.0]:.3f} outside [1.0, 1.8]")
    if not 2.0 <= hops[250, 0.0] <= 3.3:
        failures.append(f"n=250 hops {hops[250, 0.0]:.3f} outside [2.0, 3.3]")
    for loss in LOSSES:
        for a, b in zip(SWEEP_N, SWEEP_N[1:]):
            if hops[b, loss] < hops[a, loss] - 0.15:
                failures.append(f"loss {loss}: hops fall from n={a} to n={b}")
    for n in SWEEP_N:
        if hops[n, 0.1] - hops[n, 0.0] > 1.0:
            failures.append(f"n={n}: loss adds {hops[n, 0.1] - hops[n, 0.0]:.3f} hops")
    series = " ".join(f"{n}:{hops[n, 0.0]:.2f}/{hops[n, 0.1]:.2f}" for n in SWEEP_N)
    record(4, failures, f"mean hops (loss 0 / 0.1) by n: {series}")


def test_criterion_5_latency_shape(sweep):
    ev = [sweep["mean"]["eventing", n, 0.0]["mean_latency_ms"] for n in SWEEP_N]
    gs = {(n, loss): sweep["mean"]["gossip", n, loss]["mean_latency_ms"] for n in SWEEP_N for loss in LOSSES}
    r2 = statistics.correlation(SWEEP_N, ev) ** 2
    share = gs[250, 0.0] / ev[-1]
    g_ratio = gs[250, 0.0] / gs[10, 0.0]
    e_ratio = ev[-1] / ev[0]
    failures = []
    if r2 < 0.99:
        failures.append(f"eventing R^2 {r2:.4f} < 0.99")
    if share > 0.25:
        failures.append(f"gossip/eventing at 250 is {share:.3f} > 0.25")
    if g_ratio > 5:
        failures.append(f"gossip ratio {g_ratio:.2f} > 5")
    if e_ratio < 8:
        failures.append(f"eventing ratio {e_ratio:.2f} < 8")
    for n in SWEEP_N:
        rise = gs[n, 0.1] / gs[n, 0.0] - 1
        if rise > 0.10:
            failures.append(f"n={n}: loss raises gossip latency by {rise:.1%}")
    worst_rise = max(gs[n, 0.1] / gs[n, 0.0] - 1 for n in SWEEP_N)
    record(5, failures,
           f"eventing {ev[0]:.1f}->{ev[-1]:.1f} ms (R^2={r2:.4f}, ratio {e_ratio:.1f}); "
           f"gossip {gs[10, 0.0]:.2f}->{gs[250, 0.0]:.2f} ms (ratio {g_ratio:.2f}, "
           f"{share:.1%} of eventing at 250); worst loss rise {worst_rise:.1%}")


def test_criterion_6_producer_load(sweep):
    failures = []
    for n in SWEEP_N:
        for r in sweep["raw"]["eventing", n, 0.0]:
            if r["producer_transmissions"] != n - 1:
                failures.append(f"eventing n={n} run {r['run']}: {r['producer_transmissions']}")
        for loss in LOSSES:
            for r in sweep["raw"]["gossip", n, loss]:
                want = min(r["fanout"], n - 1)
                if r["producer_transmissions"] != want:
                    failures.append(f"gossip n={n} loss {loss} run {r['run']}: "
                                    f"{r['producer_transmissions']} != {want}")
    record(6, failures, "eventing sends n-1 per event, gossip initiator sends min(f, n-1) in every run")


def _property_suite():
    import test_core
    import test_envelope
    return {
        "infect-and-die single relay": test_core.test_infect_and_die_relays_once,
        "hops monotonicity": test_core.test_hops_monotonic,
        "flooding completeness": test_core.test_flooding_is_complete,
        "balls-and-bins bound": test_core.test_balls_and_bins_bound,
        "balls-and-bins exact count": test_core.test_balls_and_bins_exhaustive_count,
        "lazy-push payload economy": test_core.test_lazy_push_fetches_each_payload_once,
        "max-filter oracle n=25": test_core.test_max_filter_matches_direct_max,
        "envelope round-trip": test_envelope.test_round_trip,
    }


def test_criterion_7_protocol_invariants():
    failures, times = [], {}
    for name, prop in _property_suite().items():
        t0 = time.perf_counter()
        try:
            prop()
        except Exception as exc:  # report every property, not just the first failure
            failures.append(f"{name}: {type(exc).__name__}: {exc}")
        times[name] = time.perf_counter() - t0
        if times[name] >= 10:
            failures.append(f"{name} took {times[name]:.1f}s")
    detail = ", ".join(f"{k} {v:.1f}s" for k, v in times.items())
    record(7, failures, detail)


def test_criterion_8_determinism(tmp_path):
    conf = tmp_path / "det.conf"
    conf.write_text(
        "nodes = [10, 40]\nfanout = [auto]\nloss = [0.0, 0.1]\nprotocol = [gossip, eventing]\n"
        "variant = [eager-push, lazy-push]\nruns = 2\nevents = 30\n"
    )
    outputs = []
    for k in range(2):
        csv_path, log_path = tmp_path / f"out{k}.csv", tmp_path / f"tx{k}.jsonl"
        code = main(["--config", str(conf), "--out", str(csv_path), "--tx-log", str(log_path)])
        outputs.append((code, csv_path.read_bytes(), log_path.read_bytes()))
    failures = []
    if any(code != 0 for code, _, _ in outputs):
        failures.append("cli exited nonzero")
    if outputs[0][1] != outputs[1][1]:
        failures.append("CSV differs")
    if outputs[0][2] != outputs[1][2]:
        failures.append("transmission log differs")
    record(8, failures, f"CSV {len(outputs[0][1])} bytes, tx log {len(outputs[0][2])} bytes, identical on rerun")


def test_criterion_9_membership():
    import random
    from collections import Counter

    from gossipsim.membership import PeerEntry, PeerView
    from test_membership import newscast_sim

    failures, needed = [], []
    tf = 1000.0
    for seed in range(10):
        sim = newscast_sim(20, seed, tf)
        for k in range(1, 41):
            sim.loop.run(until=k * tf)
            if all(len(node.view) == 19 for node in sim.nodes.values()):
                needed.append(k)
                break
        else:
            failures.append(f"seed {seed}: views incomplete after 40 timeframes")

    view = PeerView("me", 64, [PeerEntry(f"x{i}") for i in range(10)])
    rng = random.Random(2024)
    counts = Counter(view.sample(1, rng=rng)[0] for _ in range(10_000))
    worst = max(abs(c / 1000 - 1) for c in counts.values())
    if len(counts) != 10 or worst > 0.10:
        failures.append(f"sample frequency off by {worst:.1%}")
    record(9, failures, f"Newscast n=20 complete after {needed} timeframes; "
                        f"sample worst relative deviation {worst:.1%}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-s", "-v"]))
