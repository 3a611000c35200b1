"""Experiment specs, parameter sweeps and CSV output.

Config files are flat ``key = value`` text. ``#`` starts a comment. A value
is a bare scalar or a bracketed, comma-separated list; list values define a
sweep and scalars are fixed. See ``configs/headline.conf`` for an annotated
example covering every key.
"""
from __future__ import annotations

import csv
import io
import itertools
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

from .core import BALLS_AND_BINS, EAGER_PUSH, INFECT_AND_DIE, POLICIES, VARIANTS, GossipConfig
from .fanout import ReliabilityTarget, compute_fanout
from .simnet import EVENTING, GOSSIP, PROTOCOLS, LatencyModel, RunMetrics, SimConfig, Simulation
from .simnet import ROUND_LATENCY, disseminate_once, write_tx_log

COLUMNS = (
    "scenario", "n", "fanout", "hops", "loss", "variant", "policy", "run", "seed",
    "delivery_rate", "atomic", "mean_hops", "mean_latency_ms", "p99_latency_ms",
    "total_transmissions", "producer_transmissions",
)
METRIC_COLUMNS = COLUMNS[9:]

CURVE_COLUMNS = ("n", "hops", "fanout", "runs", "avg_receivers_pct", "atomic_runs_pct")

AUTO = "auto"

# used when a lazy or pull variant is swept without explicit buffer settings
DEFAULT_BUFFER_TTL = 30_000.0
DEFAULT_PULL_PERIOD = 100.0


class ConfigParseError(ValueError):
    """Bad config file line or command-line flag."""


@dataclass
class ExperimentSpec:
    name: str = "experiment"
    nodes: List[int] = field(default_factory=lambda: [10])
    fanout: List[Union[int, str]] = field(default_factory=lambda: [AUTO])
    loss: List[float] = field(default_factory=lambda: [0.0])
    variant: List[str] = field(default_factory=lambda: [EAGER_PUSH])
    policy: List[str] = field(default_factory=lambda: [INFECT_AND_DIE])
    protocol: List[str] = field(default_factory=lambda: [GOSSIP])
    runs: int = 5
    seed: int = 0
    hops: int = 5
    events: int = 120
    interval: float = 5_000.0
    warmup: int = 10
    cooldown: int = 10
    error_rate: float = 0.05
    assurance: float = 0.99
    network_delay: float = 1.0
    per_send_cost: float = 0.4
    id_ttl: float = 30_000.0
    data_ttl: float = 0.0
    pull_period: float = 0.0
    scope: str = "default"

    def validate(self):
        for key in ("nodes", "fanout", "loss", "variant", "policy", "protocol"):
            if not getattr(self, key):
                raise ConfigParseError(f"{key}: sweep list must not be empty")
        for n in self.nodes:
            if n < 2:
                raise ConfigParseError(f"nodes: need at least 2 nodes, got {n}")
        for f in self.fanout:
            if f != AUTO and (not isinstance(f, int) or f < 1):
                raise ConfigParseError(f"fanout: expected a positive integer or 'auto', got {f!r}")
        for x in self.loss:
            if not 0.0 <= x <= 1.0:
                raise ConfigParseError(f"loss: must lie in [0, 1], got {x}")
        for v in self.variant:
            if v not in VARIANTS:
                raise ConfigParseError(f"variant: unknown variant {v!r}")
        for p in self.policy:
            if p not in POLICIES:
                raise ConfigParseError(f"policy: unknown policy {p!r}")
        for p in self.protocol:
            if p not in PROTOCOLS:
                raise ConfigParseError(f"protocol: unknown protocol {p!r}")
        if self.runs < 1:
            raise ConfigParseError(f"runs: must be >= 1, got {self.runs}")
        if self.hops < 1:
            raise ConfigParseError(f"hops: must be >= 1, got {self.hops}")
        if self.events <= self.warmup + self.cooldown:
            raise ConfigParseError("events: must exceed warmup + cooldown")
        if not 0.0 <= self.error_rate < 1.0:
            raise ConfigParseError(f"error_rate: must lie in [0, 1), got {self.error_rate}")
        if not 0.5 < self.assurance < 1.0:
            raise ConfigParseError(f"assurance: must lie in (0.5, 1), got {self.assurance}")
        return self

    def resolve_fanout(self, fanout, n: int) -> int:
        if fanout == AUTO:
            return compute_fanout(ReliabilityTarget(n, self.error_rate, self.assurance))
        return fanout

    def points(self) -> Iterator["Point"]:
        """Sweep points in a fixed order; eventing ignores the gossip-only axes."""
        seen = set()
        for protocol, n, f, loss, variant, policy in itertools.product(
                self.protocol, self.nodes, self.fanout, self.loss, self.variant, self.policy):
            if protocol == EVENTING:
                point = Point(protocol, n, None, 0.0, None, None)
            else:
                point = Point(protocol, n, self.resolve_fanout(f, n), loss, variant, policy)
            if point not in seen:
                seen.add(point)
                yield point

    def sim_config(self, point: "Point", run: int) -> SimConfig:
        gossip = GossipConfig(scope=self.scope, initial_hops=self.hops)
        if point.protocol == GOSSIP:
            id_ttl = 0.0 if point.policy == BALLS_AND_BINS else self.id_ttl
            data_ttl = self.data_ttl
            if point.variant != EAGER_PUSH and data_ttl <= 0:
                data_ttl = DEFAULT_BUFFER_TTL
            pull_period = self.pull_period
            if point.variant.endswith("pull") and pull_period <= 0:
                pull_period = DEFAULT_PULL_PERIOD
            gossip = GossipConfig(
                variant=point.variant, fanout=point.fanout, initial_hops=self.hops,
                id_ttl=id_ttl, data_ttl=data_ttl, scope=self.scope,
                duplicate_policy=point.policy, pull_period=pull_period,
            )
        return SimConfig(
            n=point.n, protocol=point.protocol, gossip=gossip,
            loss=point.loss, seed=self.seed + run, events=self.events,
            interval=self.interval,
            latency=LatencyModel(self.network_delay, self.per_send_cost),
            warmup_discard=self.warmup, cooldown_discard=self.cooldown,
        )


@dataclass(frozen=True)
class Point:
    protocol: str
    n: int
    fanout: Optional[int]
    loss: float
    variant: Optional[str]
    policy: Optional[str]


# -- parsing ---------------------------------------------------------------

LIST_KEYS = {"nodes": int, "fanout": None, "loss": float, "variant": str,
             "policy": str, "protocol": str}
SCALAR_KEYS = {"name": str, "runs": int, "seed": int, "hops": int, "events": int,
               "interval": float, "warmup": int, "cooldown": int, "error_rate": float,
               "assurance": float, "network_delay": float, "per_send_cost": float,
               "id_ttl": float, "data_ttl": float, "pull_period": float, "scope": str}
ALIASES = {"n": "nodes", "duplicate_policy": "policy", "runs_per_point": "runs",
           "seed_base": "seed", "e": "error_rate", "p": "assurance"}


def _fanout_value(text: str):
    return AUTO if text == AUTO else int(text)


def _convert(key: str, text: str, where: str):
    conv = _fanout_value if key == "fanout" else (LIST_KEYS.get(key) or SCALAR_KEYS[key])
    try:
        return conv(text)
    except ValueError:
        raise ConfigParseError(f"{where}: {key}: cannot read {text!r}") from None


def _parse_value(key: str, text: str, where: str):
    text = text.strip()
    if key in LIST_KEYS:
        if text.startswith("["):
            if not text.endswith("]"):
                raise ConfigParseError(f"{where}: {key}: unterminated list")
            items = [t.strip() for t in text[1:-1].split(",") if t.strip()]
        else:
            items = [t.strip() for t in text.split(",") if t.strip()]
        return [_convert(key, t, where) for t in items]
    if text.startswith("["):
        raise ConfigParseError(f"{where}: {key}: takes a single value, not a list")
    return _convert(key, text, where)


def parse_text(text: str, source: str = "<config>") -> Dict[str, object]:
    values: Dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigParseError(f"{where}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = ALIASES.get(key.strip(), key.strip())
        if key not in LIST_KEYS and key not in SCALAR_KEYS:
            raise ConfigParseError(f"{where}: unknown key {key!r}")
        if key in values:
            raise ConfigParseError(f"{where}: duplicate key {key!r}")
        values[key] = _parse_value(key, value, where)
        try:
            _check_one(key, values[key])
        except ConfigParseError as exc:
            raise ConfigParseError(f"{where}: {exc}") from None
    return values


def _check_one(key, value):
    probe = ExperimentSpec(**{key: value})
    single = {"nodes", "fanout", "loss", "variant", "policy", "protocol", "runs", "hops",
              "error_rate", "assurance"}
    if key in single:
        probe.validate()


def parse_config(path: Optional[str] = None, overrides: Optional[Dict[str, object]] = None) -> ExperimentSpec:
    """Build an ExperimentSpec from an optional config file plus flag overrides.

    Overrides win over file values; anything unset keeps its default.
    """
    values: Dict[str, object] = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            values.update(parse_text(fh.read(), source=str(path)))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in LIST_KEYS and not isinstance(value, list):
            value = _parse_value(key, str(value), f"--{key}")
        try:
            _check_one(key, value)
        except ConfigParseError as exc:
            raise ConfigParseError(f"--{key.replace('_', '-')}: {exc}") from None
        values[key] = value
    return ExperimentSpec(**values).validate()


# -- running ---------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def metrics_row(spec: ExperimentSpec, point: Point, run, seed, m: Optional[RunMetrics] = None,
                values: Optional[Dict[str, float]] = None) -> Dict[str, object]:
    row = {
        "scenario": f"{spec.name}:{point.protocol}",
        "n": point.n,
        "fanout": point.fanout,
        "hops": spec.hops if point.protocol == GOSSIP else None,
        "loss": point.loss,
        "variant": point.variant,
        "policy": point.policy,
        "run": run,
        "seed": seed,
    }
    if m is not None:
        values = {
            "delivery_rate": m.delivery_rate,
            "atomic": m.atomic_fraction,
            "mean_hops": m.mean_hops,
            "mean_latency_ms": m.mean_latency_ms,
            "p99_latency_ms": m.p99_latency_ms,
            "total_transmissions": m.total_transmissions,
            "producer_transmissions": m.producer_transmissions,
        }
    row.update(values)
    return row


def _one_run(args) -> Tuple[RunMetrics, Optional[str]]:
    cfg, extra = args
    sim = Simulation(cfg)
    metrics = sim.run()
    log = None
    if cfg.log_transmissions:
        buf = io.StringIO()
        write_tx_log(sim.transmissions, buf, extra)
        log = buf.getvalue()
    metrics.messages = []
    return metrics, log


def run_experiment(spec: ExperimentSpec, jobs: int = 1, tx_log=None) -> List[Dict[str, object]]:
    """Rows for every (point, run) followed by each point's mean row.

    ``tx_log`` is an open text file; when given every transmission of every
    run is appended to it as a JSON line.
    """
    points = list(spec.points())
    tasks = []
    for point in points:
        for r in range(spec.runs):
            cfg = spec.sim_config(point, r)
            extra = None
            if tx_log is not None:
                cfg = replace(cfg, log_transmissions=True)
                extra = {"scenario": f"{spec.name}:{point.protocol}", "n": point.n,
                         "fanout": point.fanout, "loss": point.loss, "variant": point.variant,
                         "policy": point.policy, "run": r}
            tasks.append((cfg, extra))

    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_one_run, tasks))
    else:
        results = [_one_run(t) for t in tasks]

    rows = []
    it = iter(results)
    for point in points:
        raw = []
        for r in range(spec.runs):
            metrics, log = next(it)
            if log is not None:
                tx_log.write(log)
            raw.append(metrics_row(spec, point, r, spec.seed + r, metrics))
        rows.extend(raw)
        means = {c: statistics.fmean(float(row[c]) for row in raw) for c in METRIC_COLUMNS}
        rows.append(metrics_row(spec, point, "mean", None, values=means))
    return rows


def write_csv(rows, fh, columns: Sequence[str] = COLUMNS):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])


def to_csv(rows, columns: Sequence[str] = COLUMNS) -> str:
    buf = io.StringIO()
    write_csv(rows, buf, columns)
    return buf.getvalue()


def reliability_curve(n: int = 250, hops: int = 5, fanouts: Sequence[int] = range(1, 13),
                      runs: int = 100, seed: int = 0, loss: float = 0.0,
                      latency: LatencyModel = ROUND_LATENCY) -> List[Dict[str, object]]:
    """Average-receiver and atomic-run percentages per fanout.

    Each run disseminates one message from a random node; run ``i`` uses
    seed ``seed + i`` for every fanout.
    """
    fanouts = list(fanouts)
    if not fanouts:
        raise ValueError("fanout range must not be empty")
    rows = []
    for f in fanouts:
        outcomes = [disseminate_once(n, f, hops, loss=loss, seed=seed + i, latency=latency)
                    for i in range(runs)]
        rows.append({
            "n": n, "hops": hops, "fanout": f, "runs": runs,
            "avg_receivers_pct": 100.0 * statistics.fmean(o.receiver_fraction for o in outcomes),
            "atomic_runs_pct": 100.0 * sum(o.atomic for o in outcomes) / runs,
        })
    return rows
