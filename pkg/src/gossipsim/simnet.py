"""Deterministic discrete-event network simulator.

Virtual time is in milliseconds. Nothing here reads the wall clock; a run
is a pure function of its :class:`SimConfig`, seed included.

Every transmission leaves its sender through a serial queue: the k-th send
queued at an idle node departs at ``now + k * per_send_cost`` and arrives
``network_delay`` later. Gossip traffic is datagram-like and subject to
Bernoulli loss; the eventing baseline runs over a reliable transport.
"""
from __future__ import annotations

import heapq
import itertools
import json
import math
import random
import statistics
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional

from .core import GossipConfig, GossipNode, Push, PushIds, Fetch, Pull, PullIds
from .envelope import ONE_WAY, Envelope, ReplyEnvelope
from .membership import PeerEntry, PeerView, Registry

GOSSIP = "gossip"
EVENTING = "eventing"
PROTOCOLS = (GOSSIP, EVENTING)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LatencyModel:
    network_delay: float = 1.0
    per_send_cost: float = 0.4


@dataclass
class SimConfig:
    n: int = 10
    protocol: str = GOSSIP
    gossip: GossipConfig = field(default_factory=GossipConfig)
    loss: float = 0.0
    seed: int = 0
    events: int = 120
    interval: float = 5_000.0
    latency: LatencyModel = field(default_factory=LatencyModel)
    warmup_discard: int = 10
    cooldown_discard: int = 10
    membership: str = "registry"
    view_capacity: Optional[int] = None
    exchange_timeframe: Optional[float] = None
    bootstrap_peers: int = 3
    producer: Optional[int] = None
    style: str = ONE_WAY
    log_transmissions: bool = False

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError("n must be at least 2 (one producer, one consumer)")
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        if not 0.0 <= self.loss <= 1.0:
            raise ConfigError(f"loss must lie in [0, 1], got {self.loss}")
        if self.events < 1 or self.events <= self.warmup_discard + self.cooldown_discard:
            raise ConfigError("events must exceed warmup_discard + cooldown_discard")
        if self.interval <= 0:
            raise ConfigError("interval must be positive")
        if self.membership not in ("registry", "newscast"):
            raise ConfigError(f"unknown membership mode {self.membership!r}")
        if self.producer is not None and not 0 <= self.producer < self.n:
            raise ConfigError("producer index out of range")

    @property
    def timeframe(self) -> float:
        return self.exchange_timeframe if self.exchange_timeframe is not None else 10 * self.interval


@dataclass
class Transmission:
    src: str
    dst: str
    message: Any
    send_time: float
    deliver_time: float
    dropped: bool = False

    def record(self) -> dict:
        kind, ids, hops = describe(self.message)
        return {"src": self.src, "dst": self.dst, "kind": kind, "ids": ids, "hops": hops,
                "send_time": self.send_time, "deliver_time": self.deliver_time,
                "dropped": self.dropped}


def describe(msg):
    """(kind, ids, hops) summary of a wire message for logs."""
    if isinstance(msg, Envelope):
        return "envelope", [msg.id], msg.hops
    if isinstance(msg, ReplyEnvelope):
        return "reply", [msg.in_reply_to], None
    if isinstance(msg, Push):
        return "push", [e.id for e in msg.envelopes], None
    if isinstance(msg, PushIds):
        return "push_ids", [i for i, _ in msg.ids], None
    if isinstance(msg, Fetch):
        return "fetch", list(msg.ids), None
    if isinstance(msg, Pull):
        return "pull", [], None
    if isinstance(msg, PullIds):
        return "pull_ids", [], None
    return type(msg).__name__.lower(), [], None


def inject_loss(t: Transmission, loss: float, rng: random.Random) -> Transmission:
    """Drop ``t`` with probability ``loss``; one draw per call whatever ``loss`` is."""
    dropped = rng.random() < loss
    return replace(t, dropped=True) if dropped else t


class EventLoop:
    """Timestamp-ordered callback queue; equal timestamps run in insertion order."""

    def __init__(self):
        self.now = 0.0
        self.processed = 0
        self._queue: list = []
        self._seq = itertools.count()

    def schedule(self, at: float, fn: Callable, *args):
        if at < self.now:
            raise ValueError(f"cannot schedule at {at} before now={self.now}")
        heapq.heappush(self._queue, (at, next(self._seq), fn, args))

    def __len__(self):
        return len(self._queue)

    def pending(self):
        return [(at, fn, args) for at, _, fn, args in sorted(self._queue)]

    def run(self, until: Optional[float] = None):
        q = self._queue
        while q:
            if until is not None and q[0][0] > until:
                break
            at, _, fn, args = heapq.heappop(q)
            self.now = at
            self.processed += 1
            fn(*args)


class Network:
    """Sender queues, latency and loss on top of an :class:`EventLoop`."""

    def __init__(self, loop: EventLoop, latency: LatencyModel, loss: float,
                 loss_rng: random.Random, log: bool = False):
        self.loop = loop
        self.latency = latency
        self.loss = loss
        self.loss_rng = loss_rng
        self.log: Optional[List[Transmission]] = [] if log else None
        self.handlers: Dict[str, Callable[[Transmission], None]] = {}
        self.busy: Dict[str, float] = defaultdict(float)
        self.sent = 0
        self.dropped = 0
        self.delivered = 0
        self.sent_by: Dict[str, int] = defaultdict(int)

    def send(self, src: str, dst: str, message, lossy: bool = True) -> Transmission:
        depart = max(self.loop.now, self.busy[src]) + self.latency.per_send_cost
        self.busy[src] = depart
        t = Transmission(src, dst, message, depart, depart + self.latency.network_delay)
        if lossy:
            t = inject_loss(t, self.loss, self.loss_rng)
        self._account(t)
        return t

    def submit(self, t: Transmission):
        """Put an already-timed transmission on the wire."""
        self.busy[t.src] = max(self.busy[t.src], t.send_time)
        self._account(t)

    def _account(self, t: Transmission):
        self.sent += 1
        self.sent_by[t.src] += 1
        if self.log is not None:
            self.log.append(t)
        if t.dropped:
            self.dropped += 1
        else:
            self.loop.schedule(t.deliver_time, self._arrive, t)

    def _arrive(self, t: Transmission):
        assert self.loop.now == t.deliver_time
        self.delivered += 1
        self.handlers[t.dst](t)

    @property
    def in_flight(self) -> int:
        return self.sent - self.dropped - self.delivered


class EventingPublisher:
    """Event source that notifies each subscriber in turn over a reliable link."""

    def __init__(self, address: str, subscribers: List[str], latency: LatencyModel):
        self.address = address
        self.subscribers = list(subscribers)
        self.latency = latency
        self.busy_until = 0.0

    def publish(self, envelope: Envelope, now: float) -> List[Transmission]:
        start = max(now, self.busy_until)
        c, d = self.latency.per_send_cost, self.latency.network_delay
        out = []
        for k, sub in enumerate(self.subscribers, start=1):
            depart = start + k * c
            out.append(Transmission(self.address, sub, envelope, depart, depart + d))
        if out:
            self.busy_until = out[-1].send_time
        return out


def eventing_publish(publisher: str, subscribers: List[str], payload, now: float,
                     latency: LatencyModel = LatencyModel(), msg_id: str = "event") -> List[Transmission]:
    env = Envelope(msg_id, "set", payload)
    return EventingPublisher(publisher, subscribers, latency).publish(env, now)


def address(i: int) -> str:
    return f"n{i:04d}"


# -- metrics ---------------------------------------------------------------

@dataclass
class MessageStats:
    id: str
    index: int
    origin_time: float
    latencies: List[float] = field(default_factory=list)
    hops: List[int] = field(default_factory=list)

    @property
    def deliveries(self) -> int:
        return len(self.latencies)


@dataclass
class RunMetrics:
    n: int
    protocol: str
    seed: int
    producer: str
    consumers: int
    events: int
    delivery_rate: float
    atomic_fraction: float
    mean_latency_ms: float
    p99_latency_ms: float
    mean_hops: float
    total_transmissions: int
    producer_transmissions: float
    dropped: int
    delivered: int
    in_flight: int
    counters: Dict[str, int] = field(default_factory=dict)
    messages: List[MessageStats] = field(default_factory=list, repr=False)

    def to_json(self) -> str:
        from dataclasses import asdict
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))


def percentile(values: List[float], q: float) -> float:
    """Linear-interpolation percentile, ``q`` in [0, 100]."""
    if not values:
        return math.nan
    xs = sorted(values)
    pos = (len(xs) - 1) * q / 100.0
    lo = math.floor(pos)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (xs[hi] - xs[lo]) * (pos - lo)


class _Tracker:
    def __init__(self, producer: str):
        self.producer = producer
        self.messages: Dict[str, MessageStats] = {}
        self._seen: Dict[str, set] = {}

    def originate(self, msg_id: str, index: int, now: float):
        self.messages[msg_id] = MessageStats(msg_id, index, now)
        self._seen[msg_id] = set()

    def deliver(self, node: str, env: Envelope, now: float):
        stats = self.messages.get(env.id)
        if stats is None or node == self.producer:
            return
        seen = self._seen[env.id]
        if node in seen:
            return
        seen.add(node)
        stats.latencies.append(now - stats.origin_time)
        depth = 1 if env.header is None else env.origin_hops - env.header.hops + 1
        stats.hops.append(depth)


# -- the experiment driver -------------------------------------------------

class Simulation:
    """One experiment run: nodes, producer, network and metrics."""

    def __init__(self, config: SimConfig, values: Optional[Callable[[int], Any]] = None):
        self.config = config
        self.rng = random.Random(config.seed)
        self.loop = EventLoop()
        self.net = Network(self.loop, config.latency, config.loss,
                           random.Random(f"{config.seed}/loss"), config.log_transmissions)
        self.addresses = [address(i) for i in range(config.n)]
        self.registry = Registry()
        scope = config.gossip.scope
        for a in self.addresses:
            self.registry.announce(PeerEntry(a, "gossip", a), scope)
        if config.producer is not None:
            p = config.producer
        elif config.protocol == EVENTING:
            p = 0
        else:
            p = self.rng.randrange(config.n)
        self.producer = self.addresses[p]
        self.tracker = _Tracker(self.producer)
        self._values = values or (lambda i: float(i))
        self.nodes: Dict[str, GossipNode] = {}
        self._wakeups: Dict[str, set] = defaultdict(set)
        self.end_time = (config.events + 1) * config.interval
        if config.protocol == GOSSIP:
            self._build_gossip()
        else:
            subs = [a for a in self.addresses if a != self.producer]
            self.publisher = EventingPublisher(self.producer, subs, config.latency)
            for a in subs:
                self.net.handlers[a] = self._eventing_arrival

    def _build_gossip(self):
        cfg = self.config
        snapshot = self.registry.snapshot(cfg.gossip.scope)
        capacity = cfg.view_capacity or cfg.n - 1
        for i, a in enumerate(self.addresses):
            if cfg.membership == "registry":
                known = [e for e in snapshot if e.address != a]
            else:
                # ring successor keeps the bootstrap overlay connected
                succ = snapshot[(i + 1) % cfg.n]
                others = [e for e in snapshot if e.address not in (a, succ.address)]
                extra = min(max(cfg.bootstrap_peers - 1, 0), len(others))
                known = [succ] + self.rng.sample(others, extra)
            view = PeerView(a, capacity, known, exchange_timeframe=cfg.timeframe)
            value = self._values(i)
            node = GossipNode(a, cfg.gossip, view, service=self._service(a, value))
            self.nodes[a] = node
            self.net.handlers[a] = self._gossip_arrival
        if cfg.gossip.is_pull:
            period = cfg.gossip.pull_period
            for a in self.addresses:
                self.loop.schedule(self.rng.uniform(0, period), self._pull_tick, a)
        if cfg.membership == "newscast":
            for a in self.addresses:
                self.loop.schedule(self.rng.uniform(0, cfg.timeframe), self._membership_tick, a)

    def _service(self, node_address: str, value):
        tracker = self.tracker

        def hosted(env: Envelope, now: float):
            tracker.deliver(node_address, env, now)
            return value
        return hosted

    # -- gossip plumbing

    def _dispatch(self, src: str, actions):
        for dst, msg in actions:
            self.net.send(src, dst, msg)
        node = self.nodes.get(src)
        if node is not None and node.pending:
            deadline = node.next_deadline()
            if deadline not in self._wakeups[src]:
                self._wakeups[src].add(deadline)
                self.loop.schedule(deadline, self._wake, src, deadline)

    def _gossip_arrival(self, t: Transmission):
        node = self.nodes[t.dst]
        if isinstance(t.message, _Exchange):
            self._exchange_arrival(node, t)
            return
        self._dispatch(t.dst, node.on_message(t.message, t.src, self.loop.now, self.rng))

    def _wake(self, a: str, deadline: float):
        self._wakeups[a].discard(deadline)
        self._dispatch(a, self.nodes[a].tick(self.loop.now, self.rng))

    def _pull_tick(self, a: str):
        self._dispatch(a, self.nodes[a].tick(self.loop.now, self.rng))
        nxt = self.loop.now + self.config.gossip.pull_period
        if nxt <= self.end_time:
            self.loop.schedule(nxt, self._pull_tick, a)

    def _membership_tick(self, a: str):
        view = self.nodes[a].view
        req = view.exchange_request(self.loop.now, self.rng)
        if req is not None:
            target, entries = req
            self.net.send(a, target, _Exchange(tuple(entries), request=True))
        nxt = self.loop.now + self.config.timeframe
        if nxt <= self.end_time:
            self.loop.schedule(nxt, self._membership_tick, a)

    def _exchange_arrival(self, node: GossipNode, t: Transmission):
        msg = t.message
        if msg.request:
            reply = node.view.exchange_response(list(msg.entries), self.loop.now)
            self.net.send(node.address, t.src, _Exchange(tuple(reply), request=False))
        else:
            node.view.merge(list(msg.entries))

    def _eventing_arrival(self, t: Transmission):
        self.tracker.deliver(t.dst, t.message, self.loop.now)

    # -- producer

    def _emit(self, index: int):
        msg_id = f"e{index:04d}"
        now = self.loop.now
        self.tracker.originate(msg_id, index, now)
        payload = float(index)
        if self.config.protocol == GOSSIP:
            node = self.nodes[self.producer]
            self._dispatch(self.producer, node.initiate(payload, self.config.style, now,
                                                        self.rng, msg_id=msg_id))
        else:
            env = Envelope(msg_id, self.config.gossip.action, payload)
            for t in self.publisher.publish(env, now):
                self.net.submit(t)

    def run(self) -> RunMetrics:
        cfg = self.config
        for k in range(cfg.events):
            self.loop.schedule((k + 1) * cfg.interval, self._emit, k)
        self.loop.run(until=self.end_time)
        return self.metrics()

    def metrics(self) -> RunMetrics:
        cfg = self.config
        consumers = cfg.n - 1
        msgs = sorted(self.tracker.messages.values(), key=lambda m: m.index)
        delivered = sum(m.deliveries for m in msgs)
        pairs = consumers * len(msgs)
        lo, hi = cfg.warmup_discard, cfg.events - cfg.cooldown_discard
        lat = [x for m in msgs if lo <= m.index < hi for x in m.latencies]
        hops = [h for m in msgs if lo <= m.index < hi for h in m.hops]
        counters: Dict[str, int] = defaultdict(int)
        for node in self.nodes.values():
            for k, v in node.counters.items():
                counters[k] += v
        return RunMetrics(
            n=cfg.n,
            protocol=cfg.protocol,
            seed=cfg.seed,
            producer=self.producer,
            consumers=consumers,
            events=len(msgs),
            delivery_rate=delivered / pairs if pairs else 1.0,
            atomic_fraction=sum(m.deliveries == consumers for m in msgs) / len(msgs) if msgs else 1.0,
            mean_latency_ms=statistics.fmean(lat) if lat else math.nan,
            p99_latency_ms=percentile(lat, 99),
            mean_hops=statistics.fmean(hops) if hops else math.nan,
            total_transmissions=self.net.sent,
            producer_transmissions=self.net.sent_by[self.producer] / max(1, len(msgs)),
            dropped=self.net.dropped,
            delivered=self.net.delivered,
            in_flight=self.net.in_flight,
            counters=dict(sorted(counters.items())),
            messages=msgs,
        )

    @property
    def transmissions(self) -> List[Transmission]:
        return self.net.log or []


@dataclass(frozen=True)
class _Exchange:
    entries: tuple
    request: bool


def run(config: SimConfig) -> RunMetrics:
    return Simulation(config).run()


def write_tx_log(transmissions, fh, extra: Optional[dict] = None):
    """Append one JSON line per transmission to ``fh``."""
    for t in transmissions:
        rec = t.record()
        if extra:
            rec = {**extra, **rec}
        fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")))
        fh.write("\n")


@dataclass(frozen=True)
class Dissemination:
    atomic: bool
    receiver_fraction: float


# zero sender cost: every depth-d copy lands at exactly d * delay, i.e. synchronous rounds
ROUND_LATENCY = LatencyModel(network_delay=1.0, per_send_cost=0.0)


def disseminate_once(n: int, fanout: int, hops: int, loss: float = 0.0, seed: int = 0,
                     id_ttl: float = 30_000.0, latency: LatencyModel = ROUND_LATENCY) -> Dissemination:
    """A single eager-push dissemination from a random node over a full view."""
    from .core import BALLS_AND_BINS, INFECT_AND_DIE
    policy = INFECT_AND_DIE if id_ttl > 0 else BALLS_AND_BINS
    cfg = SimConfig(
        n=n,
        gossip=GossipConfig(fanout=fanout, initial_hops=hops, id_ttl=id_ttl, duplicate_policy=policy),
        loss=loss, seed=seed, events=1, warmup_discard=0, cooldown_discard=0, latency=latency,
    )
    m = run(cfg)
    return Dissemination(m.atomic_fraction == 1.0, m.delivery_rate)
