"""Per-node gossip engine: the shadow service and its gossip port.

A :class:`GossipNode` never performs I/O. Every operation takes the current
virtual time (and a random source where peers are chosen) and returns the
transmissions it wants made as ``(target_address, message)`` pairs. The
messages are envelopes, replies, or one of the gossip-port requests below.
"""
from __future__ import annotations

import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

from .envelope import ONE_WAY, REQUEST_RESPONSE, Envelope, GossipHeader, ReplyEnvelope
from .membership import MessageFrom, PeerView

EAGER_PUSH = "eager-push"
LAZY_PUSH = "lazy-push"
EAGER_PULL = "eager-pull"
LAZY_PULL = "lazy-pull"
VARIANTS = (EAGER_PUSH, LAZY_PUSH, EAGER_PULL, LAZY_PULL)

INFECT_AND_DIE = "infect-and-die"
BALLS_AND_BINS = "balls-and-bins"
POLICIES = (INFECT_AND_DIE, BALLS_AND_BINS)

DUPLICATE_FAULT = "duplicate"

Action = Tuple[str, Any]


class EmptyView(RuntimeError):
    """The node knows no peers to gossip to."""


# -- reply filters ---------------------------------------------------------

@dataclass(frozen=True)
class Filter:
    """Named aggregate applied to replies on their way back up the tree.

    ``lift`` maps a node's own reply to a partial result; ``combine`` folds
    partial results. Both must make the tree result equal to applying the
    aggregate to every node's reply at once.
    """
    name: str
    combine: Callable[[list], Any]
    lift: Callable[[Any], Any] = lambda value: value


FILTERS: Dict[str, Filter] = {}


def register_filter(flt: Filter):
    FILTERS[flt.name] = flt
    return flt


register_filter(Filter("max", max))
register_filter(Filter("min", min))
register_filter(Filter("sum", sum))
register_filter(Filter("count", sum, lift=lambda value: 1))


# -- gossip port messages --------------------------------------------------

@dataclass(frozen=True)
class Push:
    envelopes: Tuple[Envelope, ...]


@dataclass(frozen=True)
class PushIds:
    # (message id, hops the advertised copy would carry)
    ids: Tuple[Tuple[str, int], ...]


@dataclass(frozen=True)
class Fetch:
    ids: Tuple[str, ...]


@dataclass(frozen=True)
class Pull:
    interval: float


@dataclass(frozen=True)
class PullIds:
    pass


# -- node state ------------------------------------------------------------

@dataclass
class DuplicateEntry:
    id: str
    expires_at: float
    initiator: Optional[str] = None


@dataclass
class PayloadEntry:
    envelope: Envelope
    expires_at: float
    received_at: float


@dataclass
class PendingAggregation:
    request_id: str
    upstream: Optional[str]
    filter: str
    expected: int
    deadline: float
    local: Any = None
    received: List[ReplyEnvelope] = field(default_factory=list)


@dataclass
class GossipConfig:
    variant: str = EAGER_PUSH
    fanout: int = 8
    initial_hops: int = 5
    id_ttl: float = 30_000.0
    data_ttl: float = 0.0
    scope: str = "default"
    duplicate_policy: str = INFECT_AND_DIE
    pull_period: float = 0.0
    aggregation_timeout: float = 1_000.0
    # push copies whose hops are <= this go out as PushIds; None means initial_hops - 2
    lazy_threshold: Optional[int] = None
    # how far back a Pull asks for; None means data_ttl
    pull_window: Optional[float] = None
    fetch_timeout: float = 1_000.0
    action: str = "set"
    filter: Optional[str] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.duplicate_policy not in POLICIES:
            raise ValueError(f"unknown duplicate policy {self.duplicate_policy!r}")
        if self.fanout < 1:
            raise ValueError("fanout must be >= 1")
        if self.initial_hops < 1:
            raise ValueError("initial_hops must be >= 1")
        if self.id_ttl < 0 or self.data_ttl < 0:
            raise ValueError("TTLs must be non-negative")
        if (self.duplicate_policy == BALLS_AND_BINS) != (self.id_ttl == 0):
            raise ValueError("balls-and-bins is selected exactly by id_ttl = 0")
        if self.is_pull and self.pull_period <= 0:
            raise ValueError("pull variants need pull_period > 0")
        if self.variant != EAGER_PUSH and self.data_ttl <= 0:
            raise ValueError(f"{self.variant} buffers payloads and needs data_ttl > 0")
        if self.filter is not None and self.filter not in FILTERS:
            raise ValueError(f"unknown filter {self.filter!r}")

    @property
    def is_pull(self) -> bool:
        return self.variant in (EAGER_PULL, LAZY_PULL)

    @property
    def eager_above(self) -> int:
        return self.initial_hops - 2 if self.lazy_threshold is None else self.lazy_threshold

    def header(self, filter: Optional[str] = None) -> GossipHeader:
        return GossipHeader(self.scope, self.fanout, self.initial_hops,
                            self.id_ttl, self.data_ttl, filter or self.filter)


class GossipNode:
    """Gossip state for one node: dedup table, payload buffer, view, pending replies."""

    def __init__(self, address: str, config: GossipConfig, view: PeerView,
                 service: Optional[Callable[[Envelope, float], Any]] = None):
        self.address = address
        self.config = config
        self.view = view
        self.service = service
        self.dedup: Dict[str, DuplicateEntry] = {}
        self.store: Dict[str, PayloadEntry] = {}
        self.pending: Dict[str, PendingAggregation] = {}
        self.requested: Dict[str, Tuple[float, Optional[int]]] = {}
        self.delivered: List[Tuple[float, Envelope]] = []
        self.results: Dict[str, Any] = {}
        self.replies: Dict[str, List[ReplyEnvelope]] = defaultdict(list)
        self.counters: Counter = Counter()
        self.next_pull: Optional[float] = None
        self._closed: set = set()
        self._seq = 0

    def __repr__(self):
        return f"GossipNode({self.address!r}, {self.config.variant})"

    # -- bookkeeping

    def _live_dedup(self, msg_id: str, now: float) -> Optional[DuplicateEntry]:
        entry = self.dedup.get(msg_id)
        if entry is not None and entry.expires_at <= now:
            del self.dedup[msg_id]
            return None
        return entry

    def _live_payload(self, msg_id: str, now: float) -> Optional[PayloadEntry]:
        entry = self.store.get(msg_id)
        if entry is not None and entry.expires_at <= now:
            del self.store[msg_id]
            return None
        return entry

    def knows(self, msg_id: str, now: float) -> bool:
        return (self._live_dedup(msg_id, now) is not None
                or self._live_payload(msg_id, now) is not None)

    def expire(self, now: float):
        for table in (self.dedup, self.store):
            for key in [k for k, e in table.items() if e.expires_at <= now]:
                del table[key]
        for key in [k for k, (exp, _) in self.requested.items() if exp <= now]:
            del self.requested[key]

    def _remember(self, env: Envelope, initiator: Optional[str], now: float):
        h = env.header
        if h.id_ttl > 0:
            self.dedup[env.id] = DuplicateEntry(env.id, now + h.id_ttl, initiator)
        if h.data_ttl > 0:
            self.store[env.id] = PayloadEntry(env, now + h.data_ttl, now)

    def _deliver(self, env: Envelope, now: float):
        self.delivered.append((now, env))
        self.counters["delivered"] += 1
        if self.service is not None:
            return self.service(env, now)
        return None

    def _relay(self, env: Envelope, out_hops: int, targets: List[str]) -> List[Action]:
        if not targets:
            return []
        lazy = (self.config.variant == LAZY_PUSH and env.header.data_ttl > 0
                and out_hops <= self.config.eager_above)
        if lazy:
            msg = PushIds(((env.id, out_hops),))
        else:
            msg = env if env.header.hops == out_hops else env.with_hops(out_hops)
        self.counters["relayed"] += 1
        return [(t, msg) for t in targets]

    def _open_request(self, env: Envelope, upstream: Optional[str], own: Any,
                      targets: List[str], now: float) -> List[Action]:
        flt = env.header.filter
        if flt is None:
            reply = ReplyEnvelope(env.id, own)
            if upstream is None:
                self.replies[env.id].append(reply)
                return []
            return [(upstream, reply)]
        pend = PendingAggregation(env.id, upstream, flt, len(targets),
                                  now + self.config.aggregation_timeout, local=own)
        if pend.expected == 0:
            return self._resolve(pend)
        self.pending[env.id] = pend
        return []

    def _resolve(self, pend: PendingAggregation) -> List[Action]:
        self.pending.pop(pend.request_id, None)
        self._closed.add(pend.request_id)
        flt = FILTERS[pend.filter]
        parts = [] if pend.local is None else [flt.lift(pend.local)]
        parts += [r.payload for r in pend.received if r.fault is None and r.payload is not None]
        if parts:
            reply = ReplyEnvelope(pend.request_id, flt.combine(parts))
        else:
            reply = ReplyEnvelope(pend.request_id, None, fault="empty")
        if pend.upstream is None:
            self.results[pend.request_id] = reply.payload
            return []
        return [(pend.upstream, reply)]

    # -- operations

    def initiate(self, payload, style: str = ONE_WAY, now: float = 0.0,
                 rng: Optional[random.Random] = None, msg_id: Optional[str] = None,
                 filter: Optional[str] = None, header: Optional[GossipHeader] = None) -> List[Action]:
        """Start disseminating ``payload`` from this node.

        The envelope is delivered to the local hosted service and, for push
        variants, sent to up to ``fanout`` peers with the full hop budget.
        Pull variants only buffer it; peers obtain it by pulling.
        """
        if len(self.view) == 0:
            raise EmptyView(f"{self.address} knows no peers")
        rng = rng or random.Random()
        if msg_id is None:
            self._seq += 1
            msg_id = f"{self.address}#{self._seq}"
        header = header or self.config.header(filter)
        env = Envelope(msg_id, self.config.action, payload, style,
                       reply_to=self.address if style == REQUEST_RESPONSE else None,
                       header=header, origin_hops=header.hops)
        self.counters["initiated"] += 1
        self._remember(env, None, now)
        targets = [] if self.config.is_pull else self.view.sample(header.fanout, (), rng)
        actions = self._relay(env, header.hops, targets)
        own = self._deliver(env, now)
        if style == REQUEST_RESPONSE:
            actions += self._open_request(env, None, own, targets, now)
        return actions

    def handle_receive(self, env: Envelope, sender: str, now: float,
                       rng: Optional[random.Random] = None) -> List[Action]:
        h = env.header
        if h is None:
            # plain invocation of the shadow service: start gossip with defaults
            return self.initiate(env.payload, env.style, now, rng, msg_id=env.id)
        if h.scope != self.config.scope:
            self.counters["scope_dropped"] += 1
            return []
        if h.hops < 1:
            self.counters["expired_hops"] += 1
            return []
        rr = env.style == REQUEST_RESPONSE
        if h.id_ttl > 0 and (self.knows(env.id, now) or env.id in self.pending):
            self.counters["duplicates"] += 1
            if rr and h.filter is not None:
                return [(sender, ReplyEnvelope(env.id, None, fault=DUPLICATE_FAULT))]
            return []
        self._remember(env, sender, now)
        own = self._deliver(env, now)
        targets = []
        if h.hops > 1 and not self.config.is_pull:
            targets = self.view.sample(h.fanout, (sender, self.address), rng or random.Random())
        actions = self._relay(env, h.hops - 1, targets)
        if rr:
            actions += self._open_request(env, sender, own, targets, now)
        return actions

    def push(self, envelopes, sender: str, now: float, rng=None) -> List[Action]:
        actions = []
        for env in envelopes:
            req = self.requested.pop(env.id, None)
            if req is not None and req[1] is not None and env.header is not None:
                env = env.with_hops(req[1])
            actions += self.handle_receive(env, sender, now, rng)
        return actions

    def push_ids(self, ids, sender: str, now: float, hops: Optional[Dict[str, int]] = None) -> List[str]:
        """Ids from an advertisement that this node has not seen and should fetch.

        Ids already being fetched count as known until ``fetch_timeout`` passes.
        """
        wanted = []
        for msg_id in ids:
            if self.knows(msg_id, now) or msg_id in wanted:
                continue
            req = self.requested.get(msg_id)
            if req is not None and req[0] > now:
                continue
            self.requested[msg_id] = (now + self.config.fetch_timeout, (hops or {}).get(msg_id))
            wanted.append(msg_id)
        return wanted

    def pull(self, interval: float, now: float) -> List[Envelope]:
        if interval <= 0:
            raise ValueError("pull interval must be positive")
        return [e.envelope for e in self.store.values()
                if e.expires_at > now and now - interval <= e.received_at <= now]

    def pull_ids(self, now: float) -> List[str]:
        return [k for k, e in self.store.items() if e.expires_at > now]

    def fetch(self, ids, now: float) -> List[Envelope]:
        out = []
        for msg_id in ids:
            entry = self._live_payload(msg_id, now)
            if entry is not None:
                out.append(entry.envelope)
        return out

    def handle_reply(self, reply: ReplyEnvelope, now: float) -> Optional[Action]:
        rid = reply.in_reply_to
        pend = self.pending.get(rid)
        if pend is not None:
            pend.received.append(reply)
            if len(pend.received) >= pend.expected:
                out = self._resolve(pend)
                return out[0] if out else None
            return None
        if rid in self._closed:
            self.counters["late_replies"] += 1
            return None
        entry = self._live_dedup(rid, now)
        if entry is None:
            self.counters["reply_dropped"] += 1
            return None
        if entry.initiator is None:
            self.replies[rid].append(reply)
            return None
        return (entry.initiator, reply)

    def next_deadline(self) -> Optional[float]:
        if not self.pending:
            return None
        return min(p.deadline for p in self.pending.values())

    def tick(self, now: float, rng: Optional[random.Random] = None) -> List[Action]:
        self.expire(now)
        actions: List[Action] = []
        for pend in [p for p in self.pending.values() if p.deadline <= now]:
            self.counters["aggregation_timeouts"] += 1
            actions += self._resolve(pend)
        if self.config.is_pull and len(self.view):
            if self.next_pull is None:
                self.next_pull = now
            if now >= self.next_pull:
                targets = self.view.sample(self.config.fanout, (), rng or random.Random())
                if self.config.variant == EAGER_PULL:
                    window = self.config.pull_window or self.config.data_ttl
                    msg = Pull(window)
                else:
                    msg = PullIds()
                actions += [(t, msg) for t in targets]
                self.next_pull = now + self.config.pull_period
        return actions

    def on_message(self, msg, sender: str, now: float,
                   rng: Optional[random.Random] = None) -> List[Action]:
        """Dispatch one arriving message; the sender's heartbeat is bumped first."""
        self.view.observe(MessageFrom(sender))
        if isinstance(msg, Envelope):
            return self.handle_receive(msg, sender, now, rng)
        if isinstance(msg, ReplyEnvelope):
            out = self.handle_reply(msg, now)
            return [out] if out is not None else []
        if isinstance(msg, Push):
            return self.push(msg.envelopes, sender, now, rng)
        if isinstance(msg, PushIds):
            wanted = self.push_ids([i for i, _ in msg.ids], sender, now, dict(msg.ids))
            return [(sender, Fetch(tuple(wanted)))] if wanted else []
        if isinstance(msg, Fetch):
            envs = self.fetch(msg.ids, now)
            return [(sender, Push(tuple(envs)))] if envs else []
        if isinstance(msg, Pull):
            envs = self.pull(msg.interval, now)
            return [(sender, Push(tuple(envs)))] if envs else []
        if isinstance(msg, PullIds):
            ids = self.pull_ids(now)
            if not ids:
                return []
            return [(sender, PushIds(tuple((i, self.store[i].envelope.hops) for i in ids)))]
        raise TypeError(f"unexpected message {msg!r}")


NodeState = GossipNode
