"""Peer views: registry-backed full views and Newscast-style shuffling."""
from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Tuple

DEFAULT_CAPACITY = 64
DEFAULT_EXCHANGE_TIMEFRAME = 50_000.0  # ms; ten 5 s event intervals


@dataclass(frozen=True)
class PeerEntry:
    address: str
    service_type: str = "gossip"
    device_id: Optional[str] = None
    heartbeat: int = 0


@dataclass(frozen=True)
class Announce:
    entry: PeerEntry


@dataclass(frozen=True)
class Bye:
    address: str


@dataclass(frozen=True)
class MessageFrom:
    address: str


def _rank(entry: PeerEntry):
    # retention order: highest heartbeat first, then lowest address
    return (-entry.heartbeat, entry.address)


class PeerView:
    """Bounded cache of known peers owned by one node.

    Entries keep insertion order, which is the order ``sample`` draws from,
    so a view built the same way always samples the same way for a given
    random source.
    """

    def __init__(self, owner: str, capacity: int = DEFAULT_CAPACITY,
                 entries: Iterable[PeerEntry] = (),
                 exchange_timeframe: float = DEFAULT_EXCHANGE_TIMEFRAME,
                 service_type: str = "gossip"):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.owner = owner
        self.capacity = capacity
        self.exchange_timeframe = exchange_timeframe
        self.service_type = service_type
        self.last_exchange = 0.0
        self.own_heartbeat = 0
        self._entries: dict = {}
        self._addresses: Optional[List[str]] = None
        self.merge(list(entries))

    def __len__(self):
        return len(self._entries)

    def __contains__(self, address):
        return address in self._entries

    def __repr__(self):
        return f"PeerView({self.owner!r}, {self.entries})"

    @property
    def entries(self) -> List[PeerEntry]:
        return list(self._entries.values())

    @property
    def addresses(self) -> List[str]:
        if self._addresses is None:
            self._addresses = list(self._entries)
        return self._addresses

    def get(self, address: str) -> Optional[PeerEntry]:
        return self._entries.get(address)

    def own_entry(self) -> PeerEntry:
        return PeerEntry(self.owner, self.service_type, None, self.own_heartbeat)

    def _evict(self):
        if len(self._entries) > self.capacity:
            keep = sorted(self._entries.values(), key=_rank)[: self.capacity]
            kept = {e.address for e in keep}
            self._entries = {a: e for a, e in self._entries.items() if a in kept}
        self._addresses = None

    def sample(self, k: int, exclude=(), rng: random.Random = None) -> List[str]:
        """Up to ``k`` distinct addresses, uniform without replacement."""
        if k < 1:
            raise ValueError("k must be >= 1")
        rng = rng or random
        pool = self.addresses
        excluded = [a for a in exclude if a in self._entries]
        take = min(k + len(excluded), len(pool))
        if not excluded:
            return rng.sample(pool, take)
        # a uniform (k+m)-sample with the m excluded dropped is a uniform k-sample of the rest
        drawn = [a for a in rng.sample(pool, take) if a not in excluded]
        return drawn[:k]

    def merge(self, remote: Iterable[PeerEntry], self_address: Optional[str] = None):
        """Union by address keeping the higher heartbeat, then evict to capacity."""
        self_address = self_address or self.owner
        changed = False
        for entry in remote:
            if entry.address == self_address:
                continue
            current = self._entries.get(entry.address)
            if current is None or entry.heartbeat > current.heartbeat:
                self._entries[entry.address] = entry
                changed = True
        if changed:
            self._evict()
        return self

    def observe(self, event):
        if isinstance(event, Announce):
            if event.entry.address == self.owner:
                return self
            current = self._entries.get(event.entry.address)
            if current is not None and current.heartbeat > event.entry.heartbeat:
                self._entries[current.address] = replace(event.entry, heartbeat=current.heartbeat)
            else:
                self._entries[event.entry.address] = event.entry
            self._evict()
        elif isinstance(event, Bye):
            if self._entries.pop(event.address, None) is not None:
                self._addresses = None
        elif isinstance(event, MessageFrom):
            e = self._entries.get(event.address)
            if e is not None:
                self._entries[event.address] = PeerEntry(e.address, e.service_type, e.device_id,
                                                         e.heartbeat + 1)
        else:
            raise TypeError(f"unknown membership event {event!r}")
        return self

    def exchange_request(self, now: float, rng: random.Random) -> Optional[Tuple[str, List[PeerEntry]]]:
        """Pick a shuffle partner once the exchange timeframe has elapsed.

        The outgoing list carries the local entries plus a fresh entry for
        the owner, so a partner that never heard of us learns our address.
        """
        if now - self.last_exchange < self.exchange_timeframe or not self._entries:
            return None
        target = rng.choice(self.addresses)
        self.last_exchange = now
        self.own_heartbeat += 1
        return target, self.entries + [self.own_entry()]

    def exchange_response(self, remote: List[PeerEntry], now: float) -> List[PeerEntry]:
        """Answer an incoming shuffle: reply with our list, then merge theirs."""
        self.last_exchange = now
        self.own_heartbeat += 1
        reply = self.entries + [self.own_entry()]
        self.merge(remote)
        return reply


def sample(view: PeerView, k: int, exclude=(), rng=None) -> List[str]:
    return view.sample(k, exclude, rng)


def merge(view: PeerView, remote, self_address: str) -> PeerView:
    return view.merge(remote, self_address)


def observe(view: PeerView, event) -> PeerView:
    return view.observe(event)


def exchange_request(view: PeerView, now: float, rng):
    return view.exchange_request(now, rng)


class Registry:
    """Centralised directory standing in for a discovery proxy."""

    def __init__(self):
        self._live: dict = {}

    def announce(self, entry: PeerEntry, scope: str):
        self._live[entry.address] = (entry, scope)

    def bye(self, address: str):
        self._live.pop(address, None)

    def __len__(self):
        return len(self._live)

    def snapshot(self, scope: Optional[str] = None) -> List[PeerEntry]:
        return [entry for address, (entry, s) in sorted(self._live.items())
                if scope is None or s == scope]


def registry_snapshot(registry: Registry, scope: Optional[str] = None) -> List[PeerEntry]:
    return registry.snapshot(scope)
