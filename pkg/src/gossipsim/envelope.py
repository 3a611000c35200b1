"""Message model for gossiped envelopes and its canonical byte form.

Wire layout (all fields in this fixed order)::

    id, action, style, reply_to, payload, scope, fanout, hops,
    id_ttl, data_ttl, filter, origin_hops

Each field is a 4-byte big-endian unsigned length followed by that many
bytes of UTF-8 text. Absent optional fields have length zero. Integers are
written in decimal, durations (milliseconds) as ``repr(float)``, and the
payload as compact JSON. An envelope without a gossip header writes the six
header fields (scope .. filter) as zero-length.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from typing import Any, Optional

ONE_WAY = "one-way"
REQUEST_RESPONSE = "request-response"
STYLES = (ONE_WAY, REQUEST_RESPONSE)

FIELDS = (
    "id",
    "action",
    "style",
    "reply_to",
    "payload",
    "scope",
    "fanout",
    "hops",
    "id_ttl",
    "data_ttl",
    "filter",
    "origin_hops",
)

_LEN = struct.Struct(">I")


class MalformedEnvelope(ValueError):
    """Raised when bytes do not decode to a valid envelope."""

    def __init__(self, field: str, reason: str):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason


def _check_duration(name: str, value: float) -> float:
    value = float(value)
    if math.isnan(value) or value < 0 or math.isinf(value):
        raise ValueError(f"{name} must be a finite non-negative duration, got {value!r}")
    return value


@dataclass(frozen=True)
class GossipHeader:
    scope: str
    fanout: int
    hops: int
    id_ttl: float
    data_ttl: float
    filter: Optional[str] = None

    def __post_init__(self):
        if not self.scope:
            raise ValueError("scope must be a non-empty label")
        if isinstance(self.fanout, bool) or not isinstance(self.fanout, int) or self.fanout < 1:
            raise ValueError(f"fanout must be an integer >= 1, got {self.fanout!r}")
        if isinstance(self.hops, bool) or not isinstance(self.hops, int) or self.hops < 0:
            raise ValueError(f"hops must be a non-negative integer, got {self.hops!r}")
        object.__setattr__(self, "id_ttl", _check_duration("id_ttl", self.id_ttl))
        object.__setattr__(self, "data_ttl", _check_duration("data_ttl", self.data_ttl))
        if self.filter == "":
            raise ValueError("filter name must be non-empty when given")

    @property
    def balls_and_bins(self) -> bool:
        return self.id_ttl == 0

    @property
    def always_eager(self) -> bool:
        return self.data_ttl == 0


@dataclass(frozen=True)
class Envelope:
    id: str
    action: str
    payload: Any
    style: str = ONE_WAY
    reply_to: Optional[str] = None
    header: Optional[GossipHeader] = None
    origin_hops: int = 0

    def __post_init__(self):
        if not isinstance(self.id, str) or not 1 <= len(self.id) <= 128:
            raise ValueError(f"message id must be a 1-128 char string, got {self.id!r}")
        if not self.action:
            raise ValueError("action must be non-empty")
        if self.style not in STYLES:
            raise ValueError(f"unknown style {self.style!r}")
        if self.style == REQUEST_RESPONSE and not self.reply_to:
            raise ValueError("request-response envelopes need reply_to")
        if self.reply_to == "":
            raise ValueError("reply_to must be non-empty when given")
        if self.origin_hops < 0:
            raise ValueError("origin_hops must be non-negative")

    @property
    def hops(self) -> int:
        return self.header.hops if self.header is not None else 0

    def with_hops(self, hops: int) -> "Envelope":
        h = self.header
        header = GossipHeader(h.scope, h.fanout, hops, h.id_ttl, h.data_ttl, h.filter)
        return Envelope(self.id, self.action, self.payload, self.style, self.reply_to,
                        header, self.origin_hops)


@dataclass(frozen=True)
class ReplyEnvelope:
    in_reply_to: str
    payload: Any = None
    fault: Optional[str] = None


def _text(value) -> bytes:
    return b"" if value is None else str(value).encode("utf-8")


def encode(envelope: Envelope) -> bytes:
    h = envelope.header
    parts = [
        _text(envelope.id),
        _text(envelope.action),
        _text(envelope.style),
        _text(envelope.reply_to),
        json.dumps(envelope.payload, separators=(",", ":"), sort_keys=True).encode("utf-8"),
        _text(h and h.scope),
        _text(h and h.fanout),
        _text(h and h.hops),
        _text(h and repr(h.id_ttl)),
        _text(h and repr(h.data_ttl)),
        _text(h and h.filter),
        _text(envelope.origin_hops),
    ]
    out = bytearray()
    for part in parts:
        out += _LEN.pack(len(part))
        out += part
    return bytes(out)


def field_spans(data: bytes) -> dict:
    """Byte range ``(start, end)`` of each field's value inside an encoding."""
    spans = {}
    pos = 0
    for name in FIELDS:
        (length,) = _LEN.unpack_from(data, pos)
        pos += _LEN.size
        spans[name] = (pos, pos + length)
        pos += length
    return spans


def _split(data: bytes) -> dict:
    raw = {}
    pos = 0
    for name in FIELDS:
        if pos + _LEN.size > len(data):
            raise MalformedEnvelope(name, "truncated length prefix")
        (length,) = _LEN.unpack_from(data, pos)
        pos += _LEN.size
        if pos + length > len(data):
            raise MalformedEnvelope(name, f"truncated value ({length} bytes declared)")
        try:
            raw[name] = data[pos:pos + length].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedEnvelope(name, "invalid UTF-8") from exc
        pos += length
    if pos != len(data):
        raise MalformedEnvelope("origin_hops", f"{len(data) - pos} trailing bytes")
    return raw


def _int(raw: dict, name: str, minimum: int) -> int:
    text = raw[name]
    if not text.isdigit() or not text.isascii():
        raise MalformedEnvelope(name, f"expected a decimal integer, got {text!r}")
    value = int(text)
    if value < minimum:
        raise MalformedEnvelope(name, f"must be >= {minimum}, got {value}")
    return value


def _duration(raw: dict, name: str) -> float:
    try:
        value = float(raw[name])
    except ValueError:
        raise MalformedEnvelope(name, f"expected a duration, got {raw[name]!r}") from None
    if math.isnan(value) or math.isinf(value) or value < 0:
        raise MalformedEnvelope(name, f"must be a finite non-negative duration, got {value!r}")
    return value


def decode(data: bytes) -> Envelope:
    raw = _split(data)
    for name in ("id", "action", "style"):
        if not raw[name]:
            raise MalformedEnvelope(name, "missing required field")
    if raw["style"] not in STYLES:
        raise MalformedEnvelope("style", f"unknown style {raw['style']!r}")
    try:
        payload = json.loads(raw["payload"])
    except ValueError:
        raise MalformedEnvelope("payload", "not a JSON value") from None

    header_fields = FIELDS[5:11]
    header = None
    if raw["scope"]:
        for name in ("fanout", "hops", "id_ttl", "data_ttl"):
            if not raw[name]:
                raise MalformedEnvelope(name, "missing header field")
        header = GossipHeader(
            scope=raw["scope"],
            fanout=_int(raw, "fanout", 1),
            hops=_int(raw, "hops", 0),
            id_ttl=_duration(raw, "id_ttl"),
            data_ttl=_duration(raw, "data_ttl"),
            filter=raw["filter"] or None,
        )
    else:
        for name in header_fields:
            if raw[name]:
                raise MalformedEnvelope(name, "header field present without scope")

    if len(raw["id"]) > 128:
        raise MalformedEnvelope("id", "longer than 128 characters")
    if raw["style"] == REQUEST_RESPONSE and not raw["reply_to"]:
        raise MalformedEnvelope("reply_to", "required for request-response")
    return Envelope(
        id=raw["id"],
        action=raw["action"],
        payload=payload,
        style=raw["style"],
        reply_to=raw["reply_to"] or None,
        header=header,
        origin_hops=_int(raw, "origin_hops", 0),
    )
