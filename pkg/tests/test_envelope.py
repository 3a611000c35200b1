import pytest
from hypothesis import given, strategies as st

from gossipsim.envelope import (
    FIELDS,
    ONE_WAY,
    REQUEST_RESPONSE,
    Envelope,
    GossipHeader,
    MalformedEnvelope,
    decode,
    encode,
    field_spans,
)


def make(hops=3, **kw):
    header = GossipHeader("zoneA", fanout=8, hops=hops, id_ttl=30000, data_ttl=0)
    return Envelope(kw.pop("id", "m1"), "set", kw.pop("payload", 21.5), header=header,
                    origin_hops=5, **kw)


labels = st.text(st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=20)
payloads = st.one_of(
    st.none(),
    st.booleans(),
    st.integers(-10**6, 10**6),
    st.floats(allow_nan=False, allow_infinity=False),
    st.text(max_size=20),
)
headers = st.builds(
    GossipHeader,
    scope=labels,
    fanout=st.integers(1, 50),
    hops=st.integers(0, 20),
    id_ttl=st.floats(0, 1e7),
    data_ttl=st.floats(0, 1e7),
    filter=st.one_of(st.none(), st.sampled_from(["max", "min", "sum"])),
)


@st.composite
def envelopes(draw):
    style = draw(st.sampled_from([ONE_WAY, REQUEST_RESPONSE]))
    reply_to = draw(labels) if style == REQUEST_RESPONSE else draw(st.one_of(st.none(), labels))
    return Envelope(
        id=draw(st.text(st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=128)),
        action=draw(labels),
        payload=draw(payloads),
        style=style,
        reply_to=reply_to,
        header=draw(st.one_of(st.none(), headers)),
        origin_hops=draw(st.integers(0, 20)),
    )


def test_encode_is_deterministic():
    e = Envelope("m1", "set", 21.5)
    assert encode(e) == encode(e)
    assert encode(e) == encode(Envelope("m1", "set", 21.5))


def test_golden_bytes():
    # frozen canonical form for a header-less envelope
    e = Envelope("m1", "set", 21.5)
    expected = (
        b"\x00\x00\x00\x02m1" b"\x00\x00\x00\x03set" b"\x00\x00\x00\x07one-way"
        b"\x00\x00\x00\x00" b"\x00\x00\x00\x0421.5"
        + b"\x00\x00\x00\x00" * 6
        + b"\x00\x00\x00\x010"
    )
    assert encode(e) == expected


def test_hops_change_only_touches_hops_field():
    a, b = encode(make(hops=3)), encode(make(hops=2))
    assert len(a) == len(b)
    diff = [i for i, (x, y) in enumerate(zip(a, b)) if x != y]
    start, end = field_spans(a)["hops"]
    assert diff and all(start <= i < end for i in diff)


@given(envelopes())
def test_round_trip(e):
    assert decode(encode(e)) == e


@given(envelopes(), envelopes())
def test_encoding_is_canonical(a, b):
    assert (a == b) == (encode(a) == encode(b))


def test_truncated_input_is_rejected():
    data = encode(make())
    for cut in (1, 5, len(data) // 2, len(data) - 1):
        with pytest.raises(MalformedEnvelope):
            decode(data[:cut])


def test_truncation_names_field():
    data = encode(make())
    start, _ = field_spans(data)["hops"]
    with pytest.raises(MalformedEnvelope) as err:
        decode(data[:start])
    assert err.value.field == "hops"


def _patch(data, name, value: bytes):
    spans = field_spans(data)
    start, end = spans[name]
    length = len(value).to_bytes(4, "big")
    return data[:start - 4] + length + value + data[end:]


def test_zero_fanout_is_rejected():
    with pytest.raises(MalformedEnvelope) as err:
        decode(_patch(encode(make()), "fanout", b"0"))
    assert err.value.field == "fanout"


@pytest.mark.parametrize("name,value", [
    ("id_ttl", b"-1.0"),
    ("data_ttl", b"nan"),
    ("hops", b"-2"),
    ("style", b"broadcast"),
    ("payload", b"{oops"),
])
def test_bad_field_is_named(name, value):
    with pytest.raises(MalformedEnvelope) as err:
        decode(_patch(encode(make()), name, value))
    assert err.value.field == name


def test_trailing_garbage_is_rejected():
    with pytest.raises(MalformedEnvelope):
        decode(encode(make()) + b"\x00")


def test_header_fields_without_scope_are_rejected():
    data = _patch(encode(Envelope("m1", "set", 1.0)), "fanout", b"3")
    with pytest.raises(MalformedEnvelope) as err:
        decode(data)
    assert err.value.field == "fanout"


@pytest.mark.parametrize("kwargs", [
    dict(fanout=0, hops=1, id_ttl=0, data_ttl=0),
    dict(fanout=1, hops=-1, id_ttl=0, data_ttl=0),
    dict(fanout=1, hops=1, id_ttl=-5, data_ttl=0),
    dict(fanout=1, hops=1, id_ttl=0, data_ttl=-0.5),
])
def test_invalid_header_rejected_at_construction(kwargs):
    with pytest.raises(ValueError):
        GossipHeader("s", **kwargs)


def test_request_response_needs_reply_to():
    with pytest.raises(ValueError):
        Envelope("m", "query", None, style=REQUEST_RESPONSE)


def test_balls_and_bins_and_eager_flags():
    h = GossipHeader("s", 2, 3, id_ttl=0, data_ttl=0)
    assert h.balls_and_bins and h.always_eager


def test_field_order_is_fixed():
    assert list(field_spans(encode(make()))) == list(FIELDS)
