import random

import pytest
from hypothesis import given, settings, strategies as st

from p2pforge.codec import (
    MAX_MESSAGE,
    CodecError,
    FieldOverrun,
    Message,
    MessageTooLarge,
    NonConformingMessage,
    TrailingBytes,
    TruncatedBuffer,
    UnknownOpcode,
    decode,
    encode,
    peers_max_entries,
)
from p2pforge.net import Endpoint
from p2pforge.signature import (
    CommandFormat,
    FieldKind,
    FieldSpec,
    Role,
    standard_signature,
)
from dataclasses import replace


@pytest.fixture
def wide_sig(pull_sig):
    extra = CommandFormat("WIDE", 0x20, (
        FieldSpec("a", FieldKind.U32), FieldSpec("b", FieldKind.U64), FieldSpec("c", FieldKind.BYTES),
        FieldSpec("d", FieldKind.NODE_ID), FieldSpec("e", FieldKind.ENDPOINT_LIST)))
    bare = CommandFormat("BARE_PING", 0x21)
    return replace(pull_sig, commands=pull_sig.commands + (extra, bare))


def test_empty_ping_round_trip(wide_sig):
    msg = Message(0x21, ())
    assert encode(msg, wide_sig) == b"\x21"
    assert decode(b"\x21", wide_sig) == msg


def test_unknown_opcode(push_sig):
    with pytest.raises(UnknownOpcode):
        decode(b"\x7f", push_sig)


def test_layout_is_big_endian(wide_sig):
    ep = Endpoint.parse("1.2.3.4:258")
    msg = Message(0x20, (1, 2, b"xy", bytes(range(20)), (ep,)))
    wire = encode(msg, wide_sig)
    assert wire == (b"\x20" + b"\x00\x00\x00\x01" + b"\x00" * 7 + b"\x02" + b"\x00\x02xy"
                    + bytes(range(20)) + b"\x01" + b"\x01\x02\x03\x04\x01\x02")


def test_typed_errors(wide_sig):
    good = encode(Message(0x20, (1, 2, b"xy", bytes(20), ())), wide_sig)
    with pytest.raises(TruncatedBuffer):
        decode(b"", wide_sig)
    with pytest.raises(TruncatedBuffer):
        decode(good[:3], wide_sig)
    with pytest.raises(TrailingBytes):
        decode(good + b"\x00", wide_sig)
    with pytest.raises(FieldOverrun):
        decode(b"\x20" + bytes(12) + b"\xff\xff", wide_sig)
    with pytest.raises(MessageTooLarge):
        decode(b"\x21" * (MAX_MESSAGE + 1), wide_sig)


def test_encode_rejects_nonconforming(wide_sig):
    with pytest.raises(NonConformingMessage):
        encode(Message(0x20, (1,)), wide_sig)
    with pytest.raises(NonConformingMessage):
        encode(Message(0x20, (-1, 2, b"", bytes(20), ())), wide_sig)
    with pytest.raises(NonConformingMessage):
        encode(Message(0x20, (1, 2, b"", bytes(19), ())), wide_sig)
    with pytest.raises(MessageTooLarge):
        encode(Message(0x20, (1, 2, bytes(MAX_MESSAGE), bytes(20), ())), wide_sig)


def test_peers_cap_fits(push_sig):
    cap = peers_max_entries(push_sig)
    msg = Message(push_sig.role(Role.PEERS).opcode,
                  (bytes(20), bytes(20 * cap), tuple(Endpoint(i, i) for i in range(cap))))
    assert len(encode(msg, push_sig)) <= MAX_MESSAGE
    over = Message(msg.opcode, (bytes(20), bytes(20 * (cap + 1)), tuple(Endpoint(i, i) for i in range(cap + 1))))
    with pytest.raises(MessageTooLarge):
        encode(over, push_sig)


_endpoint = st.builds(Endpoint, st.integers(0, 2**32 - 1), st.integers(0, 65535))
_VALUES = {
    FieldKind.U32: st.integers(0, 2**32 - 1),
    FieldKind.U64: st.integers(0, 2**64 - 1),
    FieldKind.BYTES: st.binary(max_size=200),
    FieldKind.NODE_ID: st.binary(min_size=20, max_size=20),
    FieldKind.ENDPOINT_LIST: st.lists(_endpoint, max_size=20).map(tuple),
}


@st.composite
def _conforming(draw, sig):
    cmd = draw(st.sampled_from(sig.commands))
    return Message(cmd.opcode, tuple(draw(_VALUES[f.kind]) for f in cmd.fields))


_WIDE = replace(standard_signature(), commands=standard_signature().commands + (
    CommandFormat("WIDE", 0x20, tuple(FieldSpec(k.value, k) for k in FieldKind)),))


@settings(max_examples=1000, deadline=None)
@given(_conforming(_WIDE))
def test_conforming_round_trip(msg):
    try:
        wire = encode(msg, _WIDE)
    except MessageTooLarge:
        return
    assert decode(wire, _WIDE) == msg
    assert encode(decode(wire, _WIDE), _WIDE) == wire


def test_fuzz_smoke(wide_sig):
    rng = random.Random(3)
    for _ in range(20_000):
        buf = rng.randbytes(rng.randint(0, 64))
        try:
            msg = decode(buf, wide_sig)
        except CodecError:
            continue
        assert encode(msg, wide_sig) == buf
