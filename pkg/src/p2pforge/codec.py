"""Bit-exact wire codec driven by a signature's command formats.

Layout: 1-byte opcode, then fields in declared order. U32/U64 are big-endian;
Bytes is a 2-byte big-endian length prefix plus payload; NodeIdField is 20
raw bytes; EndpointList is a 1-byte count followed by 6-byte IPv4+port
entries. Encoded messages never exceed MAX_MESSAGE bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Any, Optional

from p2pforge.net import ENDPOINT_LEN, NODE_ID_LEN, NULL_ENDPOINT, Endpoint
from p2pforge.signature import CommandFormat, FieldKind, NetworkSignature

MAX_MESSAGE = 1200

_U16 = struct.Struct(">H")
_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")
_EP = struct.Struct(">IH")


class CodecError(ValueError):
    pass


class TruncatedBuffer(CodecError):
    pass


class UnknownOpcode(CodecError):
    pass


class FieldOverrun(CodecError):
    pass


class TrailingBytes(CodecError):
    pass


class MessageTooLarge(CodecError):
    pass


class NonConformingMessage(CodecError):
    pass


@dataclass(frozen=True)
class Message:
    opcode: int
    fields: tuple[Any, ...] = ()
    src: Endpoint = NULL_ENDPOINT
    dst: Endpoint = NULL_ENDPOINT
    timestamp: int = 0


class _Plan:
    __slots__ = ("sig", "by_opcode")

    def __init__(self, sig: NetworkSignature):
        self.sig = sig
        self.by_opcode: dict[int, tuple[CommandFormat, tuple[FieldKind, ...]]] = {
            cmd.opcode: (cmd, tuple(f.kind for f in cmd.fields)) for cmd in sig.commands
        }


_PLANS: dict[int, _Plan] = {}


def _plan(sig: NetworkSignature) -> _Plan:
    # id-keyed: hashing a nested frozen dataclass on every call is too slow
    plan = _PLANS.get(id(sig))
    if plan is None or plan.sig is not sig:
        if len(_PLANS) > 64:
            _PLANS.clear()
        plan = _PLANS[id(sig)] = _Plan(sig)
    return plan


def check_value(kind: FieldKind, value: Any) -> Optional[str]:
    """Return why ``value`` cannot be encoded as ``kind``, or None if it can."""
    if kind is FieldKind.U32 or kind is FieldKind.U64:
        bits = 32 if kind is FieldKind.U32 else 64
        if isinstance(value, bool) or not isinstance(value, int):
            return "expected int"
        if not 0 <= value < (1 << bits):
            return f"does not fit in {bits} bits"
    elif kind is FieldKind.BYTES:
        if not isinstance(value, (bytes, bytearray)):
            return "expected bytes"
        if len(value) > 0xFFFF:
            return "longer than 65535 bytes"
    elif kind is FieldKind.NODE_ID:
        if not isinstance(value, (bytes, bytearray)) or len(value) != NODE_ID_LEN:
            return "expected 20-byte node id"
    elif kind is FieldKind.ENDPOINT_LIST:
        if not isinstance(value, (tuple, list)):
            return "expected sequence of endpoints"
        if len(value) > 0xFF:
            return "more than 255 endpoints"
        for ep in value:
            if not isinstance(ep, Endpoint) or not (0 <= ep.address < 1 << 32 and 0 <= ep.port <= 0xFFFF):
                return "bad endpoint entry"
    return None


def encode(msg: Message, sig: NetworkSignature) -> bytes:
    entry = _plan(sig).by_opcode.get(msg.opcode)
    if entry is None:
        raise NonConformingMessage(f"opcode 0x{msg.opcode:02x} not in signature {sig.network_id}")
    cmd, kinds = entry
    if len(msg.fields) != len(kinds):
        raise NonConformingMessage(f"{cmd.name}: expected {len(kinds)} fields, got {len(msg.fields)}")
    out = bytearray((msg.opcode,))
    for spec, value in zip(cmd.fields, msg.fields):
        problem = check_value(spec.kind, value)
        if problem:
            raise NonConformingMessage(f"{cmd.name}.{spec.name}: {problem}")
        kind = spec.kind
        if kind is FieldKind.U32:
            out += _U32.pack(value)
        elif kind is FieldKind.U64:
            out += _U64.pack(value)
        elif kind is FieldKind.BYTES:
            out += _U16.pack(len(value))
            out += value
        elif kind is FieldKind.NODE_ID:
            out += value
        else:
            out.append(len(value))
            for ep in value:
                out += _EP.pack(ep.address, ep.port)
    if len(out) > MAX_MESSAGE:
        raise MessageTooLarge(f"{cmd.name}: {len(out)} bytes exceeds {MAX_MESSAGE}")
    return bytes(out)


def decode(
    buf: bytes,
    sig: NetworkSignature,
    src: Endpoint = NULL_ENDPOINT,
    dst: Endpoint = NULL_ENDPOINT,
    timestamp: int = 0,
) -> Message:
    """Decode one message; every failure is a :class:`CodecError` subclass."""
    n = len(buf)
    if n == 0:
        raise TruncatedBuffer("empty buffer")
    if n > MAX_MESSAGE:
        raise MessageTooLarge(f"{n} bytes exceeds {MAX_MESSAGE}")
    entry = _plan(sig).by_opcode.get(buf[0])
    if entry is None:
        raise UnknownOpcode(f"opcode 0x{buf[0]:02x}")
    cmd, kinds = entry
    pos = 1
    values: list[Any] = []
    for kind in kinds:
        if kind is FieldKind.U32:
            if pos + 4 > n:
                raise TruncatedBuffer(f"{cmd.name}: u32 at offset {pos}")
            values.append(_U32.unpack_from(buf, pos)[0])
            pos += 4
        elif kind is FieldKind.U64:
            if pos + 8 > n:
                raise TruncatedBuffer(f"{cmd.name}: u64 at offset {pos}")
            values.append(_U64.unpack_from(buf, pos)[0])
            pos += 8
        elif kind is FieldKind.BYTES:
            if pos + 2 > n:
                raise TruncatedBuffer(f"{cmd.name}: length prefix at offset {pos}")
            length = _U16.unpack_from(buf, pos)[0]
            pos += 2
            if pos + length > n:
                raise FieldOverrun(f"{cmd.name}: length {length} exceeds remaining {n - pos}")
            values.append(bytes(buf[pos:pos + length]))
            pos += length
        elif kind is FieldKind.NODE_ID:
            if pos + NODE_ID_LEN > n:
                raise TruncatedBuffer(f"{cmd.name}: node id at offset {pos}")
            values.append(bytes(buf[pos:pos + NODE_ID_LEN]))
            pos += NODE_ID_LEN
        else:
            if pos + 1 > n:
                raise TruncatedBuffer(f"{cmd.name}: endpoint count at offset {pos}")
            count = buf[pos]
            pos += 1
            if pos + count * ENDPOINT_LEN > n:
                raise FieldOverrun(f"{cmd.name}: {count} endpoints exceed remaining {n - pos} bytes")
            values.append(tuple(Endpoint(*_EP.unpack_from(buf, pos + i * ENDPOINT_LEN)) for i in range(count)))
            pos += count * ENDPOINT_LEN
    if pos != n:
        raise TrailingBytes(f"{cmd.name}: {n - pos} unconsumed bytes")
    return Message(buf[0], tuple(values), src, dst, timestamp)


def field_value(msg: Message, sig: NetworkSignature, name: str, default: Any = None) -> Any:
    cmd = sig.command(msg.opcode)
    if cmd is None:
        return default
    idx = cmd.field_index(name)
    return default if idx is None else msg.fields[idx]


def default_value(kind: FieldKind) -> Any:
    if kind is FieldKind.BYTES:
        return b""
    if kind is FieldKind.NODE_ID:
        return bytes(NODE_ID_LEN)
    if kind is FieldKind.ENDPOINT_LIST:
        return ()
    return 0


def build_message(sig: NetworkSignature, role_name: str, values: dict[str, Any], **meta) -> Message:
    """Fill a command's fields by conventional name; unnamed fields get zero values."""
    cmd = sig.role(role_name)
    if cmd is None:
        raise NonConformingMessage(f"signature {sig.network_id} has no {role_name} command")
    fields = tuple(values.get(spec.name, default_value(spec.kind)) for spec in cmd.fields)
    return Message(cmd.opcode, fields, **meta)


def peers_max_entries(sig: NetworkSignature, role_name: str = "PEERS") -> int:
    """How many advertised peers fit in one PEERS message under MAX_MESSAGE."""
    cmd = sig.role(role_name)
    if cmd is None:
        return 0
    fixed = 1
    per_entry = 0
    for spec in cmd.fields:
        if spec.kind is FieldKind.U32:
            fixed += 4
        elif spec.kind is FieldKind.U64:
            fixed += 8
        elif spec.kind is FieldKind.NODE_ID:
            fixed += NODE_ID_LEN
        elif spec.kind is FieldKind.BYTES:
            fixed += 2
            if spec.name == "node_ids":
                per_entry += NODE_ID_LEN
        else:
            fixed += 1
            per_entry += ENDPOINT_LEN
    if per_entry == 0:
        return 0
    return min(0xFF, (MAX_MESSAGE - fixed) // per_entry)
