"""Packet-by-packet reconstruction of a sealed, verified bag."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterator, Optional, Union

from p2pforge.codec import CodecError, Message, decode
from p2pforge.evidence.bag import Direction, EvidenceError, PacketRecord, iter_records, read_layout
from p2pforge.evidence.verify import verify
from p2pforge.net import Endpoint
from p2pforge.signature import NetworkSignature, digest


class VerificationRequired(EvidenceError):
    def __init__(self, report):
        super().__init__("bag failed verification: " + "; ".join(report.lines()))
        self.report = report


class SignatureMismatch(EvidenceError):
    pass


@dataclass(frozen=True)
class RawPayload:
    data: bytes
    reason: Optional[str] = None  # codec error name, or None when no signature was given


@dataclass(frozen=True)
class ReplayItem:
    seq: int
    timestamp: int
    direction: Direction
    src: Endpoint
    dst: Endpoint
    body: Union[Message, RawPayload]
    payload: bytes  # exact wire bytes, kept alongside the decoded message

    def line(self, sig: Optional[NetworkSignature] = None) -> str:
        arrow = "->" if self.direction is Direction.OUTBOUND else "<-"
        if isinstance(self.body, Message):
            cmd = sig.command(self.body.opcode) if sig else None
            what = cmd.name if cmd else f"op{self.body.opcode:#04x}"
        else:
            what = "RAW" + (f"[{self.body.reason}]" if self.body.reason else "")
        return f"{self.seq}\t{self.timestamp}\t{arrow}\t{self.src}\t{self.dst}\t{what}\t{self.payload.hex()}"


def replay(path: os.PathLike | str, sig: Optional[NetworkSignature] = None,
           check_signature: bool = True) -> Iterator[ReplayItem]:
    """Yield the bag's records in seq order.

    The bag is verified first. With ``sig``, payloads are decoded; anything
    that fails to decode comes back as RawPayload and iteration continues.
    """
    report = verify(path)
    if not report.ok:
        raise VerificationRequired(report)
    layout = read_layout(path)
    if sig is not None and check_signature and layout.header.get("signature_digest") != digest(sig).hex():
        raise SignatureMismatch("signature digest differs from the one recorded in the bag header")
    return _items(path, layout, sig)


def _items(path, layout, sig) -> Iterator[ReplayItem]:
    for _, rec in iter_records(path, layout):
        yield _item(rec, sig)


def _item(rec: PacketRecord, sig: Optional[NetworkSignature]) -> ReplayItem:
    if sig is None:
        body: Union[Message, RawPayload] = RawPayload(rec.payload)
    else:
        try:
            body = decode(rec.payload, sig, rec.src, rec.dst, rec.timestamp)
        except CodecError as exc:
            body = RawPayload(rec.payload, type(exc).__name__)
    return ReplayItem(rec.seq, rec.timestamp, rec.direction, rec.src, rec.dst, body, rec.payload)
