"""Evidence collection: record everything a client sends and receives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from p2pforge.emulator.client import EmulatedClient, Participation, ParticipationRefused
from p2pforge.evidence.bag import BagSealed, EvidenceBag


@dataclass(frozen=True)
class CollectionResult:
    first_seq: int
    end_seq: int  # exclusive
    first_chunk: Optional[int]  # None when nothing was written
    last_chunk: Optional[int]
    started: int
    ended: int

    @property
    def records(self) -> int:
        return self.end_seq - self.first_seq

    def findings(self) -> dict:
        return {
            "records": self.records,
            "seq_range": [self.first_seq, self.end_seq],
            "chunk_range": None if self.first_chunk is None else [self.first_chunk, self.last_chunk],
            "started": self.started,
            "ended": self.ended,
        }


def collect_evidence(client: EmulatedClient, duration: int, bag: EvidenceBag) -> CollectionResult:
    """Service ``client`` for ``duration`` ticks, appending every packet to ``bag``."""
    if bag.sealed:
        raise BagSealed(f"{bag.path} is sealed")
    if client.participation is not Participation.PASSIVE and client.transport.kind != "sim":
        raise ParticipationRefused("evidence collection on a real transport must be passive")
    if duration < 0:
        raise ValueError("duration must be non-negative")
    transport = client.transport
    first_seq, first_byte = bag.next_seq, bag.record_bytes
    previous_tap = client.tap

    def tap(direction, timestamp, src, dst, payload):
        bag.append(direction, timestamp, src, dst, payload)
        if previous_tap is not None:
            previous_tap(direction, timestamp, src, dst, payload)

    client.tap = tap
    start = transport.now()
    try:
        for t in range(start + transport.tick, start + duration + 1, transport.tick):
            transport.advance(t)
            client.service_tick(t)
    finally:
        client.tap = previous_tap
    end_byte = bag.record_bytes
    if end_byte > first_byte:
        first_chunk, last_chunk = first_byte // bag.chunk_size, (end_byte - 1) // bag.chunk_size
    else:
        first_chunk = last_chunk = None
    return CollectionResult(first_seq, bag.next_seq, first_chunk, last_chunk, start, transport.now())
