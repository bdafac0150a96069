"""Peer observations and the bounded peer table both emulator and simulator use."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterator, Optional

from p2pforge.net import Endpoint


class PeerSource(str, Enum):
    BOOTSTRAP = "bootstrap"
    PEER_EXCHANGE = "peer_exchange"
    DHT = "dht"
    INCOMING = "incoming"


@dataclass(frozen=True)
class PeerRecord:
    node_id: bytes
    endpoint: Endpoint
    first_seen: int
    last_seen: int
    source: PeerSource = PeerSource.PEER_EXCHANGE

    def __post_init__(self):
        if self.last_seen < self.first_seen:
            raise ValueError("last_seen precedes first_seen")


def eviction_key(rec: PeerRecord) -> tuple[int, bytes]:
    """Sort key whose minimum is the next entry to evict.

    Stalest last_seen goes first; among equals the larger node id goes first,
    hence the byte inversion.
    """
    return (rec.last_seen, bytes(0xFF - b for b in rec.node_id))


class PeerTable:
    """Bounded map node_id -> PeerRecord with stalest-first eviction."""

    def __init__(self, bound: int):
        if bound < 1:
            raise ValueError("peer table bound must be >= 1")
        self.bound = bound
        self._records: dict[bytes, PeerRecord] = {}

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, node_id: bytes) -> bool:
        return node_id in self._records

    def __iter__(self) -> Iterator[PeerRecord]:
        return iter(self.records())

    def get(self, node_id: bytes) -> Optional[PeerRecord]:
        return self._records.get(node_id)

    def records(self) -> list[PeerRecord]:
        return sorted(self._records.values(), key=lambda r: r.node_id)

    def remove(self, node_id: bytes) -> Optional[PeerRecord]:
        return self._records.pop(node_id, None)

    def update(self, obs: PeerRecord) -> list[PeerRecord]:
        """Fold one observation in; return the records evicted (at most one).

        A known id has last_seen raised and endpoint replaced; a new id is
        inserted, and if that overflows the bound the stalest entry (possibly
        the newcomer itself) is dropped.
        """
        old = self._records.get(obs.node_id)
        if old is not None:
            if obs.last_seen >= old.last_seen:
                self._records[obs.node_id] = replace(old, last_seen=obs.last_seen, endpoint=obs.endpoint)
            return []
        self._records[obs.node_id] = obs
        if len(self._records) <= self.bound:
            return []
        victim = min(self._records.values(), key=eviction_key)
        del self._records[victim.node_id]
        return [victim]

    def touch(self, node_id: bytes, now: int, endpoint: Optional[Endpoint] = None) -> None:
        rec = self._records.get(node_id)
        if rec is not None and now >= rec.last_seen:
            self._records[node_id] = replace(rec, last_seen=now, endpoint=endpoint or rec.endpoint)
