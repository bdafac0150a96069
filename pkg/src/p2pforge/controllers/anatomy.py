"""Anatomy: classify a network's C&C structure from what one observer sees."""

from __future__ import annotations

import random
import statistics
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

from p2pforge.codec import field_value
from p2pforge.emulator.client import INBOUND, OUTBOUND, EmulatedClient, Observation, Participation
from p2pforge.net import Endpoint
from p2pforge.peers import PeerRecord
from p2pforge.signature import NetworkSignature, Role


class TopologyClass(str, Enum):
    CENTRALIZED = "Centralized"
    DECENTRALIZED = "Decentralized"
    HYBRID = "Hybrid"


class CncObserved(str, Enum):
    PULL = "Pull"
    PUSH = "Push"
    UNKNOWN = "Unknown"


class InsufficientObservations(ValueError):
    pass


@dataclass(frozen=True)
class AnatomyThresholds:
    centralized_share: float = 0.90
    centralized_max_origins: int = 2
    decentralized_coverage: float = 0.25
    decentralized_max_share: float = 0.20
    min_command_messages: int = 50


@dataclass(frozen=True)
class OriginMetrics:
    command_messages: int
    origins: Counter
    observed_peers: int

    def top_share(self, k: int) -> float:
        """Fraction of command messages sent by the ``k`` busiest origins."""
        if not self.command_messages:
            return 0.0
        return sum(n for _, n in self.origins.most_common(k)) / self.command_messages

    @property
    def max_share(self) -> float:
        return self.top_share(1)

    @property
    def coverage(self) -> float:
        return len(self.origins) / self.observed_peers if self.observed_peers else 0.0


@dataclass(frozen=True)
class AnatomyReport:
    topology_class: TopologyClass
    cnc_style_observed: CncObserved
    degree_summary: tuple  # (min, median, max) advertised peer-list sizes
    evidence_refs: tuple  # bag chunk indices holding command-bearing records
    command_messages: int = 0
    origin_count: int = 0
    observed_peers: int = 0

    def findings(self) -> dict:
        return {
            "topology_class": self.topology_class.value,
            "cnc_style_observed": self.cnc_style_observed.value,
            "degree_summary": list(self.degree_summary),
            "evidence_refs": list(self.evidence_refs),
            "command_messages": self.command_messages,
            "origin_count": self.origin_count,
            "observed_peers": self.observed_peers,
        }


def _role_of(sig: NetworkSignature, opcode: int) -> str:
    cmd = sig.command(opcode)
    return cmd.name if cmd else ""


def origin_metrics(observations: Sequence[Observation], sig: NetworkSignature,
                   peers: Iterable[Endpoint] = ()) -> OriginMetrics:
    """Count distinct inbound command messages per sending endpoint.

    A retransmission of the same (sender, serial, payload) is counted once.
    """
    distinct = set()
    for obs in observations:
        if obs.direction != INBOUND or _role_of(sig, obs.message.opcode) != Role.COMMAND:
            continue
        msg = obs.message
        distinct.add((msg.src, field_value(msg, sig, "serial", 0), field_value(msg, sig, "payload", b"")))
    origins = Counter(src for src, _, _ in distinct)
    observed = set(peers) | set(origins)
    return OriginMetrics(len(distinct), origins, len(observed))


def observed_cnc_style(observations: Sequence[Observation], sig: NetworkSignature) -> CncObserved:
    outstanding: Counter = Counter()
    commands = 0
    unsolicited = 0
    for obs in observations:
        role = _role_of(sig, obs.message.opcode)
        if obs.direction == OUTBOUND and role == Role.POLL:
            outstanding[obs.message.dst] += 1
        elif obs.direction == INBOUND and role == Role.COMMAND:
            commands += 1
            if outstanding[obs.message.src] > 0:
                outstanding[obs.message.src] -= 1
            else:
                unsolicited += 1
    if not commands:
        return CncObserved.UNKNOWN
    return CncObserved.PUSH if unsolicited else CncObserved.PULL


def degree_summary(observations: Sequence[Observation], sig: NetworkSignature,
                   snapshots: Sequence[Sequence[PeerRecord]] = ()) -> tuple:
    """Latest advertised peer-list size per responder; falls back to our own table sizes."""
    latest: dict[Endpoint, int] = {}
    for obs in observations:
        if obs.direction == INBOUND and _role_of(sig, obs.message.opcode) == Role.PEERS:
            latest[obs.message.src] = len(field_value(obs.message, sig, "peers", ()))
    sizes = sorted(latest.values()) or sorted(len(s) for s in snapshots)
    if not sizes:
        return (0, 0, 0)
    return (sizes[0], statistics.median_low(sizes), sizes[-1])


def classify(metrics: OriginMetrics, thresholds: AnatomyThresholds = AnatomyThresholds()) -> TopologyClass:
    if metrics.command_messages < thresholds.min_command_messages:
        raise InsufficientObservations(
            f"{metrics.command_messages} command-bearing messages; need {thresholds.min_command_messages}")
    if metrics.top_share(thresholds.centralized_max_origins) >= thresholds.centralized_share:
        return TopologyClass.CENTRALIZED
    if metrics.coverage >= thresholds.decentralized_coverage and metrics.max_share <= thresholds.decentralized_max_share:
        return TopologyClass.DECENTRALIZED
    return TopologyClass.HYBRID


def classify_anatomy(
    observations: Sequence[Observation],
    sig: NetworkSignature,
    *,
    peers: Iterable[Endpoint] = (),
    snapshots: Sequence[Sequence[PeerRecord]] = (),
    evidence_refs: Iterable[int] = (),
    thresholds: AnatomyThresholds = AnatomyThresholds(),
) -> AnatomyReport:
    """``peers`` are every endpoint the observer learned of, directly or via peer lists."""
    if not observations:
        raise InsufficientObservations("no observations")
    metrics = origin_metrics(observations, sig, peers)
    return AnatomyReport(
        topology_class=classify(metrics, thresholds),
        cnc_style_observed=observed_cnc_style(observations, sig),
        degree_summary=degree_summary(observations, sig, snapshots),
        evidence_refs=tuple(sorted(set(evidence_refs))),
        command_messages=metrics.command_messages,
        origin_count=len(metrics.origins),
        observed_peers=metrics.observed_peers,
    )


class _CommandChunkTap:
    """Bag tap that also notes which chunk each inbound command record lands in."""

    def __init__(self, bag, sig: NetworkSignature):
        self.bag = bag
        cmd = sig.role(Role.COMMAND)
        self.opcode = cmd.opcode if cmd else None
        self.chunks: set[int] = set()

    def __call__(self, direction, timestamp, src, dst, payload) -> None:
        if self.opcode is not None and direction == INBOUND and payload[:1] == bytes([self.opcode]):
            self.chunks.add(self.bag.record_bytes // self.bag.chunk_size)
        self.bag.append(direction, timestamp, src, dst, payload)


def observe_anatomy(
    transport,
    sig: NetworkSignature,
    duration: int,
    *,
    bag=None,
    hints: Optional[Sequence[Endpoint]] = None,
    seed: int = 0,
    table_bound: int = 64,
    thresholds: AnatomyThresholds = AnatomyThresholds(),
) -> AnatomyReport:
    """Join with one passive client, watch for ``duration`` ticks, then classify."""
    tap = _CommandChunkTap(bag, sig) if bag is not None else None
    if hints is None:
        hints = transport.bootstrap_hints() if hasattr(transport, "bootstrap_hints") else ()
    client = EmulatedClient(sig, transport, rng=random.Random(seed), participation=Participation.PASSIVE,
                            table_bound=table_bound, tap=tap)
    client.connect(hints)
    peers: set[Endpoint] = set()
    snapshots: list[list[PeerRecord]] = []
    every = sig.timing.ping_interval
    start = transport.now()
    for t in range(start + transport.tick, start + duration + 1, transport.tick):
        transport.advance(t)
        client.service_tick(t)
        peers.update(rec.endpoint for rec in client.drain_learned())
        if (t - start) % every == 0:
            snapshots.append(client.peer_table.records())
    return classify_anatomy(client.observations, sig, peers=peers, snapshots=snapshots,
                            evidence_refs=tap.chunks if tap else (), thresholds=thresholds)
