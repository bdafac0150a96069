"""Signature-driven protocol client that blends into an overlay as a regular node."""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Iterable, Optional, Protocol

from p2pforge.codec import CodecError, Message, build_message, decode, encode, field_value, peers_max_entries
from p2pforge.net import NODE_ID_LEN, Endpoint
from p2pforge.peers import PeerRecord, PeerSource, PeerTable
from p2pforge.signature import CncStyle, NetworkSignature, Role

log = logging.getLogger(__name__)

CONNECT_ATTEMPTS = 3
MISSES_TO_EVICT = 3

INBOUND = "in"
OUTBOUND = "out"

# direction, timestamp, src, dst, exact wire bytes
Tap = Callable[[str, int, Endpoint, Endpoint, bytes], None]


class Transport(Protocol):
    kind: str
    clock: str
    response_timeout: int
    tick: int

    def accepts(self, sig: NetworkSignature) -> bool: ...
    def now(self) -> int: ...
    def timestamp(self) -> int: ...
    def attach(self, endpoint: Optional[Endpoint] = None) -> Endpoint: ...
    def send(self, src: Endpoint, dst: Endpoint, payload: bytes) -> None: ...
    def poll(self, endpoint: Endpoint) -> list: ...
    def advance(self, t: int) -> None: ...
    def is_taken_id(self, node_id: bytes) -> bool: ...


class Participation(str, Enum):
    PASSIVE = "passive"
    CONFORMANT = "conformant"


class BootstrapFailed(RuntimeError):
    pass


class SignatureTransportMismatch(ValueError):
    pass


class ParticipationRefused(ValueError):
    pass


@dataclass(frozen=True)
class Observation:
    """One decoded message as the client saw it, in either direction."""

    direction: str
    timestamp: int
    message: Message
    wire_time: int = 0


@dataclass(frozen=True)
class RawObservation:
    direction: str
    timestamp: int
    src: Endpoint
    dst: Endpoint
    payload: bytes
    error: str


class EmulatedClient:
    def __init__(
        self,
        signature: NetworkSignature,
        transport: Transport,
        *,
        rng: Optional[random.Random] = None,
        participation: Participation = Participation.PASSIVE,
        table_bound: int = 32,
        tap: Optional[Tap] = None,
        endpoint: Optional[Endpoint] = None,
        self_id: Optional[bytes] = None,
    ):
        if not transport.accepts(signature):
            raise SignatureTransportMismatch(
                f"transport does not speak {signature.network_id} {signature.version_text}")
        if participation is Participation.CONFORMANT and transport.kind != "sim":
            raise ParticipationRefused("conformant participation is only permitted on the simulator")
        self.signature = signature
        self.transport = transport
        self.participation = participation
        self.rng = rng or random.Random(0)
        self.tap = tap
        self.self_id = self_id if self_id is not None else self._draw_id()
        self.endpoint = transport.attach(endpoint)
        self.peer_table = PeerTable(table_bound)
        self.connected = False
        self.observations: list[Observation] = []
        self.undecodable: list[RawObservation] = []
        self.learned: list[PeerRecord] = []
        self.commands_seen: list[Observation] = []
        self.record_observations = True
        self._unanswered: dict[bytes, int] = {}
        self._probes: dict[Endpoint, int] = {}
        self._seen_commands: set[tuple[int, bytes]] = set()
        self._held: Optional[Message] = None
        self._nonce = 0
        self._last_query: dict[Endpoint, int] = {}
        self._peers_cap = peers_max_entries(signature)
        self.next_ping: Optional[int] = None
        self.next_pex: Optional[int] = None
        self.next_poll: Optional[int] = None

    def _draw_id(self) -> bytes:
        while True:
            nid = self.rng.getrandbits(NODE_ID_LEN * 8).to_bytes(NODE_ID_LEN, "big")
            if not self.transport.is_taken_id(nid):
                return nid

    # -- sending ------------------------------------------------------------

    def _msg(self, role: str, dst: Endpoint, now: int, **values: Any) -> Message:
        values.setdefault("sender", self.self_id)
        return build_message(self.signature, role, values, src=self.endpoint, dst=dst, timestamp=now)

    def _emit(self, msg: Message, out: list[Message]) -> None:
        payload = encode(msg, self.signature)
        self.transport.send(self.endpoint, msg.dst, payload)
        if self.tap is not None:
            self.tap(OUTBOUND, self.transport.timestamp(), self.endpoint, msg.dst, payload)
        if self.record_observations:
            self.observations.append(Observation(OUTBOUND, msg.timestamp, msg))
        out.append(msg)

    def _next_nonce(self) -> int:
        self._nonce = (self._nonce + 1) & 0xFFFFFFFF
        return self._nonce

    # -- joining ------------------------------------------------------------

    def connect(self, entry_hints: Iterable[Endpoint] = ()) -> "EmulatedClient":
        """Bootstrap through ``entry_hints`` (or the signature's own list).

        Each hint gets up to three attempts; the first one that answers
        seeds the peer table.
        """
        sig = self.signature
        hints = list(entry_hints) or list(sig.bootstrap.endpoints)
        if not hints:
            raise BootstrapFailed("no entry hints and the signature lists none")
        t = self.transport
        for hint in hints:
            for attempt in range(CONNECT_ATTEMPTS):
                now = t.now()
                out: list[Message] = []
                if sig.role(Role.ANNOUNCE) is not None:
                    self._emit(self._msg(Role.ANNOUNCE, hint, now), out)
                if sig.role(Role.GET_PEERS) is not None:
                    self._last_query[hint] = now
                    self._emit(self._msg(Role.GET_PEERS, hint, now), out)
                else:
                    self._emit(self._msg(Role.PING, hint, now, nonce=self._next_nonce()), out)
                deadline = now + t.response_timeout
                answered = False
                while not answered and t.now() < deadline:
                    t.advance(t.now() + t.tick)
                    for delivery in t.poll(self.endpoint):
                        self._receive(delivery, [], source=PeerSource.BOOTSTRAP)
                        if delivery.src == hint:
                            answered = True
                if answered and len(self.peer_table):
                    self._schedule_from(now)
                    return self
                log.debug("hint %s silent (attempt %d)", hint, attempt + 1)
        raise BootstrapFailed(f"none of {len(hints)} hints answered after {CONNECT_ATTEMPTS} attempts each")

    def _schedule_from(self, now: int) -> None:
        timing = self.signature.timing
        self.connected = True
        self.next_ping = now + timing.ping_interval
        self.next_pex = now + timing.peer_exchange_interval
        if self.signature.cnc_style is CncStyle.PULL and timing.command_poll_interval > 0:
            self.next_poll = now + timing.command_poll_interval

    # -- peer table ---------------------------------------------------------

    def peer_table_update(self, observation: PeerRecord) -> list[PeerRecord]:
        if observation.node_id == self.self_id:
            return []
        evicted = self.peer_table.update(observation)
        for rec in evicted:
            self._unanswered.pop(rec.node_id, None)
        return evicted

    # -- servicing ----------------------------------------------------------

    def service_tick(self, now: int) -> list[Message]:
        """Handle queued inbound traffic, then emit whatever the schedule says is due."""
        out: list[Message] = []
        for delivery in self.transport.poll(self.endpoint):
            self._receive(delivery, out)
        if not self.connected:
            return out
        timing = self.signature.timing
        if self.next_ping is not None and now >= self.next_ping:
            self._ping_round(now, out)
            self.next_ping = _advance(self.next_ping, timing.ping_interval, now)
        if self.next_pex is not None and now >= self.next_pex:
            if self.signature.discovery.peer_exchange_enabled:
                self.discover([rec.endpoint for rec in self.peer_table.records()], now, out)
            self.next_pex = _advance(self.next_pex, timing.peer_exchange_interval, now)
        if self.next_poll is not None and now >= self.next_poll:
            if self.signature.role(Role.POLL) is not None:
                for rec in self.peer_table.records():
                    self._emit(self._msg(Role.POLL, rec.endpoint, now), out)
            self.next_poll = _advance(self.next_poll, timing.command_poll_interval, now)
        if self._probes and self.signature.role(Role.PING):
            for ep in sorted(self._probes):
                self._emit(self._msg(Role.PING, ep, now, nonce=self._next_nonce()), out)
            self._probes.clear()
        return out

    def discover(self, endpoints: Iterable[Endpoint], now: int, out: Optional[list[Message]] = None) -> int:
        """Ask each endpoint for its peers, skipping any queried within the last exchange interval."""
        if self.signature.role(Role.GET_PEERS) is None:
            return 0
        out = [] if out is None else out
        interval = self.signature.timing.peer_exchange_interval
        sent = 0
        for ep in endpoints:
            last = self._last_query.get(ep)
            if ep == self.endpoint or (last is not None and now - last < interval):
                continue
            self._last_query[ep] = now
            self._emit(self._msg(Role.GET_PEERS, ep, now), out)
            sent += 1
        return sent

    def _ping_round(self, now: int, out: list[Message]) -> None:
        for rec in self.peer_table.records():
            misses = self._unanswered.get(rec.node_id, 0)
            if misses >= MISSES_TO_EVICT:
                self.peer_table.remove(rec.node_id)
                self._unanswered.pop(rec.node_id, None)
                continue
            self._unanswered[rec.node_id] = misses + 1
            self._emit(self._msg(Role.PING, rec.endpoint, now, nonce=self._next_nonce()), out)

    def _receive(self, delivery, out: list[Message], source: PeerSource = PeerSource.INCOMING) -> None:
        sig = self.signature
        if self.tap is not None:
            stamp = delivery.time if self.transport.clock == "sim" else self.transport.timestamp()
            self.tap(INBOUND, stamp, delivery.src, delivery.dst, delivery.payload)
        now = self.transport.now()
        try:
            msg = decode(delivery.payload, sig, delivery.src, delivery.dst, now)
        except CodecError as exc:
            self.undecodable.append(RawObservation(INBOUND, now, delivery.src, delivery.dst,
                                                   delivery.payload, type(exc).__name__))
            return
        obs = Observation(INBOUND, now, msg, delivery.time)
        if self.record_observations:
            self.observations.append(obs)
        cmd = sig.command(msg.opcode)
        name = cmd.name if cmd else ""
        sender = field_value(msg, sig, "sender")
        if sender is not None and sender != self.self_id and sender != bytes(NODE_ID_LEN):
            self._unanswered[sender] = 0
            self._probes.pop(delivery.src, None)
            rec = PeerRecord(sender, delivery.src, now, now, source)
            self.peer_table_update(rec)
            self.learned.append(rec)

        if name == Role.PING:
            self._emit(self._msg(Role.PONG, delivery.src, now, nonce=field_value(msg, sig, "nonce", 0)), out)
        elif name == Role.GET_PEERS:
            self._emit(self._msg(Role.PEERS, delivery.src, now, **self._advertise(exclude=sender)), out)
        elif name == Role.PEERS:
            self._absorb_peers(msg, now)
        elif name == Role.POLL:
            if self.participation is Participation.CONFORMANT and self._held is not None:
                held = self._held
                self._emit(Message(held.opcode, _with_sender(held, sig, self.self_id),
                                   self.endpoint, delivery.src, now), out)
        elif name == Role.COMMAND:
            self.commands_seen.append(obs)
            key = (field_value(msg, sig, "serial", 0), field_value(msg, sig, "payload", b""))
            if key in self._seen_commands:
                return
            self._seen_commands.add(key)
            self._held = msg
            if self.participation is Participation.CONFORMANT and sig.cnc_style is CncStyle.PUSH:
                fields = _with_sender(msg, sig, self.self_id)
                for rec in self.peer_table.records():
                    if rec.endpoint != delivery.src:
                        self._emit(Message(msg.opcode, fields, self.endpoint, rec.endpoint, now), out)

    def _absorb_peers(self, msg: Message, now: int) -> None:
        sig = self.signature
        endpoints = field_value(msg, sig, "peers", ())
        ids = field_value(msg, sig, "node_ids", b"")
        if len(ids) == NODE_ID_LEN * len(endpoints):
            for i, ep in enumerate(endpoints):
                nid = ids[i * NODE_ID_LEN:(i + 1) * NODE_ID_LEN]
                if nid == self.self_id:
                    continue
                rec = PeerRecord(nid, ep, now, now, PeerSource.PEER_EXCHANGE)
                self.peer_table_update(rec)
                self.learned.append(rec)
        else:
            # endpoints without identities: learn the id from a PONG
            known = {r.endpoint for r in self.peer_table.records()}
            for ep in endpoints:
                if ep not in known and ep != self.endpoint:
                    self._probes[ep] = now

    def _advertise(self, exclude: Optional[bytes]) -> dict[str, Any]:
        recs = [r for r in self.peer_table.records() if r.node_id != exclude][: self._peers_cap]
        return {"node_ids": b"".join(r.node_id for r in recs), "peers": tuple(r.endpoint for r in recs)}

    def drain_learned(self) -> list[PeerRecord]:
        out, self.learned = self.learned, []
        return out


def _with_sender(msg: Message, sig: NetworkSignature, sender: bytes) -> tuple:
    cmd = sig.command(msg.opcode)
    idx = cmd.field_index("sender") if cmd else None
    if idx is None:
        return msg.fields
    fields = list(msg.fields)
    fields[idx] = sender
    return tuple(fields)


def _advance(due: int, interval: int, now: int) -> int:
    due += interval
    while due <= now:
        due += interval
    return due


def connect(
    sig: NetworkSignature,
    transport: Transport,
    entry_hints: Iterable[Endpoint] = (),
    **kwargs: Any,
) -> EmulatedClient:
    return EmulatedClient(sig, transport, **kwargs).connect(entry_hints)


def service_tick(client: EmulatedClient, now: int) -> list[Message]:
    return client.service_tick(now)


def peer_table_update(client: EmulatedClient, observation: PeerRecord) -> list[PeerRecord]:
    return client.peer_table_update(observation)
