"""Deterministic discrete-event simulation of a P2P botnet overlay.

Sim-to-sim overlay maintenance (pings, peer exchange, command flooding) is
modelled abstractly as scheduled events; only traffic that crosses to or from
an attached external endpoint (an emulated client) is encoded on the wire.
Every join, leave, address reassignment, command hop and wire message lands
in the append-only event log.

Time is an integer. Events are ordered by (time, scheduling sequence number),
so a (config, signature) pair fully determines every observable.
"""

from __future__ import annotations

import hashlib
import heapq
import hmac
import logging
import math
import random
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional

from p2pforge.codec import CodecError, Message, build_message, decode, encode, field_value, peers_max_entries
from p2pforge.net import NODE_ID_LEN, Endpoint, short_id
from p2pforge.peers import PeerRecord, PeerSource
from p2pforge.signature import CncStyle, Membership, NetworkSignature, Role, standard_signature
from p2pforge.simnet.config import BotnetType, SimConfig, Topology

log = logging.getLogger(__name__)

MISSES_TO_EVICT = 3
LATENCY = 1

POOL_BASE = 0x0A000000  # 10.0.0.0
NAT_BASE = 0x64400000  # 100.64.0.0
EXTERNAL_BASE = 0xC0A80000  # 192.168.0.0
NAT_BOX_SIZE = 4


@dataclass(frozen=True)
class StagedCommand:
    serial: int
    payload: bytes
    auth: bytes
    origin: bytes  # node id advertised as sender on the wire

    @property
    def key(self) -> tuple[int, bytes]:
        return (self.serial, self.payload)


@dataclass
class SimNode:
    node_id: bytes
    endpoint: Endpoint
    is_bot: bool
    is_legitimate_peer: bool
    table_bound: int
    peer_table: dict[bytes, PeerRecord] = field(default_factory=dict)
    alive: bool = True
    executed_commands: list[tuple[bytes, int]] = field(default_factory=list)
    relays: bool = True
    nat_box: Optional[int] = None
    epoch: int = 0
    misses: dict[bytes, int] = field(default_factory=dict)
    pending_pings: set[bytes] = field(default_factory=set)
    seen_commands: set[tuple[int, bytes]] = field(default_factory=set)
    held_command: Optional[StagedCommand] = None
    poll_phase: int = 0
    degree_goal: int = 0
    exec_serials: dict[int, int] = field(default_factory=dict)

    def peer_ids(self) -> list[bytes]:
        return sorted(self.peer_table)


@dataclass
class Delivery:
    time: int
    src: Endpoint
    dst: Endpoint
    payload: bytes


@dataclass
class ExternalPeer:
    endpoint: Endpoint
    node_id: Optional[bytes] = None
    mailbox: list[Delivery] = field(default_factory=list)


@dataclass(frozen=True)
class LogEntry:
    time: int
    kind: str
    payload: tuple[str, ...]

    def line(self) -> str:
        return "\t".join((str(self.time), self.kind) + self.payload)


class SimWorld:
    """A built overlay plus its pending events; advance with :meth:`run_until`."""

    def __init__(self, config: SimConfig, signature: Optional[NetworkSignature] = None):
        config.check()
        if signature is None:
            signature = default_signature_for(config)
        self.config = config
        self.signature = signature
        self.rng = random.Random(config.seed)
        self.current_time = 0
        self.nodes: dict[bytes, SimNode] = {}
        self.event_log: list[LogEntry] = []
        self.bootstrap_ids: list[bytes] = []
        self.botmaster_entry: Optional[bytes] = None
        self.staged: Optional[StagedCommand] = None
        self.externals: dict[Endpoint, ExternalPeer] = {}
        self._queue: list[tuple[int, int, str, tuple]] = []
        self._seq = 0
        self._serial = 0
        self._route: dict[Endpoint, bytes] = {}
        self._nat_endpoints: list[Endpoint] = []
        self._nat_map: dict[tuple[Endpoint, Endpoint], bytes] = {}
        self._intervals: dict[bytes, list[list[Optional[int]]]] = {}
        self._pairings: dict[tuple[bytes, Endpoint], int] = {}
        self._injections: dict[int, tuple[int, StagedCommand, bool]] = {}
        self._nonce = 0
        self._peers_cap = peers_max_entries(signature)

    # -- scheduling ---------------------------------------------------------

    def schedule(self, time: int, kind: str, *args: Any) -> None:
        heapq.heappush(self._queue, (time, self._seq, kind, args))
        self._seq += 1

    def log(self, kind: str, *payload: Any) -> None:
        self.event_log.append(LogEntry(self.current_time, kind, tuple(str(p) for p in payload)))

    def run_until(self, t: int) -> "SimWorld":
        if t < self.current_time:
            raise ValueError(f"cannot run backwards from {self.current_time} to {t}")
        q = self._queue
        while q and q[0][0] <= t:
            time, _, kind, args = heapq.heappop(q)
            self.current_time = time
            getattr(self, "_on_" + kind)(*args)
        self.current_time = t
        return self

    def pending_events(self) -> int:
        return len(self._queue)

    def export_event_log(self) -> str:
        return "".join(entry.line() + "\n" for entry in self.event_log)

    # -- helpers ------------------------------------------------------------

    @property
    def timing(self):
        return self.signature.timing

    def alive_ids(self) -> list[bytes]:
        return [nid for nid, n in self.nodes.items() if n.alive]

    def bots(self) -> list[SimNode]:
        return [n for n in self.nodes.values() if n.is_bot]

    def _new_node_id(self) -> bytes:
        while True:
            nid = self.rng.getrandbits(NODE_ID_LEN * 8).to_bytes(NODE_ID_LEN, "big")
            if nid not in self.nodes and all(e.node_id != nid for e in self.externals.values()):
                return nid

    def is_taken_id(self, node_id: bytes) -> bool:
        return node_id in self.nodes or any(e.node_id == node_id for e in self.externals.values())

    def _draw_endpoint(self, port: int) -> Endpoint:
        pool = self.config.dhcp.address_pool_size
        for _ in range(64):
            ep = Endpoint(POOL_BASE + self.rng.randrange(pool), port)
            if ep not in self._route:
                return ep
        while True:
            ep = Endpoint(POOL_BASE + self.rng.randrange(pool), self.rng.randrange(1024, 65536))
            if ep not in self._route:
                return ep

    def _observe_pairing(self, node: SimNode) -> None:
        self._pairings.setdefault((node.node_id, node.endpoint), self.current_time)

    def _set_alive(self, node: SimNode, alive: bool) -> None:
        node.alive = alive
        node.epoch += 1
        spans = self._intervals.setdefault(node.node_id, [])
        if alive:
            spans.append([self.current_time, None])
            if node.nat_box is None:
                self._route[node.endpoint] = node.node_id
            self._observe_pairing(node)
        else:
            spans[-1][1] = self.current_time
            if self._route.get(node.endpoint) == node.node_id:
                del self._route[node.endpoint]

    def _link(self, a: SimNode, b: SimNode, source: PeerSource = PeerSource.BOOTSTRAP) -> None:
        now = self.current_time
        a.peer_table[b.node_id] = PeerRecord(b.node_id, b.endpoint, now, now, source)
        b.peer_table[a.node_id] = PeerRecord(a.node_id, a.endpoint, now, now, source)

    def _evict(self, node: SimNode, peer_id: bytes) -> None:
        node.peer_table.pop(peer_id, None)
        node.misses.pop(peer_id, None)
        node.pending_pings.discard(peer_id)
        self.log("evict", node.node_id.hex(), peer_id.hex())

    # -- construction -------------------------------------------------------

    def _build(self) -> None:
        cfg = self.config
        rng = self.rng
        ids = []
        for _ in range(cfg.node_count):
            nid = self._new_node_id()
            self.nodes[nid] = None  # type: ignore[assignment]  # reserved until constructed
            ids.append(nid)

        bot_ids = set(ids) if cfg.botnet_type is BotnetType.BOT_ONLY else set(rng.sample(ids, cfg.bot_count))
        nat_ids = rng.sample(ids, cfg.nat_count)
        n_boxes = math.ceil(len(nat_ids) / NAT_BOX_SIZE)
        for i in range(n_boxes):
            self._nat_endpoints.append(Endpoint(NAT_BASE + i, rng.randrange(1024, 65536)))
        nat_box_of = {nid: i % n_boxes for i, nid in enumerate(nat_ids)}

        bound = 2 * cfg.degree_target
        for nid in ids:
            is_bot = nid in bot_ids
            if cfg.botnet_type is BotnetType.BOT_ONLY:
                legit = False
            elif cfg.botnet_type is BotnetType.PARASITE:
                legit = True
            else:
                legit = not is_bot
            box = nat_box_of.get(nid)
            port = rng.randrange(1024, 65536)
            ep = self._nat_endpoints[box] if box is not None else self._draw_endpoint(port)
            node = SimNode(nid, ep, is_bot, legit, bound, nat_box=box, degree_goal=cfg.degree_target)
            self.nodes[nid] = node
            self._set_alive(node, True)
            self.log("spawn", nid.hex(), ep, int(is_bot), "nat" if box is not None else "-")

        order = list(ids)
        rng.shuffle(order)
        bot_order = [nid for nid in order if nid in bot_ids]
        if cfg.topology is Topology.STAR:
            self._build_star(order, bot_order)
        elif cfg.topology is Topology.TWO_TIER:
            self._build_two_tier(order, bot_order)
        else:
            self._build_mesh(order, bot_order)
        self.botmaster_entry = self.bootstrap_ids[0] if self.bootstrap_ids else None

        t = self.timing
        for nid in ids:
            self._start_timers(self.nodes[nid])
        if cfg.churn is not None:
            self.schedule(self._exp(cfg.churn.mean_leave_interval), "leave")
            self.schedule(self._exp(cfg.churn.mean_join_interval), "join")
        if cfg.dhcp.enabled:
            self.schedule(cfg.dhcp.reassign_interval, "dhcp")
        log.debug("built %d-node %s world (seed %d, ping %d)", cfg.node_count,
                  cfg.botnet_type.value, cfg.seed, t.ping_interval)

    def _build_mesh(self, order: list[bytes], bot_order: list[bytes]) -> None:
        rng = self.rng
        n = len(order)
        target = self.config.degree_target
        rings = [order]
        if self.config.botnet_type is not BotnetType.BOT_ONLY:
            rings.append(bot_order)
        for ring in rings:
            if len(ring) == 2:
                self._link(self.nodes[ring[0]], self.nodes[ring[1]])
            elif len(ring) > 2:
                for i, nid in enumerate(ring):
                    self._link(self.nodes[nid], self.nodes[ring[(i + 1) % len(ring)]])
        for nid in order:
            node = self.nodes[nid]
            while len(node.peer_table) < target:
                candidates = [
                    other for other in order
                    if other != nid and other not in node.peer_table
                    and len(self.nodes[other].peer_table) < self.nodes[other].table_bound
                ]
                if not candidates:
                    break
                self._link(node, self.nodes[rng.choice(candidates)])
        pick = bot_order if bot_order else order
        self.bootstrap_ids = sorted(rng.sample(pick, min(3, len(pick))))
        assert n == len(self.nodes)

    def _build_star(self, order: list[bytes], bot_order: list[bytes]) -> None:
        hub = self.nodes[bot_order[0]]
        hub.table_bound = len(order)
        hub.degree_goal = len(order) - 1
        for nid in order:
            if nid != hub.node_id:
                self._link(hub, self.nodes[nid])
                self.nodes[nid].degree_goal = 1
                self.nodes[nid].relays = False  # the hub alone distributes commands
        self.bootstrap_ids = [hub.node_id]

    def _build_two_tier(self, order: list[bytes], bot_order: list[bytes]) -> None:
        rng = self.rng
        n_super = min(len(bot_order), max(4, len(order) // 10))
        supers = bot_order[:n_super]
        for i, a in enumerate(supers):
            self.nodes[a].table_bound = len(order)
            self.nodes[a].degree_goal = len(supers) - 1
            for b in supers[i + 1:]:
                self._link(self.nodes[a], self.nodes[b])
        for nid in order:
            if nid in supers:
                continue
            leaf = self.nodes[nid]
            leaf.relays = False
            leaf.degree_goal = min(2, len(supers))
            for s in rng.sample(supers, leaf.degree_goal):
                self._link(leaf, self.nodes[s])
        self.bootstrap_ids = sorted(supers)

    def _start_timers(self, node: SimNode) -> None:
        t = self.timing
        rng = self.rng
        self.schedule(self.current_time + rng.randint(1, t.ping_interval), "ping", node.node_id, node.epoch)
        self.schedule(self.current_time + rng.randint(1, t.peer_exchange_interval), "pex", node.node_id, node.epoch)
        if self.signature.cnc_style is CncStyle.PULL and node.is_bot:
            node.poll_phase = rng.randint(1, t.command_poll_interval)
            self.schedule(self.current_time + node.poll_phase, "poll", node.node_id, node.epoch)

    def _exp(self, mean: int) -> int:
        return self.current_time + max(1, math.ceil(self.rng.expovariate(1.0 / mean)))

    # -- overlay maintenance ------------------------------------------------

    def _on_ping(self, nid: bytes, epoch: int) -> None:
        node = self.nodes[nid]
        if not node.alive or node.epoch != epoch:
            return
        now = self.current_time
        evicted = False
        for pid in node.peer_ids():
            rec = node.peer_table[pid]
            peer = self.nodes.get(pid)
            if peer is not None:
                if peer.alive:
                    node.peer_table[pid] = PeerRecord(pid, peer.endpoint, rec.first_seen, now, rec.source)
                    node.misses[pid] = 0
                    continue
                missed = True
            else:
                missed = pid in node.pending_pings
                if not missed:
                    node.misses[pid] = 0
            if missed:
                node.misses[pid] = node.misses.get(pid, 0) + 1
                if node.misses[pid] >= MISSES_TO_EVICT:
                    self._evict(node, pid)
                    evicted = True
                    continue
            if peer is None:
                self._nonce = (self._nonce + 1) & 0xFFFFFFFF
                node.pending_pings.add(pid)
                self._send_from(node, rec.endpoint, Role.PING, {"nonce": self._nonce})
        if evicted and len(node.peer_table) < node.degree_goal:
            self._request_exchange(node)
        self.schedule(now + self.timing.ping_interval, "ping", nid, epoch)

    def _request_exchange(self, node: SimNode, periodic: bool = False) -> None:
        # off-schedule repairs stay inside the sim so wire traffic keeps the signature's timing
        responsive = [
            pid for pid in node.peer_ids()
            if node.misses.get(pid, 0) == 0 and (periodic or pid in self.nodes)
        ]
        if not responsive:
            self._rebootstrap(node)
            return
        target = self.rng.choice(responsive)
        peer = self.nodes.get(target)
        if peer is None:
            rec = node.peer_table[target]
            self._send_from(node, rec.endpoint, Role.GET_PEERS, {})
        else:
            self.schedule(self.current_time + LATENCY, "pex_reply", node.node_id, node.epoch, target)

    def _on_pex(self, nid: bytes, epoch: int) -> None:
        node = self.nodes[nid]
        if not node.alive or node.epoch != epoch:
            return
        if self.signature.discovery.peer_exchange_enabled:
            self._request_exchange(node, periodic=True)
        self.schedule(self.current_time + self.timing.peer_exchange_interval, "pex", nid, epoch)

    def _on_pex_reply(self, nid: bytes, epoch: int, from_id: bytes) -> None:
        node = self.nodes[nid]
        peer = self.nodes[from_id]
        if not node.alive or node.epoch != epoch or not peer.alive:
            return
        candidates = [
            pid for pid in peer.peer_ids()
            if pid != nid and pid not in node.peer_table
            and pid in self.nodes and self.nodes[pid].alive
        ]
        self._adopt(node, candidates, PeerSource.PEER_EXCHANGE)

    def _adopt(self, node: SimNode, candidates: list[bytes], source: PeerSource) -> None:
        want = node.degree_goal - len(node.peer_table)
        if want <= 0 or not candidates:
            return
        now = self.current_time
        for pid in self.rng.sample(candidates, min(want, len(candidates))):
            other = self.nodes[pid]
            node.peer_table[pid] = PeerRecord(pid, other.endpoint, now, now, source)
            node.misses[pid] = 0
            if node.node_id not in other.peer_table and len(other.peer_table) < other.table_bound:
                other.peer_table[node.node_id] = PeerRecord(node.node_id, node.endpoint, now, now,
                                                            PeerSource.INCOMING)
                other.misses[node.node_id] = 0

    def _rebootstrap(self, node: SimNode) -> None:
        others = [pid for pid in self.alive_ids() if pid != node.node_id]
        if self.config.botnet_type is BotnetType.BOT_ONLY or node.is_bot:
            bots = [pid for pid in others if self.nodes[pid].is_bot]
            others = bots or others
        self._adopt(node, others, PeerSource.BOOTSTRAP)

    # -- churn and addressing -----------------------------------------------

    def _on_leave(self) -> None:
        alive = self.alive_ids()
        if len(alive) > 2:
            self.depart(self.rng.choice(alive))
        self.schedule(self._exp(self.config.churn.mean_leave_interval), "leave")

    def depart(self, nid: bytes) -> None:
        """Take ``nid`` offline now; its former peers notice through missed pings."""
        node = self.nodes[nid]
        if not node.alive:
            return
        self._set_alive(node, False)
        node.peer_table.clear()
        node.misses.clear()
        node.pending_pings.clear()
        self.log("leave", node.node_id.hex(), node.endpoint)

    def _on_join(self) -> None:
        departed = [nid for nid, n in self.nodes.items() if not n.alive]
        if departed:
            node = self.nodes[self.rng.choice(departed)]
            if self.config.dhcp.enabled and node.nat_box is None:
                node.endpoint = self._draw_endpoint(node.endpoint.port)
            self._set_alive(node, True)
            self.log("join", node.node_id.hex(), node.endpoint)
            self._rebootstrap(node)
            self._start_timers(node)
        self.schedule(self._exp(self.config.churn.mean_join_interval), "join")

    def _on_dhcp(self) -> None:
        for node in self.nodes.values():
            if not node.alive or node.nat_box is not None:
                continue
            old = node.endpoint
            del self._route[old]
            node.endpoint = self._draw_endpoint(old.port)
            self._route[node.endpoint] = node.node_id
            self._observe_pairing(node)
            self.log("dhcp", node.node_id.hex(), old, node.endpoint)
        self.schedule(self.current_time + self.config.dhcp.reassign_interval, "dhcp")

    # -- command and control ------------------------------------------------

    def authorize(self, serial: int, payload: bytes, key: bytes) -> bytes:
        return hmac.new(key, serial.to_bytes(8, "big") + payload, hashlib.sha256).digest()

    def authentic(self, cmd: StagedCommand) -> bool:
        expected = self.authorize(cmd.serial, cmd.payload, self.config.botmaster_key)
        return hmac.compare_digest(expected, cmd.auth)

    def current_entry(self) -> Optional[bytes]:
        entry = self.botmaster_entry
        if entry is not None and self.nodes[entry].alive:
            return entry
        live_bots = sorted(n.node_id for n in self.nodes.values() if n.is_bot and n.alive)
        return live_bots[0] if live_bots else None

    def inject_command(self, command: bytes, key: bytes, style: CncStyle) -> int:
        """Issue ``command`` as the botmaster would; returns the injection time."""
        if style is not self.signature.cnc_style:
            raise ValueError(f"world speaks {self.signature.cnc_style.value}, not {style.value}")
        self._serial += 1
        cmd = StagedCommand(self._serial, bytes(command), self.authorize(self._serial, command, key), bytes(NODE_ID_LEN))
        ok = self.authentic(cmd)
        self._injections[cmd.serial] = (self.current_time, cmd, ok)
        self.log("inject", cmd.serial, style.value, command.hex(), int(ok))
        if style is CncStyle.PUSH:
            entry = self.current_entry()
            if entry is not None:
                self.schedule(self.current_time + LATENCY, "cmd", entry, cmd)
        else:
            self.staged = cmd
        return self.current_time

    def start_botmaster(self, interval: int, count: int, key: Optional[bytes] = None,
                        prefix: bytes = b"cmd-") -> None:
        """Have the botmaster issue ``count`` commands, one every ``interval`` ticks."""
        if interval <= 0 or count < 0:
            raise ValueError("interval must be positive and count non-negative")
        key = self.config.botmaster_key if key is None else key
        for i in range(count):
            self.schedule(self.current_time + (i + 1) * interval, "botmaster", prefix + str(i).encode(), key)

    def _on_botmaster(self, command: bytes, key: bytes) -> None:
        self.inject_command(command, key, self.signature.cnc_style)

    def _execute(self, node: SimNode, cmd: StagedCommand) -> None:
        node.executed_commands.append((cmd.payload, self.current_time))
        node.exec_serials.setdefault(cmd.serial, self.current_time)
        node.held_command = cmd
        self.log("exec", node.node_id.hex(), cmd.serial)

    def _on_cmd(self, nid: bytes, cmd: StagedCommand) -> None:
        node = self.nodes[nid]
        if not node.alive or not node.is_bot or cmd.key in node.seen_commands:
            return
        node.seen_commands.add(cmd.key)
        if not self.authentic(cmd):
            self.log("reject", nid.hex(), cmd.serial)
            return
        self._execute(node, cmd)
        if not node.relays:
            return
        relayed = StagedCommand(cmd.serial, cmd.payload, cmd.auth, node.node_id)
        for pid in node.peer_ids():
            peer = self.nodes.get(pid)
            if peer is None:
                self._send_from(node, node.peer_table[pid].endpoint, Role.COMMAND, _command_fields(relayed))
            else:
                self.log("fwd", nid.hex(), pid.hex(), cmd.serial)
                self.schedule(self.current_time + LATENCY, "cmd", pid, relayed)

    def _on_poll(self, nid: bytes, epoch: int) -> None:
        node = self.nodes[nid]
        if not node.alive or node.epoch != epoch:
            return
        cmd = self.staged
        if cmd is not None and cmd.key not in node.seen_commands:
            node.seen_commands.add(cmd.key)
            if self.authentic(cmd):
                self.schedule(self.current_time + LATENCY, "exec", nid, epoch, cmd)
            else:
                self.log("reject", nid.hex(), cmd.serial)
        self.schedule(self.current_time + self.timing.command_poll_interval, "poll", nid, epoch)

    def _on_exec(self, nid: bytes, epoch: int, cmd: StagedCommand) -> None:
        node = self.nodes[nid]
        if node.alive and node.epoch == epoch:
            self._execute(node, StagedCommand(cmd.serial, cmd.payload, cmd.auth, nid))

    @property
    def last_serial(self) -> int:
        return self._serial

    def injection(self, serial: int) -> tuple[int, StagedCommand, bool]:
        return self._injections[serial]

    def executed_by(self, serial: int) -> dict[bytes, int]:
        """node id -> execution time for the command with ``serial``."""
        return {nid: n.exec_serials[serial] for nid, n in self.nodes.items() if serial in n.exec_serials}

    # -- external endpoints (emulated clients) -------------------------------

    def attach(self, endpoint: Optional[Endpoint] = None) -> Endpoint:
        if endpoint is None:
            k = len(self.externals) + 1
            endpoint = Endpoint(EXTERNAL_BASE + k, 40000 + k)
        if endpoint in self.externals or endpoint in self._route:
            raise ValueError(f"endpoint {endpoint} already in use")
        self.externals[endpoint] = ExternalPeer(endpoint)
        self.log("attach", endpoint)
        return endpoint

    def send(self, src: Endpoint, dst: Endpoint, payload: bytes) -> None:
        """Queue a wire message from an attached endpoint."""
        if src not in self.externals:
            raise ValueError(f"{src} is not attached")
        self.log("send", src, dst, payload.hex())
        self.schedule(self.current_time + LATENCY, "deliver", src, dst, bytes(payload))

    def drain(self, endpoint: Endpoint) -> list[Delivery]:
        ext = self.externals[endpoint]
        out, ext.mailbox = ext.mailbox, []
        return out

    def _send_from(self, node: SimNode, dst: Endpoint, role: str, values: dict[str, Any]) -> None:
        if self.signature.role(role) is None:
            return
        values = dict(values)
        values.setdefault("sender", node.node_id)
        payload = encode(build_message(self.signature, role, values), self.signature)
        if node.nat_box is not None:
            self._nat_map[(node.endpoint, dst)] = node.node_id
        self.log("send", node.endpoint, dst, payload.hex())
        self.schedule(self.current_time + LATENCY, "deliver", node.endpoint, dst, payload)

    def _resolve(self, src: Endpoint, dst: Endpoint) -> Optional[SimNode]:
        nid = self._route.get(dst)
        if nid is None:
            nid = self._nat_map.get((dst, src))
        if nid is None:
            return None
        node = self.nodes[nid]
        return node if node.alive and node.endpoint == dst else None

    def _on_deliver(self, src: Endpoint, dst: Endpoint, payload: bytes) -> None:
        ext = self.externals.get(dst)
        if ext is not None:
            self.log("deliver", src, dst, payload.hex())
            ext.mailbox.append(Delivery(self.current_time, src, dst, payload))
            return
        node = self._resolve(src, dst)
        if node is None:
            self.log("drop", src, dst, "unreachable")
            return
        if not node.is_bot:
            self.log("drop", src, dst, "not-a-bot")
            return
        try:
            msg = decode(payload, self.signature, src, dst, self.current_time)
        except CodecError as exc:
            self.log("drop", src, dst, type(exc).__name__)
            return
        self.log("deliver", src, dst, payload.hex())
        self._handle_external(node, msg)

    def _handle_external(self, node: SimNode, msg: Message) -> None:
        sig = self.signature
        cmd = sig.command(msg.opcode)
        name = cmd.name if cmd else ""
        sender = field_value(msg, sig, "sender")
        now = self.current_time
        if sender is not None and sender != bytes(NODE_ID_LEN):
            ext = self.externals.get(msg.src)
            if ext is not None:
                ext.node_id = sender
            rec = node.peer_table.get(sender)
            if rec is not None and sender not in self.nodes:
                node.peer_table[sender] = PeerRecord(sender, msg.src, rec.first_seen, now, rec.source)

        if name == Role.PING:
            self._send_from(node, msg.src, Role.PONG, {"nonce": field_value(msg, sig, "nonce", 0)})
        elif name == Role.PONG:
            if sender is not None:
                node.pending_pings.discard(sender)
                node.misses[sender] = 0
        elif name == Role.GET_PEERS:
            self._insert_incoming(node, sender, msg.src)
            self._send_from(node, msg.src, Role.PEERS, self._advertise(node, exclude=sender))
        elif name == Role.ANNOUNCE:
            self._insert_incoming(node, sender, msg.src)
        elif name == Role.PEERS:
            ids = field_value(msg, sig, "node_ids", b"")
            learned = [ids[i:i + NODE_ID_LEN] for i in range(0, len(ids), NODE_ID_LEN)]
            known = [pid for pid in learned
                     if pid in self.nodes and self.nodes[pid].alive
                     and pid != node.node_id and pid not in node.peer_table]
            self._adopt(node, known, PeerSource.PEER_EXCHANGE)
        elif name == Role.POLL:
            if node.held_command is not None:
                held = node.held_command
                relayed = StagedCommand(held.serial, held.payload, held.auth, node.node_id)
                self._send_from(node, msg.src, Role.COMMAND, _command_fields(relayed))
        elif name == Role.COMMAND:
            staged = StagedCommand(
                field_value(msg, sig, "serial", 0),
                field_value(msg, sig, "payload", b""),
                field_value(msg, sig, "auth", b""),
                sender or bytes(NODE_ID_LEN),
            )
            self._on_cmd(node.node_id, staged)

    def _insert_incoming(self, node: SimNode, sender: Optional[bytes], src: Endpoint) -> None:
        if not sender or sender == node.node_id or sender in node.peer_table:
            return
        if len(node.peer_table) >= node.table_bound:
            return
        now = self.current_time
        node.peer_table[sender] = PeerRecord(sender, src, now, now, PeerSource.INCOMING)
        node.misses[sender] = 0

    def _advertise(self, node: SimNode, exclude: Optional[bytes]) -> dict[str, Any]:
        entries = [
            rec for pid, rec in sorted(node.peer_table.items())
            if pid != exclude and (pid not in self.nodes or self.nodes[pid].is_bot)
        ]
        if len(entries) > self._peers_cap:
            entries = sorted(self.rng.sample(entries, self._peers_cap), key=lambda r: r.node_id)
        return {
            "node_ids": b"".join(r.node_id for r in entries),
            "peers": tuple(r.endpoint for r in entries),
        }

    # -- ground-truth oracles -------------------------------------------------

    def _alive_at(self, nid: bytes, t: int) -> bool:
        return any(start <= t and (end is None or t < end) for start, end in self._intervals.get(nid, ()))

    def oracle_live_set(self, t: Optional[int] = None) -> frozenset[bytes]:
        t = self.current_time if t is None else t
        return frozenset(n.node_id for n in self.nodes.values() if n.is_bot and self._alive_at(n.node_id, t))

    def oracle_footprint_set(self, t: Optional[int] = None) -> frozenset[bytes]:
        t = self.current_time if t is None else t
        return frozenset(
            n.node_id for n in self.nodes.values()
            if n.is_bot and any(start <= t for start, _ in self._intervals.get(n.node_id, ()))
        )

    def oracle_ip_observations(self, t: Optional[int] = None) -> Counter:
        """Multiset of endpoints, one count per (bot, endpoint) pairing seen on [0, t]."""
        t = self.current_time if t is None else t
        return Counter(
            ep for (nid, ep), first in self._pairings.items()
            if first <= t and self.nodes[nid].is_bot
        )

    def peer_graph(self, alive_only: bool = True) -> dict[bytes, list[bytes]]:
        """Directed sim-node adjacency from current peer tables."""
        graph = {}
        for nid, node in self.nodes.items():
            if alive_only and not node.alive:
                continue
            graph[nid] = [
                pid for pid in node.peer_ids()
                if pid in self.nodes and (not alive_only or self.nodes[pid].alive)
            ]
        return graph

    def reachable_bots(self, entry: Optional[bytes] = None) -> frozenset[bytes]:
        """Bots a pushed command reaches from ``entry`` through relaying bots."""
        entry = self.current_entry() if entry is None else entry
        if entry is None:
            return frozenset()
        seen = {entry}
        queue = deque([entry])
        while queue:
            nid = queue.popleft()
            node = self.nodes[nid]
            if not node.relays:
                continue
            for pid in node.peer_ids():
                peer = self.nodes.get(pid)
                if peer is not None and peer.alive and peer.is_bot and pid not in seen:
                    seen.add(pid)
                    queue.append(pid)
        return frozenset(seen)

    def bootstrap_endpoints(self) -> list[Endpoint]:
        return [self.nodes[nid].endpoint for nid in self.bootstrap_ids if self.nodes[nid].alive]


def _command_fields(cmd: StagedCommand) -> dict[str, Any]:
    return {"sender": cmd.origin, "serial": cmd.serial, "auth": cmd.auth, "payload": cmd.payload}


def default_signature_for(config: SimConfig, cnc_style: CncStyle = CncStyle.PUSH, **timing) -> NetworkSignature:
    from p2pforge.signature import Bootstrap, BootstrapKind

    if config.botnet_type is BotnetType.BOT_ONLY:
        membership, boot = Membership.BOTS_ONLY, BootstrapKind.HARDCODED_PEERS
    elif config.botnet_type is BotnetType.PARASITE:
        membership, boot = Membership.MIXED, BootstrapKind.NONE
    else:
        membership, boot = Membership.MIXED, BootstrapKind.BOOTSTRAP_SERVERS
    return standard_signature(
        f"simnet-{config.botnet_type.value}",
        membership=membership,
        cnc_style=cnc_style,
        bootstrap=Bootstrap(boot),
        **timing,
    )


def build(config: SimConfig, signature: Optional[NetworkSignature] = None) -> SimWorld:
    """Construct a world at time 0 with every host alive and the overlay connected."""
    world = SimWorld(config, signature)
    world._build()
    return world


def run_until(world: SimWorld, t: int) -> SimWorld:
    return world.run_until(t)
