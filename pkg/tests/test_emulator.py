import random

import pytest

from oracles import parse_event_log
from p2pforge.codec import Message, encode
from p2pforge.emulator import (
    BootstrapFailed,
    ConformanceChecker,
    EmulatedClient,
    Packet,
    Participation,
    ParticipationRefused,
    SignatureTransportMismatch,
    UdpTransport,
    connect,
    peer_table_update,
    service_tick,
)
from p2pforge.net import Endpoint
from p2pforge.peers import PeerRecord
from p2pforge.signature import Role, standard_signature
from p2pforge.simnet import SimConfig, SimTransport, build


def _sim(n=50, seed=1, **kw):
    world = build(SimConfig(seed=seed, node_count=n, **kw))
    return world, SimTransport(world)


def _drive(client, transport, until):
    for t in range(transport.now() + 1, until + 1):
        transport.advance(t)
        client.service_tick(t)


def test_connect_one_live_hint():
    world, tr = _sim()
    hint = world.bootstrap_endpoints()[0]
    client = connect(world.signature, tr, [hint], rng=random.Random(1))
    assert len(client.peer_table) > 0
    for rec in client.peer_table.records():
        assert world.nodes[rec.node_id].alive


def test_all_hints_dead():
    world, tr = _sim()
    dead = [Endpoint.parse("203.0.113.1:1"), Endpoint.parse("203.0.113.2:2")]
    client = EmulatedClient(world.signature, tr)
    with pytest.raises(BootstrapFailed):
        client.connect(dead)
    sent = [e for e in parse_event_log(world.export_event_log()) if e[1] == "send"]
    assert len(sent) == 3 * 2 * 2  # ANNOUNCE + GET_PEERS, 3 attempts, 2 hints


def test_no_hints():
    world, tr = _sim()
    with pytest.raises(BootstrapFailed):
        connect(world.signature, tr, [])


def test_signature_mismatch():
    world, tr = _sim()
    with pytest.raises(SignatureTransportMismatch):
        EmulatedClient(standard_signature("other"), tr)


def test_conformant_refused_on_real_transport():
    with UdpTransport() as tr:
        with pytest.raises(ParticipationRefused):
            EmulatedClient(standard_signature(), tr, participation=Participation.CONFORMANT)


def test_peer_exchange_fills_table():
    world, tr = _sim()
    client = connect(world.signature, tr, world.bootstrap_endpoints()[:1], table_bound=32)
    _drive(client, tr, tr.now() + 10 * world.timing.peer_exchange_interval)
    assert len(client.peer_table) == min(32, 50 - 1)
    assert all(rec.node_id in world.nodes for rec in client.peer_table.records())


def test_service_tick_nothing_due():
    world, tr = _sim()
    client = connect(world.signature, tr, world.bootstrap_endpoints()[:1])
    _drive(client, tr, client.next_ping - 1)
    now = tr.now()
    assert now < min(client.next_ping, client.next_pex)
    assert service_tick(client, now) == []


def test_ping_round_one_per_peer():
    world, tr = _sim()
    client = connect(world.signature, tr, world.bootstrap_endpoints()[:1])
    due = client.next_ping
    _drive(client, tr, due - 1)
    peers = {rec.endpoint for rec in client.peer_table.records()}
    tr.advance(due)
    out = service_tick(client, due)
    ping = world.signature.role(Role.PING).opcode
    dsts = [m.dst for m in out if m.opcode == ping]
    assert sorted(dsts) == sorted(peers)


def test_peer_table_update_wrapper():
    world, tr = _sim()
    client = EmulatedClient(world.signature, tr, table_bound=2)
    for i in range(3):
        evicted = peer_table_update(client, PeerRecord(bytes([i + 1]) * 20, Endpoint(i, i), i, i))
    assert [e.node_id for e in evicted] == [bytes([1]) * 20]
    assert peer_table_update(client, PeerRecord(client.self_id, Endpoint(9, 9), 0, 0)) == []


def _client_packets(world, endpoint):
    """Every packet the client sent or received, from the simulator's own log."""
    out = []
    for time, kind, p in parse_event_log(world.export_event_log()):
        if kind == "send" and p[0] == str(endpoint):
            out.append(Packet(time, Endpoint.parse(p[0]), Endpoint.parse(p[1]), bytes.fromhex(p[2])))
        elif kind == "deliver" and p[1] == str(endpoint):
            out.append(Packet(time, Endpoint.parse(p[0]), Endpoint.parse(p[1]), bytes.fromhex(p[2])))
    return out


@pytest.mark.parametrize("participation", [Participation.PASSIVE, Participation.CONFORMANT])
def test_client_traffic_conforms(participation):
    world, tr = _sim(n=40, seed=3)
    world.start_botmaster(15, 10)
    client = connect(world.signature, tr, world.bootstrap_endpoints()[:1], participation=participation)
    _drive(client, tr, 300)
    packets = _client_packets(world, client.endpoint)
    assert len(packets) > 100
    checker = ConformanceChecker(world.signature)
    outbound = [p for p in packets if p.src == client.endpoint]
    inbound = [p for p in packets if p.dst == client.endpoint]
    # responses the client sends answer requests it received, and vice versa
    assert checker.check(sorted(packets, key=lambda p: p.time)) == []
    assert outbound and inbound


def test_checker_flags_violations(push_sig):
    a, b = Endpoint(1, 1), Endpoint(2, 2)
    nid = bytes(20)
    ping = encode(Message(0x01, (nid, 1)), push_sig)
    pong = encode(Message(0x02, (nid, 1)), push_sig)
    checker = ConformanceChecker(push_sig)
    rules = [v.rule for v in checker.check([
        Packet(0, a, b, pong),            # nobody asked
        Packet(1, a, b, b"\x99"),         # garbage
        Packet(2, a, b, ping),
        Packet(3, b, a, pong),
        Packet(4, a, b, ping),            # answered, and only 2 ticks later
    ])]
    assert rules == ["UnsolicitedResponse", "Undecodable", "EarlyRepeat"]
    assert checker.conforms([Packet(0, a, b, ping), Packet(1, b, a, pong), Packet(10, a, b, ping)])


def test_udp_loopback_pair():
    sig = standard_signature("loop")
    with UdpTransport(unit_ns=1_000_000) as tr:
        server = EmulatedClient(sig, tr, rng=random.Random(1))
        server.connected = True
        client = EmulatedClient(sig, tr, rng=random.Random(2))

        import threading
        stop = threading.Event()

        def serve():
            while not stop.is_set():
                server.service_tick(tr.now())
                tr.advance(tr.now() + 1)

        th = threading.Thread(target=serve, daemon=True)
        th.start()
        try:
            client.connect([server.endpoint])
        finally:
            stop.set()
            th.join()
        assert client.peer_table.get(server.self_id).endpoint == server.endpoint
