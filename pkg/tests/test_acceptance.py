"""Acceptance criteria 1-10, at their stated tolerances.

Each test carries ``@pytest.mark.criterion(n)``; conftest prints one
PASS/FAIL line per criterion at the end of the run. Run just this file with
``pytest tests/test_acceptance.py -v`` or ``python3 tests/test_acceptance.py``.
"""

import hashlib
import json
import os
import random
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import pytest

from bagutil import make_bag
from oracles import FIPS_VECTORS, parse_event_log, reachable_from, sha512_ref, strongly_reachable_all, world_adjacency
from p2pforge.cli import main
from p2pforge.codec import CodecError, Message, decode, encode
from p2pforge.controllers import (
    Enumeration,
    StopRule,
    TopologyClass,
    observe_anatomy,
    takeover,
)
from p2pforge.emulator import EmulatedClient
from p2pforge.evidence import (
    Direction,
    FaultInjectingSink,
    FileSink,
    corrupt_first_delivery,
    open_bag,
    read_layout,
    replay,
    transfer,
    verify,
)
from p2pforge.signature import CncStyle, CommandFormat, FieldKind, FieldSpec, digest, standard_signature
from p2pforge.simnet import Churn, Dhcp, SimConfig, SimTransport, Topology, build
from p2pforge.simnet.config import DEFAULT_BOTMASTER_KEY

SRC = Path(__file__).resolve().parent.parent / "src"


# -- 1 ------------------------------------------------------------------------------

@pytest.mark.criterion(1)
def test_c1_enumeration_completeness(tmp_path, capsys):
    sim = {"seed": 2024, "node_count": 200}
    cfg = {"kind": "enumerate", "transport": "sim", "seed": 2024, "sim": sim,
           "params": {"n_clients": 3}}
    path = tmp_path / "enum.json"
    path.write_text(json.dumps(cfg))
    t0 = time.perf_counter()
    code = main(["investigate", str(path), "--output-dir", str(tmp_path), "--quiet"])
    elapsed = time.perf_counter() - t0
    capsys.readouterr()
    assert code == 0
    findings = json.loads((tmp_path / "report.json").read_text())["p2pforge_report_v1"]["findings"]
    oracle = {nid.hex() for nid in build(SimConfig.from_dict(sim)).oracle_footprint_set()}
    reported = set(findings["footprint_ids"])
    print(f"criterion 1: footprint={findings['footprint']} oracle={len(oracle)} "
          f"phantoms={len(reported - oracle)} runtime={elapsed:.2f}s")
    assert findings["converged"]
    assert findings["footprint"] == 200 == len(oracle)
    assert reported == oracle
    assert elapsed < 10


# -- 2 ------------------------------------------------------------------------------

@pytest.mark.criterion(2)
def test_c2_footprint_live_ordering():
    violations = []
    for seed in range(20):
        world = build(SimConfig(seed=seed, node_count=100, churn=Churn(15, 15)))
        en = Enumeration(SimTransport(world), world.signature, 3,
                         StopRule(idle_rounds=3, max_rounds=40, min_rounds=25), seed=seed)
        en.run()
        prev = 0
        for rep in en.reports:
            size = len(rep.footprint_ids)
            if rep.live_estimate > size:
                violations.append((seed, rep.rounds, "live>footprint"))
            if size < prev:
                violations.append((seed, rep.rounds, "footprint shrank"))
            prev = size
        assert len(en.reports) >= 25
    print(f"criterion 2: 20 churn runs, violations={len(violations)}")
    assert violations == []


# -- 3 ------------------------------------------------------------------------------

def _dhcp_run(seed, dhcp):
    n = 100
    cfg = SimConfig(seed=seed, node_count=n, dhcp=dhcp)
    world = build(cfg)
    en = Enumeration(SimTransport(world), world.signature, 3,
                     StopRule(idle_rounds=3, max_rounds=60, min_rounds=8), seed=seed)
    rep = en.run()
    return rep, world


@pytest.mark.criterion(3)
def test_c3_id_ip_discrepancy():
    n = 100
    interval = 20
    greater = 0
    for seed in range(20):
        rep, world = _dhcp_run(seed, Dhcp(reassign_interval=interval, address_pool_size=4 * n))
        assert world.current_time // interval >= 5  # at least five reassignment cycles
        greater += rep.unique_endpoints > len(rep.footprint_ids)
    equal = 0
    for seed in range(20):
        rep, world = _dhcp_run(seed, Dhcp())
        assert world.config.nat_fraction == 0
        equal += rep.unique_endpoints == len(rep.footprint_ids)
    print(f"criterion 3: dhcp endpoints>ids in {greater}/20; no-dhcp/nat equal in {equal}/20")
    assert greater >= 19
    assert equal == 20


# -- 4 ------------------------------------------------------------------------------

@pytest.mark.criterion(4)
def test_c4_takeover_equivalence():
    mismatches = []
    worlds = 0
    for seed in range(30):
        for n in range(4, 51):
            cfg = SimConfig(seed=seed, node_count=n, degree_target=min(8, n - 1))
            world = build(cfg)
            adj, relays, eligible = world_adjacency(world)
            assert strongly_reachable_all(adj, eligible)
            oracle = reachable_from(world.current_entry(), adj, relays, eligible)
            rep = takeover(SimTransport(world), world.signature, b"shutdown", DEFAULT_BOTMASTER_KEY)
            if rep.executed_ids != oracle:
                mismatches.append((seed, n, "valid"))
            bad = build(cfg)
            rep = takeover(SimTransport(bad), bad.signature, b"shutdown", b"forged-key")
            if rep.executed_count:
                mismatches.append((seed, n, "invalid key executed"))
            worlds += 1
    print(f"criterion 4: {worlds} worlds, mismatches={len(mismatches)}")
    assert mismatches == []


# -- 5 ------------------------------------------------------------------------------

@pytest.mark.criterion(5)
def test_c5_tamper_evidence(tmp_path):
    for msg, hexd in FIPS_VECTORS.items():
        assert hashlib.sha512(msg).hexdigest() == hexd
        assert sha512_ref(msg).hex() == hexd
    path = tmp_path / "tamper.bag"
    make_bag(path, 64 * 1024, chunk_size=16 * 1024, seed=5)
    layout = read_layout(path)
    assert len(layout.index) >= 3
    for entry in layout.index:
        with open(path, "rb") as fh:
            fh.seek(entry.offset)
            assert entry.sha512 == sha512_ref(fh.read(entry.length))
    assert verify(path).ok
    wrong = []
    flips = 0
    with open(path, "r+b") as fh:
        for off in range(layout.record_start, layout.record_end):
            fh.seek(off)
            orig = fh.read(1)
            fh.seek(off)
            fh.write(bytes([orig[0] ^ 0xFF]))
            fh.flush()
            report = verify(path)
            expected = [(off - layout.record_start) // layout.chunk_size]
            if report.ok or report.failed_chunks != expected:
                wrong.append(off)
            fh.seek(off)
            fh.write(orig)
            fh.flush()
            flips += 1
    print(f"criterion 5: {flips} single-byte flips over {len(layout.index)} chunks, misattributed={len(wrong)}")
    assert wrong == []
    assert verify(path).ok


# -- 6 ------------------------------------------------------------------------------

@pytest.mark.criterion(6)
def test_c6_transfer_retransmit(tmp_path):
    src = tmp_path / "src.bag"
    make_bag(src, 200 * 1024, chunk_size=16 * 1024, seed=6)
    chunks = len(read_layout(src).index)
    dst = tmp_path / "dst.bag"
    log = transfer(src, FaultInjectingSink(FileSink(dst), corrupt_first_delivery))
    attempts = [log.attempts_for(n) for n in range(chunks)]
    print(f"criterion 6: {chunks} chunks, attempts per chunk={sorted(set(attempts))}, "
          f"identical={dst.read_bytes() == src.read_bytes()}")
    assert log.completed
    assert attempts == [2] * chunks
    assert all(not a.ok for a in log.attempts if a.attempt == 1)
    assert dst.read_bytes() == src.read_bytes()
    assert verify(dst).ok


# -- 7 ------------------------------------------------------------------------------

@pytest.mark.criterion(7)
def test_c7_replay_fidelity(tmp_path):
    world = build(SimConfig(seed=77, node_count=60))
    world.start_botmaster(10, 100)
    tr = SimTransport(world)
    sig = world.signature
    bag = open_bag(tmp_path / "session.bag", case_id="c7", investigator="acceptance", network_id=sig.network_id,
                   signature_digest=digest(sig), chunk_size=16 * 1024, durable=False)
    client = EmulatedClient(sig, tr, rng=random.Random(7), tap=bag.append, table_bound=16)
    client.connect(world.bootstrap_endpoints())
    t = tr.now()
    while bag.next_seq < 1000:
        t += 1
        tr.advance(t)
        client.service_tick(t)
    bag.seal()

    items = list(replay(bag.path, sig))
    assert len(items) >= 1000
    assert all(isinstance(it.body, Message) for it in items)
    me = str(client.endpoint)
    log_in, log_out = [], []
    for time_, kind, p in parse_event_log(world.export_event_log()):
        if kind == "deliver" and p[1] == me:
            log_in.append((time_, p[0], p[1], bytes.fromhex(p[2])))
        elif kind == "send" and p[0] == me:
            log_out.append((time_, p[0], p[1], bytes.fromhex(p[2])))
    got_in = [(it.timestamp, str(it.src), str(it.dst), it.payload) for it in items
              if it.direction is Direction.INBOUND]
    got_out = [(it.timestamp, str(it.src), str(it.dst), it.payload) for it in items
               if it.direction is Direction.OUTBOUND]
    # re-encoding every decoded message reproduces the captured bytes
    assert all(encode(it.body, sig) == it.payload for it in items)
    print(f"criterion 7: replayed {len(items)} records "
          f"(in={len(got_in)}/{len(log_in)}, out={len(got_out)}/{len(log_out)})")
    assert got_in == log_in
    assert got_out == log_out
    assert [it.seq for it in items] == list(range(len(items)))


# -- 8 ------------------------------------------------------------------------------

_DET_CONFIGS = {
    "enumerate": {"sim": {"node_count": 120, "churn": {"mean_join_interval": 20, "mean_leave_interval": 20},
                          "dhcp": {"reassign_interval": 50, "address_pool_size": 600}, "nat_fraction": 0.1},
                  "params": {"n_clients": 3}},
    "anatomy": {"sim": {"node_count": 80, "topology": "two_tier"}, "params": {"duration": 400}},
    "collect": {"sim": {"node_count": 50}, "params": {"duration": 200}, "bag": "evidence.bag"},
    "takeover": {"sim": {"node_count": 40}, "signature": {"builtin": "pull"}},
}


def _run_cli(cfg_path, out_dir, hashseed):
    env = dict(os.environ, PYTHONHASHSEED=str(hashseed), PYTHONPATH=str(SRC))
    res = subprocess.run([sys.executable, "-m", "p2pforge", "investigate", str(cfg_path),
                          "--output-dir", str(out_dir), "--quiet"], env=env, capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    return (out_dir / "report.json").read_bytes()


@pytest.mark.criterion(8)
def test_c8_determinism(tmp_path):
    differing = []
    for kind, extra in _DET_CONFIGS.items():
        cfg = {"kind": kind, "transport": "sim", "seed": 808}
        cfg.update(extra)
        path = tmp_path / f"{kind}.json"
        path.write_text(json.dumps(cfg))
        a = _run_cli(path, tmp_path / f"{kind}-a", 1)
        b = _run_cli(path, tmp_path / f"{kind}-b", 2)
        if a != b:
            differing.append(kind)
    print(f"criterion 8: {len(_DET_CONFIGS)} investigation kinds run twice in separate processes, "
          f"differing={differing}")
    assert differing == []


# -- 9 ------------------------------------------------------------------------------

_FAMILIES = [
    (Topology.STAR, 60, TopologyClass.CENTRALIZED),
    (Topology.MESH, 100, TopologyClass.DECENTRALIZED),
    (Topology.TWO_TIER, 100, TopologyClass.HYBRID),
]


@pytest.mark.criterion(9)
def test_c9_anatomy_classifier():
    wrong = []
    total = 0
    for topology, n, expected in _FAMILIES:
        for seed in range(10):
            world = build(SimConfig(seed=seed, node_count=n, topology=topology))
            world.start_botmaster(10, 60)
            rep = observe_anatomy(SimTransport(world), world.signature, 620, seed=seed)
            total += 1
            if rep.topology_class is not expected:
                wrong.append((topology.value, seed, rep.topology_class.value))
    print(f"criterion 9: {total - len(wrong)}/{total} correct")
    assert wrong == []


# -- 10 -----------------------------------------------------------------------------

_FUZZ_SIG = replace(standard_signature(cnc_style=CncStyle.PULL),
                    commands=standard_signature().commands + (
                        CommandFormat("POLL", 0x07, (FieldSpec("sender", FieldKind.NODE_ID),), 0x06),
                        CommandFormat("WIDE", 0x20, tuple(FieldSpec(k.value, k) for k in FieldKind)),
                        CommandFormat("EMPTY", 0x21)))


@pytest.mark.criterion(10)
def test_c10_codec_fuzz_totality():
    rng = random.Random(10)
    ops = [c.opcode for c in _FUZZ_SIG.commands]
    decoded = errors = 0
    for i in range(1_000_000):
        if i % 1000 == 0:
            buf = rng.randbytes(rng.randint(1100, 1400))
        elif i % 2:
            buf = bytes([rng.choice(ops)]) + rng.randbytes(rng.randint(0, 80))
        else:
            buf = rng.randbytes(rng.randint(0, 48))
        try:
            msg = decode(buf, _FUZZ_SIG)
        except CodecError:
            errors += 1
            continue
        # a decoded message must account for every input byte
        if encode(msg, _FUZZ_SIG) != buf:
            raise AssertionError(f"silent truncation on {buf.hex()}")
        decoded += 1
    print(f"criterion 10: 1000000 buffers, decoded={decoded}, typed errors={errors}")
    assert decoded + errors == 1_000_000
    assert decoded > 0


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
