"""Independent reference implementations used as test oracles.

Nothing here imports package internals beyond plain data types, so a bug in
the package cannot silently agree with its own oracle.
"""

from __future__ import annotations

import struct
from collections import Counter, deque

# -- SHA-512, straight from FIPS 180-4 ----------------------------------------

_K = [
    0x428A2F98D728AE22, 0x7137449123EF65CD, 0xB5C0FBCFEC4D3B2F, 0xE9B5DBA58189DBBC, 0x3956C25BF348B538,
    0x59F111F1B605D019, 0x923F82A4AF194F9B, 0xAB1C5ED5DA6D8118, 0xD807AA98A3030242, 0x12835B0145706FBE,
    0x243185BE4EE4B28C, 0x550C7DC3D5FFB4E2, 0x72BE5D74F27B896F, 0x80DEB1FE3B1696B1, 0x9BDC06A725C71235,
    0xC19BF174CF692694, 0xE49B69C19EF14AD2, 0xEFBE4786384F25E3, 0x0FC19DC68B8CD5B5, 0x240CA1CC77AC9C65,
    0x2DE92C6F592B0275, 0x4A7484AA6EA6E483, 0x5CB0A9DCBD41FBD4, 0x76F988DA831153B5, 0x983E5152EE66DFAB,
    0xA831C66D2DB43210, 0xB00327C898FB213F, 0xBF597FC7BEEF0EE4, 0xC6E00BF33DA88FC2, 0xD5A79147930AA725,
    0x06CA6351E003826F, 0x142929670A0E6E70, 0x27B70A8546D22FFC, 0x2E1B21385C26C926, 0x4D2C6DFC5AC42AED,
    0x53380D139D95B3DF, 0x650A73548BAF63DE, 0x766A0ABB3C77B2A8, 0x81C2C92E47EDAEE6, 0x92722C851482353B,
    0xA2BFE8A14CF10364, 0xA81A664BBC423001, 0xC24B8B70D0F89791, 0xC76C51A30654BE30, 0xD192E819D6EF5218,
    0xD69906245565A910, 0xF40E35855771202A, 0x106AA07032BBD1B8, 0x19A4C116B8D2D0C8, 0x1E376C085141AB53,
    0x2748774CDF8EEB99, 0x34B0BCB5E19B48A8, 0x391C0CB3C5C95A63, 0x4ED8AA4AE3418ACB, 0x5B9CCA4F7763E373,
    0x682E6FF3D6B2B8A3, 0x748F82EE5DEFB2FC, 0x78A5636F43172F60, 0x84C87814A1F0AB72, 0x8CC702081A6439EC,
    0x90BEFFFA23631E28, 0xA4506CEBDE82BDE9, 0xBEF9A3F7B2C67915, 0xC67178F2E372532B, 0xCA273ECEEA26619C,
    0xD186B8C721C0C207, 0xEADA7DD6CDE0EB1E, 0xF57D4F7FEE6ED178, 0x06F067AA72176FBA, 0x0A637DC5A2C898A6,
    0x113F9804BEF90DAE, 0x1B710B35131C471B, 0x28DB77F523047D84, 0x32CAAB7B40C72493, 0x3C9EBE0A15C9BEBC,
    0x431D67C49C100D4C, 0x4CC5D4BECB3E42B6, 0x597F299CFC657E2A, 0x5FCB6FAB3AD6FAEC, 0x6C44198C4A475817,
]
_H0 = [
    0x6A09E667F3BCC908, 0xBB67AE8584CAA73B, 0x3C6EF372FE94F82B, 0xA54FF53A5F1D36F1,
    0x510E527FADE682D1, 0x9B05688C2B3E6C1F, 0x1F83D9ABFB41BD6B, 0x5BE0CD19137E2179,
]
_M = (1 << 64) - 1


def _rotr(x: int, n: int) -> int:
    return ((x >> n) | (x << (64 - n))) & _M


def sha512_ref(data: bytes) -> bytes:
    ml = len(data) * 8
    padded = data + b"\x80" + b"\x00" * ((112 - (len(data) + 1) % 128) % 128) + ml.to_bytes(16, "big")
    h = list(_H0)
    for off in range(0, len(padded), 128):
        w = list(struct.unpack(">16Q", padded[off:off + 128]))
        for t in range(16, 80):
            s0 = _rotr(w[t - 15], 1) ^ _rotr(w[t - 15], 8) ^ (w[t - 15] >> 7)
            s1 = _rotr(w[t - 2], 19) ^ _rotr(w[t - 2], 61) ^ (w[t - 2] >> 6)
            w.append((w[t - 16] + s0 + w[t - 7] + s1) & _M)
        a, b, c, d, e, f, g, hh = h
        for t in range(80):
            t1 = (hh + (_rotr(e, 14) ^ _rotr(e, 18) ^ _rotr(e, 41)) + ((e & f) ^ (~e & g)) + _K[t] + w[t]) & _M
            t2 = ((_rotr(a, 28) ^ _rotr(a, 34) ^ _rotr(a, 39)) + ((a & b) ^ (a & c) ^ (b & c))) & _M
            a, b, c, d, e, f, g, hh = (t1 + t2) & _M, a, b, c, (d + t1) & _M, e, f, g
        h = [(x + y) & _M for x, y in zip(h, (a, b, c, d, e, f, g, hh))]
    return b"".join(x.to_bytes(8, "big") for x in h)


# Published FIPS 180-4 example vectors.
FIPS_VECTORS = {
    b"": "cf83e1357eefb8bdf1542850d66d8007d620e4050b5715dc83f4a921d36ce9ce"
         "47d0d13c5d85f2b0ff8318d2877eec2f63b931bd47417a81a538327af927da3e",
    b"abc": "ddaf35a193617abacc417349ae20413112e6fa4e89a97ea20a9eeee64b55d39a"
            "2192992a274fc1a836ba3c23a3feebbd454d4423643ce80e2a9ac94fa54ca49f",
    (b"abcdefghbcdefghicdefghijdefghijkefghijklfghijklmghijklmnhijklmno"
     b"ijklmnopjklmnopqklmnopqrlmnopqrsmnopqrstnopqrstu"):
        "8e959b75dae313da8cf4f72814fc143f8f7779c6eb9f7fa17299aeadb6889018"
        "501d289e4900f7e4331b99dec4b5433ac7d329eeb6dd26545e96e55b874be909",
}


# -- peer table: naive fold ----------------------------------------------------

def fold_peer_table(bound: int, observations) -> dict:
    """node_id -> (endpoint, first_seen, last_seen) after folding observations.

    Eviction: drop the smallest last_seen; ties drop the lexicographically
    largest node id.
    """
    table: dict = {}
    for obs in observations:
        if obs.node_id in table:
            ep, first, last = table[obs.node_id]
            if obs.last_seen >= last:
                table[obs.node_id] = (obs.endpoint, first, obs.last_seen)
            continue
        table[obs.node_id] = (obs.endpoint, obs.first_seen, obs.last_seen)
        if len(table) > bound:
            stalest = min(v[2] for v in table.values())
            victim = max(nid for nid, v in table.items() if v[2] == stalest)
            del table[victim]
    return table


# -- simulator oracles ---------------------------------------------------------

def parse_event_log(text: str) -> list[tuple[int, str, list[str]]]:
    out = []
    for line in text.splitlines():
        parts = line.split("\t")
        out.append((int(parts[0]), parts[1], parts[2:]))
    return out


def live_bots_from_log(text: str, t: int) -> set[str]:
    """Replay spawn/leave/join lines up to and including time t."""
    bots: set[str] = set()
    alive: set[str] = set()
    for time, kind, payload in parse_event_log(text):
        if time > t:
            break
        if kind == "spawn":
            if payload[2] == "1":
                bots.add(payload[0])
            alive.add(payload[0])
        elif kind == "leave":
            alive.discard(payload[0])
        elif kind == "join":
            alive.add(payload[0])
    return alive & bots


def endpoint_pairings_from_log(text: str, t: int) -> set[tuple[str, str]]:
    pairs = set()
    for time, kind, payload in parse_event_log(text):
        if time > t:
            break
        if kind in ("spawn", "join"):
            pairs.add((payload[0], payload[1]))
        elif kind == "dhcp":
            pairs.add((payload[0], payload[2]))
    return pairs


def reachable_from(entry, adjacency: dict, relays: dict, eligible: set) -> set:
    """Plain BFS: nodes reachable from ``entry`` when only relays forward."""
    if entry is None:
        return set()
    seen = {entry}
    queue = deque([entry])
    while queue:
        cur = queue.popleft()
        if not relays[cur]:
            continue
        for nxt in adjacency[cur]:
            if nxt in eligible and nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def world_adjacency(world):
    """Adjacency, relay flags and alive-bot set read straight off node state."""
    adjacency = {nid: [p for p in n.peer_table if p in world.nodes] for nid, n in world.nodes.items()}
    relays = {nid: n.relays for nid, n in world.nodes.items()}
    eligible = {nid for nid, n in world.nodes.items() if n.alive and n.is_bot}
    return adjacency, relays, eligible


def strongly_reachable_all(adjacency: dict, nodes: set) -> bool:
    """True if every node in ``nodes`` reaches every other through ``adjacency``."""
    for start in nodes:
        seen = {start}
        stack = [start]
        while stack:
            cur = stack.pop()
            for nxt in adjacency.get(cur, ()):
                if nxt in nodes and nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        if seen != nodes:
            return False
    return True


def origin_spread(command_sources: list) -> dict:
    """Brute-force share metrics over a list of command-message source endpoints."""
    counts = Counter(command_sources)
    total = len(command_sources)
    ranked = sorted(counts.values(), reverse=True)
    return {
        "total": total,
        "origins": len(counts),
        "top2": sum(ranked[:2]) / total if total else 0.0,
        "max": ranked[0] / total if total else 0.0,
    }
