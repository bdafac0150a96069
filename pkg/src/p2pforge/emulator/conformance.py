"""Protocol-conformance checker derived from a signature.

It judges a captured packet sequence on three things only: every payload
decodes to a conforming message, every response answers an outstanding
request of the matching type, and periodic requests to one peer are never
repeated faster than the signature allows (retries of unanswered requests
excepted).
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, NamedTuple

from p2pforge.codec import CodecError, decode
from p2pforge.net import Endpoint
from p2pforge.signature import NetworkSignature, Role


class Packet(NamedTuple):
    time: int
    src: Endpoint
    dst: Endpoint
    payload: bytes


@dataclass(frozen=True)
class ConformanceViolation:
    time: int
    src: Endpoint
    dst: Endpoint
    rule: str
    detail: str


class ConformanceChecker:
    def __init__(self, sig: NetworkSignature):
        self.sig = sig
        self.response_opcodes = {c.expects_response for c in sig.commands if c.expects_response is not None}
        t = sig.timing
        self.periods = {}
        for role, interval in ((Role.PING, t.ping_interval),
                               (Role.GET_PEERS, t.peer_exchange_interval),
                               (Role.POLL, t.command_poll_interval)):
            cmd = sig.role(role)
            if cmd is not None and interval > 0:
                self.periods[cmd.opcode] = interval

    def check(self, packets: Iterable[Packet]) -> list[ConformanceViolation]:
        violations: list[ConformanceViolation] = []
        outstanding: dict[tuple[Endpoint, Endpoint], Counter] = defaultdict(Counter)
        last_sent: dict[tuple[Endpoint, Endpoint, int], int] = {}
        for pkt in packets:
            try:
                msg = decode(pkt.payload, self.sig, pkt.src, pkt.dst, pkt.time)
            except CodecError as exc:
                violations.append(ConformanceViolation(pkt.time, pkt.src, pkt.dst, "Undecodable", type(exc).__name__))
                continue
            op = msg.opcode
            cmd = self.sig.command(op)

            if op in self.response_opcodes:
                pending = outstanding[(pkt.dst, pkt.src)]
                if pending[op] > 0:
                    pending[op] -= 1
                else:
                    violations.append(ConformanceViolation(
                        pkt.time, pkt.src, pkt.dst, "UnsolicitedResponse", cmd.name))

            if op in self.periods:
                key = (pkt.src, pkt.dst, op)
                prev = last_sent.get(key)
                expected = cmd.expects_response
                retry = expected is not None and outstanding[(pkt.src, pkt.dst)][expected] > 0
                if prev is not None and pkt.time - prev < self.periods[op] and not retry:
                    violations.append(ConformanceViolation(
                        pkt.time, pkt.src, pkt.dst, "EarlyRepeat",
                        f"{cmd.name} after {pkt.time - prev} < {self.periods[op]}"))
                last_sent[key] = pkt.time

            if cmd is not None and cmd.expects_response is not None:
                outstanding[(pkt.src, pkt.dst)][cmd.expects_response] += 1
        return violations

    def conforms(self, packets: Iterable[Packet]) -> bool:
        return not self.check(packets)
