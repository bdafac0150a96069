"""Loopback UDP transport: one message per datagram, integration tests only."""

from __future__ import annotations

import socket
import time
from dataclasses import dataclass
from typing import Optional

from p2pforge.codec import MAX_MESSAGE, MessageTooLarge
from p2pforge.net import Endpoint
from p2pforge.signature import NetworkSignature


@dataclass
class Datagram:
    time: int
    src: Endpoint
    dst: Endpoint
    payload: bytes


class UdpTransport:
    """Real sockets on 127.0.0.1. One sim-time unit maps to ``unit_ns`` of wall clock."""

    kind = "loopback"
    clock = "utc_ns"
    tick = 1

    def __init__(self, unit_ns: int = 1_000_000, host: str = "127.0.0.1", response_timeout: int = 200):
        self.unit_ns = unit_ns
        self.host = host
        self.response_timeout = response_timeout
        self._t0 = time.monotonic_ns()
        self._socks: dict[Endpoint, socket.socket] = {}

    def accepts(self, sig: NetworkSignature) -> bool:
        return True

    def now(self) -> int:
        return (time.monotonic_ns() - self._t0) // self.unit_ns

    def timestamp(self) -> int:
        return time.time_ns()

    def attach(self, endpoint: Optional[Endpoint] = None) -> Endpoint:
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        sock.bind((self.host, endpoint.port if endpoint else 0))
        sock.setblocking(False)
        ep = Endpoint.of(*sock.getsockname())
        self._socks[ep] = sock
        return ep

    def send(self, src: Endpoint, dst: Endpoint, payload: bytes) -> None:
        if len(payload) > MAX_MESSAGE:
            raise MessageTooLarge(f"{len(payload)} bytes exceeds {MAX_MESSAGE}")
        self._socks[src].sendto(payload, (dst.host, dst.port))

    def poll(self, endpoint: Endpoint) -> list[Datagram]:
        sock = self._socks[endpoint]
        out = []
        while True:
            try:
                data, addr = sock.recvfrom(65535)
            except (BlockingIOError, InterruptedError):
                return out
            except ConnectionError:
                continue
            out.append(Datagram(self.now(), Endpoint.of(*addr), endpoint, data))

    def advance(self, t: int) -> None:
        remaining = (t - self.now()) * self.unit_ns
        if remaining > 0:
            time.sleep(remaining / 1e9)

    def is_taken_id(self, node_id: bytes) -> bool:
        return False

    def close(self) -> None:
        for sock in self._socks.values():
            sock.close()
        self._socks.clear()

    def __enter__(self) -> "UdpTransport":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
