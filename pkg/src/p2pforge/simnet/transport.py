"""In-process transport that attaches emulated clients to a :class:`SimWorld`."""

from __future__ import annotations

from typing import Optional

from p2pforge.net import Endpoint
from p2pforge.signature import NetworkSignature, digest
from p2pforge.simnet.world import Delivery, SimWorld


class SimTransport:
    kind = "sim"
    clock = "sim"
    response_timeout = 4
    tick = 1

    def __init__(self, world: SimWorld):
        self.world = world

    @property
    def signature(self) -> NetworkSignature:
        return self.world.signature

    def accepts(self, sig: NetworkSignature) -> bool:
        return sig is self.world.signature or digest(sig) == digest(self.world.signature)

    def now(self) -> int:
        return self.world.current_time

    def timestamp(self) -> int:
        return self.world.current_time

    def attach(self, endpoint: Optional[Endpoint] = None) -> Endpoint:
        return self.world.attach(endpoint)

    def send(self, src: Endpoint, dst: Endpoint, payload: bytes) -> None:
        self.world.send(src, dst, payload)

    def poll(self, endpoint: Endpoint) -> list[Delivery]:
        return self.world.drain(endpoint)

    def advance(self, t: int) -> None:
        if t > self.world.current_time:
            self.world.run_until(t)

    def is_taken_id(self, node_id: bytes) -> bool:
        return self.world.is_taken_id(node_id)

    def bootstrap_hints(self) -> list[Endpoint]:
        return self.world.bootstrap_endpoints()

    def close(self) -> None:
        pass
