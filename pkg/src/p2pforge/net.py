"""Endpoint and node-identifier primitives shared by every layer."""

from __future__ import annotations

import ipaddress
import struct
from typing import NamedTuple

NODE_ID_LEN = 20
ENDPOINT_LEN = 6

_ENDPOINT = struct.Struct(">IH")


class Endpoint(NamedTuple):
    """IPv4 address (as an unsigned 32-bit int) plus UDP/TCP port."""

    address: int
    port: int

    def __str__(self) -> str:
        return f"{ipaddress.IPv4Address(self.address)}:{self.port}"

    @classmethod
    def parse(cls, text: str) -> "Endpoint":
        host, sep, port = text.rpartition(":")
        if not sep:
            raise ValueError(f"endpoint {text!r} lacks a port")
        port_no = int(port)
        if not 0 <= port_no <= 0xFFFF:
            raise ValueError(f"port out of range in {text!r}")
        return cls(int(ipaddress.IPv4Address(host)), port_no)

    @classmethod
    def of(cls, host: str, port: int) -> "Endpoint":
        return cls(int(ipaddress.IPv4Address(host)), port)

    @property
    def host(self) -> str:
        return str(ipaddress.IPv4Address(self.address))

    def pack(self) -> bytes:
        return _ENDPOINT.pack(self.address, self.port)

    @classmethod
    def unpack(cls, buf: bytes, offset: int = 0) -> "Endpoint":
        return cls(*_ENDPOINT.unpack_from(buf, offset))


NULL_ENDPOINT = Endpoint(0, 0)


def short_id(node_id: bytes) -> str:
    return node_id.hex()[:12]
