"""Signature-driven client emulation: codec, peer table, client, transports."""

from p2pforge.codec import (
    MAX_MESSAGE,
    CodecError,
    FieldOverrun,
    Message,
    MessageTooLarge,
    NonConformingMessage,
    TrailingBytes,
    TruncatedBuffer,
    UnknownOpcode,
    decode,
    encode,
)
from p2pforge.emulator.client import (
    INBOUND,
    OUTBOUND,
    BootstrapFailed,
    EmulatedClient,
    Observation,
    Participation,
    ParticipationRefused,
    SignatureTransportMismatch,
    connect,
    peer_table_update,
    service_tick,
)
from p2pforge.emulator.conformance import ConformanceChecker, ConformanceViolation, Packet
from p2pforge.emulator.transport import UdpTransport
from p2pforge.peers import PeerRecord, PeerSource, PeerTable

__all__ = [
    "INBOUND", "MAX_MESSAGE", "OUTBOUND", "BootstrapFailed", "CodecError", "ConformanceChecker",
    "ConformanceViolation", "EmulatedClient", "FieldOverrun", "Message", "MessageTooLarge",
    "NonConformingMessage", "Observation", "Packet", "Participation", "ParticipationRefused",
    "PeerRecord", "PeerSource", "PeerTable", "SignatureTransportMismatch", "TrailingBytes",
    "TruncatedBuffer", "UdpTransport", "UnknownOpcode", "connect", "decode", "encode",
    "peer_table_update", "service_tick",
]
