"""Deterministic botnet overlay simulator with ground-truth oracles."""

from p2pforge.simnet.config import BotnetType, Churn, Dhcp, InvalidConfig, SimConfig, Topology
from p2pforge.simnet.transport import SimTransport
from p2pforge.simnet.world import (
    Delivery,
    LogEntry,
    SimNode,
    SimWorld,
    build,
    default_signature_for,
    run_until,
)

__all__ = [
    "BotnetType", "Churn", "Delivery", "Dhcp", "InvalidConfig", "LogEntry", "SimConfig",
    "SimNode", "SimTransport", "SimWorld", "Topology", "build", "default_signature_for",
    "run_until",
]
