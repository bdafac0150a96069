"""Takeover: issue a command as the botmaster would. Simulator only."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from p2pforge.signature import CncStyle, NetworkSignature
from p2pforge.simnet.world import LATENCY

QUORUM = 0.9


class RealTransportRefused(RuntimeError):
    pass


@dataclass(frozen=True)
class TakeoverReport:
    command_issued: bytes
    executed_count: int
    reachable_oracle_count: int
    latency_to_quorum: Optional[int]  # None when quorum was never reached
    injected_at: int
    serial: int
    executed_ids: frozenset
    reachable_ids: frozenset

    def findings(self) -> dict:
        return {
            "command_issued": self.command_issued.hex(),
            "executed_count": self.executed_count,
            "reachable_oracle_count": self.reachable_oracle_count,
            "latency_to_quorum": self.latency_to_quorum,
            "injected_at": self.injected_at,
            "serial": self.serial,
        }


def takeover(transport, sig: NetworkSignature, command: bytes, key: bytes, *,
             horizon: Optional[int] = None, quorum: float = QUORUM) -> TakeoverReport:
    """Inject ``command`` signed with ``key`` and watch it spread.

    Refused outright on anything but the simulator transport.
    """
    if getattr(transport, "kind", None) != "sim" or not hasattr(transport, "world"):
        raise RealTransportRefused("takeover is only permitted against the simulator")
    if not transport.accepts(sig):
        raise ValueError("signature does not describe the simulated network")
    world = transport.world
    style = sig.cnc_style
    if style is CncStyle.PUSH:
        reachable = world.reachable_bots()
        horizon = world.config.node_count * LATENCY + 2 if horizon is None else horizon
    else:
        reachable = world.oracle_live_set()
        horizon = sig.timing.command_poll_interval + 2 * LATENCY if horizon is None else horizon
    injected_at = world.inject_command(command, key, style)
    serial = world.last_serial
    world.run_until(injected_at + horizon)
    executed = world.executed_by(serial)
    need = math.ceil(quorum * len(reachable))
    times = sorted(t - injected_at for t in executed.values())
    latency = times[need - 1] if need and len(times) >= need else None
    return TakeoverReport(bytes(command), len(executed), len(reachable), latency, injected_at, serial,
                          frozenset(executed), frozenset(reachable))
