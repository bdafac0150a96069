"""Botnet enumeration: footprint and live-population estimates via a crawl."""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from p2pforge.emulator.client import BootstrapFailed, EmulatedClient, Participation, Tap
from p2pforge.net import Endpoint
from p2pforge.signature import NetworkSignature

log = logging.getLogger(__name__)

LIVENESS_FACTOR = 2  # live = seen within LIVENESS_FACTOR * ping_interval


@dataclass(frozen=True)
class StopRule:
    idle_rounds: int = 5  # converged after this many rounds with no new ids
    max_rounds: int = 500
    min_rounds: int = 0  # keep observing at least this long even once converged

    def __post_init__(self):
        if self.idle_rounds < 1 or self.max_rounds < 1:
            raise ValueError("idle_rounds and max_rounds must be positive")
        if not 0 <= self.min_rounds <= self.max_rounds:
            raise ValueError("min_rounds must lie in [0, max_rounds]")


@dataclass(frozen=True)
class EnumerationReport:
    footprint_ids: frozenset
    live_estimate: int
    unique_endpoints: int
    per_client_contribution: tuple  # (client index, new ids first found by it)
    started: int
    ended: int
    converged: bool
    rounds: int = 0

    def findings(self) -> dict:
        return {
            "footprint": len(self.footprint_ids),
            "footprint_ids": sorted(nid.hex() for nid in self.footprint_ids),
            "live_estimate": self.live_estimate,
            "unique_endpoints": self.unique_endpoints,
            "per_client_contribution": [list(p) for p in self.per_client_contribution],
            "started": self.started,
            "ended": self.ended,
            "converged": self.converged,
            "rounds": self.rounds,
        }


class Enumeration:
    """Drives ``n_clients`` emulated clients round by round.

    A round lasts one peer-exchange interval. Between rounds the controller
    hands every not-yet-queried (id, endpoint) pair to one client, round
    robin, so the crawl fans out faster than a single regular node would.
    """

    def __init__(
        self,
        transport,
        sig: NetworkSignature,
        n_clients: int,
        stop: StopRule = StopRule(),
        *,
        hints: Optional[Sequence[Endpoint]] = None,
        seed: int = 0,
        tap: Optional[Tap] = None,
        participation: Participation = Participation.PASSIVE,
    ):
        if n_clients < 1:
            raise ValueError("n_clients must be at least 1")
        self.transport = transport
        self.sig = sig
        self.n_clients = n_clients
        self.stop = stop
        self.rng = random.Random(seed)
        self.tap = tap
        self.participation = participation
        if hints is None:
            hints = transport.bootstrap_hints() if hasattr(transport, "bootstrap_hints") else ()
        self.hints = list(hints) or list(sig.bootstrap.endpoints)
        self.clients: list[EmulatedClient] = []
        self.own_ids: set[bytes] = set()
        self.first_seen: dict[bytes, int] = {}
        self.last_seen: dict[bytes, int] = {}
        self.endpoint_of: dict[bytes, Endpoint] = {}
        self.pairs: set[tuple[bytes, Endpoint]] = set()
        self.queried: set[tuple[bytes, Endpoint]] = set()
        self.contribution = [0] * n_clients
        self.reports: list[EnumerationReport] = []
        self.started = transport.now()
        self.rounds = 0
        self._idle = 0
        self._next_client = 0

    def _join(self) -> None:
        last_error = None
        for i in range(self.n_clients):
            client = EmulatedClient(self.sig, self.transport, rng=random.Random(self.rng.getrandbits(64)),
                                    participation=self.participation, tap=self.tap)
            self.own_ids.add(client.self_id)
            rotated = self.hints[i % len(self.hints):] + self.hints[:i % len(self.hints)] if self.hints else []
            try:
                client.connect(rotated)
            except BootstrapFailed as exc:
                last_error = exc
                log.info("client %d failed to join: %s", i, exc)
                continue
            self.clients.append(client)
        if not self.clients:
            raise BootstrapFailed(f"no client joined: {last_error}")
        # ids of clients that joined later may have leaked into earlier clients' tables
        for client in self.clients:
            for nid in self.own_ids:
                client.peer_table.remove(nid)

    def _harvest(self, index: int, client: EmulatedClient) -> int:
        new = 0
        for rec in client.drain_learned():
            nid = rec.node_id
            if nid in self.own_ids:
                continue
            if nid not in self.first_seen:
                self.first_seen[nid] = rec.last_seen
                new += 1
            self.last_seen[nid] = max(self.last_seen.get(nid, rec.last_seen), rec.last_seen)
            self.endpoint_of[nid] = rec.endpoint
            self.pairs.add((nid, rec.endpoint))
        self.contribution[index] += new
        return new

    def _dispatch_frontier(self, now: int) -> None:
        frontier = sorted((nid, ep) for nid, ep in self.endpoint_of.items() if (nid, ep) not in self.queried)
        for nid, ep in frontier:
            client = self.clients[self._next_client % len(self.clients)]
            self._next_client += 1
            client.discover([ep], now)
            self.queried.add((nid, ep))

    def report(self) -> EnumerationReport:
        now = self.transport.now()
        window = LIVENESS_FACTOR * self.sig.timing.ping_interval
        live = sum(1 for t in self.last_seen.values() if t >= now - window)
        return EnumerationReport(
            footprint_ids=frozenset(self.first_seen),
            live_estimate=live,
            unique_endpoints=len({ep for _, ep in self.pairs}),
            per_client_contribution=tuple(enumerate(self.contribution)),
            started=self.started,
            ended=now,
            converged=self._idle >= self.stop.idle_rounds,
            rounds=self.rounds,
        )

    def step_round(self) -> EnumerationReport:
        t = self.transport
        start = t.now()
        new = sum(self._harvest(i, c) for i, c in enumerate(self.clients))
        self._dispatch_frontier(start)
        for tick in range(start + t.tick, start + self.sig.timing.peer_exchange_interval + 1, t.tick):
            t.advance(tick)
            for client in self.clients:
                client.service_tick(tick)
        new += sum(self._harvest(i, c) for i, c in enumerate(self.clients))
        self.rounds += 1
        # the first round always counts: bootstrap discoveries land in it
        self._idle = 0 if new else self._idle + 1
        rep = self.report()
        self.reports.append(rep)
        return rep

    def run(self) -> EnumerationReport:
        if not self.clients:
            self._join()
        stop = self.stop
        while self.rounds < stop.max_rounds and (self._idle < stop.idle_rounds or self.rounds < stop.min_rounds):
            self.step_round()
        return self.reports[-1] if self.reports else self.report()


def enumerate_network(
    transport,
    sig: NetworkSignature,
    n_clients: int = 1,
    stop: StopRule = StopRule(),
    **kwargs,
) -> EnumerationReport:
    return Enumeration(transport, sig, n_clients, stop, **kwargs).run()


def snapshot_reports(reports: Iterable[EnumerationReport]) -> list[tuple[int, int]]:
    """(live_estimate, footprint) per interim report -- handy for ordering checks."""
    return [(r.live_estimate, len(r.footprint_ids)) for r in reports]
