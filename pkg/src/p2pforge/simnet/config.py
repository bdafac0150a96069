from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Optional


class BotnetType(str, Enum):
    PARASITE = "parasite"
    LEECHING = "leeching"
    BOT_ONLY = "bot_only"


class Topology(str, Enum):
    MESH = "mesh"
    STAR = "star"
    TWO_TIER = "two_tier"


class InvalidConfig(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class Churn:
    mean_join_interval: int
    mean_leave_interval: int


@dataclass(frozen=True)
class Dhcp:
    reassign_interval: Optional[int] = None  # None = disabled
    address_pool_size: int = 1 << 16

    @property
    def enabled(self) -> bool:
        return self.reassign_interval is not None


DEFAULT_BOTMASTER_KEY = b"botmaster-secret"


@dataclass(frozen=True)
class SimConfig:
    seed: int
    node_count: int
    botnet_type: BotnetType = BotnetType.BOT_ONLY
    vulnerable_fraction: float = 1.0
    churn: Optional[Churn] = None
    dhcp: Dhcp = field(default_factory=Dhcp)
    nat_fraction: float = 0.0
    degree_target: int = 8
    botmaster_key: bytes = DEFAULT_BOTMASTER_KEY
    topology: Topology = Topology.MESH

    def check(self) -> None:
        if not 0 <= self.seed < 1 << 64:
            raise InvalidConfig("seed", "must be a 64-bit unsigned integer")
        if self.node_count < 1:
            raise InvalidConfig("node_count", "must be positive")
        if not 0.0 <= self.vulnerable_fraction <= 1.0:
            raise InvalidConfig("vulnerable_fraction", "must lie in [0, 1]")
        if not 0.0 <= self.nat_fraction <= 1.0:
            raise InvalidConfig("nat_fraction", "must lie in [0, 1]")
        if self.degree_target < 1:
            raise InvalidConfig("degree_target", "must be positive")
        if self.degree_target >= self.node_count:
            raise InvalidConfig("degree_target", "must be smaller than node_count")
        if self.dhcp.address_pool_size < 1 or self.dhcp.address_pool_size > 1 << 24:
            raise InvalidConfig("dhcp.address_pool_size", "must lie in [1, 2**24]")
        if self.dhcp.reassign_interval is not None and self.dhcp.reassign_interval <= 0:
            raise InvalidConfig("dhcp.reassign_interval", "must be positive or null")
        if self.churn is not None:
            if self.churn.mean_join_interval <= 0:
                raise InvalidConfig("churn.mean_join_interval", "must be positive")
            if self.churn.mean_leave_interval <= 0:
                raise InvalidConfig("churn.mean_leave_interval", "must be positive")
        if self.botnet_type is not BotnetType.BOT_ONLY and self.bot_count == 0:
            raise InvalidConfig("vulnerable_fraction", "yields zero bots")

    @property
    def bot_count(self) -> int:
        if self.botnet_type is BotnetType.BOT_ONLY:
            return self.node_count
        return floor_fraction(self.vulnerable_fraction, self.node_count)

    @property
    def nat_count(self) -> int:
        return floor_fraction(self.nat_fraction, self.node_count)

    # -- JSON ---------------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["botnet_type"] = self.botnet_type.value
        d["topology"] = self.topology.value
        d["botmaster_key"] = self.botmaster_key.hex()
        return d

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "SimConfig":
        known = {"seed", "node_count", "botnet_type", "vulnerable_fraction", "churn", "dhcp",
                 "nat_fraction", "degree_target", "botmaster_key", "topology"}
        extra = set(raw) - known
        if extra:
            raise InvalidConfig(sorted(extra)[0], "unknown field")
        for name in ("seed", "node_count"):
            if name not in raw:
                raise InvalidConfig(name, "required")
        kw: dict[str, Any] = {
            "seed": _int(raw["seed"], "seed"),
            "node_count": _int(raw["node_count"], "node_count"),
        }
        for name, enum_cls in (("botnet_type", BotnetType), ("topology", Topology)):
            if name in raw:
                try:
                    kw[name] = enum_cls(raw[name])
                except ValueError:
                    raise InvalidConfig(name, f"unknown value {raw[name]!r}") from None
        for name in ("vulnerable_fraction", "nat_fraction"):
            if name in raw:
                if isinstance(raw[name], bool) or not isinstance(raw[name], (int, float)):
                    raise InvalidConfig(name, "must be a number")
                kw[name] = float(raw[name])
        if "degree_target" in raw:
            kw["degree_target"] = _int(raw["degree_target"], "degree_target")
        if "botmaster_key" in raw:
            try:
                kw["botmaster_key"] = bytes.fromhex(raw["botmaster_key"])
            except (TypeError, ValueError):
                raise InvalidConfig("botmaster_key", "must be a hex string") from None
        churn = raw.get("churn")
        if churn is not None:
            if not isinstance(churn, dict):
                raise InvalidConfig("churn", "must be an object or null")
            kw["churn"] = Churn(
                _int(churn.get("mean_join_interval"), "churn.mean_join_interval"),
                _int(churn.get("mean_leave_interval"), "churn.mean_leave_interval"),
            )
        dhcp = raw.get("dhcp")
        if dhcp is not None:
            if not isinstance(dhcp, dict):
                raise InvalidConfig("dhcp", "must be an object")
            interval = dhcp.get("reassign_interval")
            kw["dhcp"] = Dhcp(
                None if interval is None else _int(interval, "dhcp.reassign_interval"),
                _int(dhcp.get("address_pool_size", 1 << 16), "dhcp.address_pool_size"),
            )
        cfg = cls(**kw)
        cfg.check()
        return cfg

    @classmethod
    def from_json(cls, text: str | bytes) -> "SimConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidConfig("<document>", f"not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise InvalidConfig("<document>", "must be a JSON object")
        return cls.from_dict(raw)


def _int(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidConfig(name, "must be an integer")
    return value


def floor_fraction(fraction: float, count: int) -> int:
    # repr() round-trips the literal the user wrote, so 0.29 * 100 gives 29, not 28
    return int(Fraction(repr(fraction)) * count)
