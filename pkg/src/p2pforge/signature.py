"""Declarative network signatures: command formats plus operating parameters.

A signature document is UTF-8 JSON under a single top-level key. The canonical
form (sorted keys, no insignificant whitespace) is what gets digested, stored
in the registry and bound into evidence bags.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Optional

from p2pforge.net import Endpoint

SCHEMA_KEY = "p2pforge_signature_v1"
RESERVED_OPCODE = 0x00


class FieldKind(str, Enum):
    U32 = "u32"
    U64 = "u64"
    BYTES = "bytes"
    NODE_ID = "node_id"
    ENDPOINT_LIST = "endpoint_list"


class Membership(str, Enum):
    BOTS_ONLY = "bots_only"
    MIXED = "mixed"


class CncStyle(str, Enum):
    PULL = "pull"
    PUSH = "push"


class BootstrapKind(str, Enum):
    HARDCODED_PEERS = "hardcoded_peers"
    BOOTSTRAP_SERVERS = "bootstrap_servers"
    NONE = "none"


class Role:
    """Command names the emulator and simulator attach behaviour to.

    Commands with other names are legal; they are decoded and recorded but
    never emitted on our own initiative.
    """

    PING = "PING"
    PONG = "PONG"
    GET_PEERS = "GET_PEERS"
    PEERS = "PEERS"
    ANNOUNCE = "ANNOUNCE"
    COMMAND = "COMMAND"
    POLL = "POLL"


@dataclass(frozen=True)
class Bootstrap:
    kind: BootstrapKind
    endpoints: tuple[Endpoint, ...] = ()


@dataclass(frozen=True)
class Discovery:
    dht_enabled: bool
    peer_exchange_enabled: bool


@dataclass(frozen=True)
class Timing:
    ping_interval: int
    peer_exchange_interval: int
    command_poll_interval: int = 0


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: FieldKind


@dataclass(frozen=True)
class CommandFormat:
    name: str
    opcode: int
    fields: tuple[FieldSpec, ...] = ()
    expects_response: Optional[int] = None

    def field_index(self, name: str) -> Optional[int]:
        for i, spec in enumerate(self.fields):
            if spec.name == name:
                return i
        return None


@dataclass(frozen=True)
class NetworkSignature:
    network_id: str
    version: tuple[int, int, int]
    bootstrap: Bootstrap
    membership: Membership
    cnc_style: CncStyle
    discovery: Discovery
    timing: Timing
    commands: tuple[CommandFormat, ...] = field(default_factory=tuple)

    def command(self, opcode: int) -> Optional[CommandFormat]:
        for cmd in self.commands:
            if cmd.opcode == opcode:
                return cmd
        return None

    def role(self, name: str) -> Optional[CommandFormat]:
        for cmd in self.commands:
            if cmd.name == name:
                return cmd
        return None

    @property
    def key(self) -> tuple[str, tuple[int, int, int]]:
        return (self.network_id, self.version)

    @property
    def version_text(self) -> str:
        return ".".join(str(v) for v in self.version)


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str

    def __str__(self) -> str:
        return f"{self.code}: {self.detail}"


class SignatureError(ValueError):
    def __init__(self, message: str, violations: Iterable[Violation] = ()):
        super().__init__(message)
        self.violations = list(violations)


class MalformedDocument(SignatureError):
    pass


class UnknownFieldKind(SignatureError):
    pass


class DuplicateOpcode(SignatureError):
    pass


class DanglingResponseOpcode(SignatureError):
    pass


class UnjoinableNetwork(SignatureError):
    pass


class InvalidSignature(SignatureError):
    pass


_RAISE_FOR = {
    "DuplicateOpcode": DuplicateOpcode,
    "DanglingResponseOpcode": DanglingResponseOpcode,
    "UnjoinableNetwork": UnjoinableNetwork,
}


def validate(sig: NetworkSignature) -> list[Violation]:
    """Return every invariant violation of ``sig``; an empty list means valid."""
    out: list[Violation] = []

    if not sig.network_id:
        out.append(Violation("EmptyNetworkId", "network_id must be nonempty"))
    if len(sig.version) != 3 or any(v < 0 for v in sig.version):
        out.append(Violation("BadVersion", f"version {sig.version!r} is not a triple of non-negative ints"))

    seen_ops: set[int] = set()
    seen_names: set[str] = set()
    for cmd in sig.commands:
        if not 0 <= cmd.opcode <= 0xFF:
            out.append(Violation("OpcodeOutOfRange", f"{cmd.name}: opcode {cmd.opcode} is not 8-bit"))
        elif cmd.opcode == RESERVED_OPCODE:
            out.append(Violation("ReservedOpcode", f"{cmd.name}: opcode 0x00 is reserved"))
        if cmd.opcode in seen_ops:
            out.append(Violation("DuplicateOpcode", f"opcode 0x{cmd.opcode:02x} defined twice"))
        seen_ops.add(cmd.opcode)
        if cmd.name in seen_names:
            out.append(Violation("DuplicateCommandName", f"command {cmd.name!r} defined twice"))
        seen_names.add(cmd.name)
        field_names: set[str] = set()
        for spec in cmd.fields:
            if spec.name in field_names:
                out.append(Violation("DuplicateFieldName", f"{cmd.name}: field {spec.name!r} repeated"))
            field_names.add(spec.name)

    for cmd in sig.commands:
        if cmd.expects_response is not None and cmd.expects_response not in seen_ops:
            out.append(Violation(
                "DanglingResponseOpcode",
                f"{cmd.name}: expects_response 0x{cmd.expects_response:02x} is not defined",
            ))

    t = sig.timing
    if t.ping_interval <= 0 or t.peer_exchange_interval <= 0 or t.command_poll_interval < 0:
        out.append(Violation("NonPositiveInterval", "ping and peer-exchange intervals must be > 0"))
    if sig.cnc_style is CncStyle.PULL and t.command_poll_interval <= 0:
        out.append(Violation("PollIntervalMissing", "pull-style C&C needs command_poll_interval > 0"))

    if sig.bootstrap.kind is BootstrapKind.NONE and sig.membership is not Membership.MIXED:
        out.append(Violation("ParasiteRequiresMixed", "bootstrap 'none' is only legal with mixed membership"))

    joinable = (
        sig.discovery.dht_enabled
        or sig.discovery.peer_exchange_enabled
        or sig.bootstrap.kind is not BootstrapKind.NONE
    )
    if not joinable:
        out.append(Violation("UnjoinableNetwork", "no bootstrap, DHT or peer exchange path"))
    return out


# -- serialization -----------------------------------------------------------

def to_document(sig: NetworkSignature) -> dict[str, Any]:
    body = {
        "network_id": sig.network_id,
        "version": list(sig.version),
        "bootstrap": {
            "kind": sig.bootstrap.kind.value,
            "endpoints": [str(ep) for ep in sig.bootstrap.endpoints],
        },
        "membership": sig.membership.value,
        "cnc_style": sig.cnc_style.value,
        "discovery": {
            "dht_enabled": sig.discovery.dht_enabled,
            "peer_exchange_enabled": sig.discovery.peer_exchange_enabled,
        },
        "timing": {
            "ping_interval": sig.timing.ping_interval,
            "peer_exchange_interval": sig.timing.peer_exchange_interval,
            "command_poll_interval": sig.timing.command_poll_interval,
        },
        "commands": [
            {
                "name": cmd.name,
                "opcode": cmd.opcode,
                "fields": [{"name": f.name, "kind": f.kind.value} for f in cmd.fields],
                "expects_response": cmd.expects_response,
            }
            for cmd in sig.commands
        ],
    }
    return {SCHEMA_KEY: body}


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def serialize(sig: NetworkSignature) -> bytes:
    """Canonical document bytes for ``sig``."""
    return canonical_json(to_document(sig))


def digest(sig: NetworkSignature) -> bytes:
    """SHA-512 over the canonical serialization (64 bytes)."""
    return hashlib.sha512(serialize(sig)).digest()


# -- parsing -----------------------------------------------------------------

def _expect(obj: Any, typ: type, where: str) -> Any:
    # bool is an int subclass; never accept it where a number is required
    if typ is int and isinstance(obj, bool):
        raise MalformedDocument(f"{where}: expected integer, got boolean")
    if not isinstance(obj, typ):
        raise MalformedDocument(f"{where}: expected {typ.__name__}, got {type(obj).__name__}")
    return obj


def _keys(obj: dict, required: set[str], where: str, optional: frozenset[str] = frozenset()) -> None:
    missing = required - obj.keys()
    if missing:
        raise MalformedDocument(f"{where}: missing keys {sorted(missing)}")
    extra = obj.keys() - required - optional
    if extra:
        raise MalformedDocument(f"{where}: unexpected keys {sorted(extra)}")


def _enum(enum_cls: type[Enum], value: Any, where: str) -> Any:
    _expect(value, str, where)
    try:
        return enum_cls(value)
    except ValueError:
        raise MalformedDocument(f"{where}: unknown value {value!r}") from None


def _parse_command(raw: Any, where: str) -> CommandFormat:
    _expect(raw, dict, where)
    _keys(raw, {"name", "opcode", "fields"}, where, frozenset({"expects_response"}))
    name = _expect(raw["name"], str, f"{where}.name")
    opcode = _expect(raw["opcode"], int, f"{where}.opcode")
    fields = []
    for i, f in enumerate(_expect(raw["fields"], list, f"{where}.fields")):
        fw = f"{where}.fields[{i}]"
        _expect(f, dict, fw)
        _keys(f, {"name", "kind"}, fw)
        kind_text = _expect(f["kind"], str, f"{fw}.kind")
        try:
            kind = FieldKind(kind_text)
        except ValueError:
            raise UnknownFieldKind(f"{fw}: unknown field kind {kind_text!r}") from None
        fields.append(FieldSpec(_expect(f["name"], str, f"{fw}.name"), kind))
    resp = raw.get("expects_response")
    if resp is not None:
        _expect(resp, int, f"{where}.expects_response")
    return CommandFormat(name, opcode, tuple(fields), resp)


def from_document(doc: Any) -> NetworkSignature:
    """Build a signature from a decoded JSON object without validating it."""
    _expect(doc, dict, "document")
    if set(doc) != {SCHEMA_KEY}:
        raise MalformedDocument(f"document must have exactly one top-level key {SCHEMA_KEY!r}")
    body = _expect(doc[SCHEMA_KEY], dict, SCHEMA_KEY)
    _keys(body, {"network_id", "version", "bootstrap", "membership", "cnc_style",
                 "discovery", "timing", "commands"}, SCHEMA_KEY)

    version = _expect(body["version"], list, "version")
    if len(version) != 3:
        raise MalformedDocument("version: expected [major, minor, patch]")
    version = tuple(_expect(v, int, "version[]") for v in version)

    boot = _expect(body["bootstrap"], dict, "bootstrap")
    _keys(boot, {"kind"}, "bootstrap", frozenset({"endpoints"}))
    endpoints = []
    for text in _expect(boot.get("endpoints", []), list, "bootstrap.endpoints"):
        try:
            endpoints.append(Endpoint.parse(_expect(text, str, "bootstrap.endpoints[]")))
        except ValueError as exc:
            raise MalformedDocument(f"bootstrap.endpoints: {exc}") from None

    disc = _expect(body["discovery"], dict, "discovery")
    _keys(disc, {"dht_enabled", "peer_exchange_enabled"}, "discovery")
    timing = _expect(body["timing"], dict, "timing")
    _keys(timing, {"ping_interval", "peer_exchange_interval"}, "timing",
          frozenset({"command_poll_interval"}))

    commands = tuple(
        _parse_command(c, f"commands[{i}]")
        for i, c in enumerate(_expect(body["commands"], list, "commands"))
    )
    return NetworkSignature(
        network_id=_expect(body["network_id"], str, "network_id"),
        version=version,  # type: ignore[arg-type]
        bootstrap=Bootstrap(_enum(BootstrapKind, boot["kind"], "bootstrap.kind"), tuple(endpoints)),
        membership=_enum(Membership, body["membership"], "membership"),
        cnc_style=_enum(CncStyle, body["cnc_style"], "cnc_style"),
        discovery=Discovery(
            _expect(disc["dht_enabled"], bool, "discovery.dht_enabled"),
            _expect(disc["peer_exchange_enabled"], bool, "discovery.peer_exchange_enabled"),
        ),
        timing=Timing(
            _expect(timing["ping_interval"], int, "timing.ping_interval"),
            _expect(timing["peer_exchange_interval"], int, "timing.peer_exchange_interval"),
            _expect(timing.get("command_poll_interval", 0), int, "timing.command_poll_interval"),
        ),
        commands=commands,
    )


def parse_signature(text: str | bytes) -> NetworkSignature:
    """Parse and validate a signature document.

    Raises the specific :class:`SignatureError` subclass for the first
    violation found (DuplicateOpcode, DanglingResponseOpcode,
    UnjoinableNetwork), or InvalidSignature for the rest.
    """
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedDocument(f"not valid JSON: {exc}") from None
    sig = from_document(doc)
    problems = validate(sig)
    if problems:
        first = problems[0]
        exc_cls = _RAISE_FOR.get(first.code, InvalidSignature)
        raise exc_cls("; ".join(str(p) for p in problems), problems)
    return sig


def load_signature(path) -> NetworkSignature:
    with open(path, "rb") as fh:
        return parse_signature(fh.read())


# -- built-in protocol used by the simulator ---------------------------------

def _f(name: str, kind: FieldKind) -> FieldSpec:
    return FieldSpec(name, kind)


def standard_commands(cnc_style: CncStyle) -> tuple[CommandFormat, ...]:
    """The command set spoken by simulated overlays.

    PEERS carries the advertised node ids as a concatenated ``node_ids``
    byte string aligned with the ``peers`` endpoint list.
    """
    nid = _f("sender", FieldKind.NODE_ID)
    cmds = [
        CommandFormat(Role.PING, 0x01, (nid, _f("nonce", FieldKind.U32)), 0x02),
        CommandFormat(Role.PONG, 0x02, (nid, _f("nonce", FieldKind.U32))),
        CommandFormat(Role.GET_PEERS, 0x03, (nid,), 0x04),
        CommandFormat(Role.PEERS, 0x04, (nid, _f("node_ids", FieldKind.BYTES),
                                         _f("peers", FieldKind.ENDPOINT_LIST))),
        CommandFormat(Role.ANNOUNCE, 0x05, (nid,)),
        CommandFormat(Role.COMMAND, 0x06, (nid, _f("serial", FieldKind.U64),
                                           _f("auth", FieldKind.BYTES),
                                           _f("payload", FieldKind.BYTES))),
    ]
    if cnc_style is CncStyle.PULL:
        cmds.append(CommandFormat(Role.POLL, 0x07, (nid,), 0x06))
    return tuple(cmds)


def standard_signature(
    network_id: str = "simnet",
    *,
    membership: Membership = Membership.BOTS_ONLY,
    cnc_style: CncStyle = CncStyle.PUSH,
    bootstrap: Optional[Bootstrap] = None,
    ping_interval: int = 10,
    peer_exchange_interval: int = 20,
    command_poll_interval: int = 100,
    version: tuple[int, int, int] = (1, 0, 0),
) -> NetworkSignature:
    if bootstrap is None:
        bootstrap = Bootstrap(BootstrapKind.HARDCODED_PEERS)
    return NetworkSignature(
        network_id=network_id,
        version=version,
        bootstrap=bootstrap,
        membership=membership,
        cnc_style=cnc_style,
        discovery=Discovery(dht_enabled=False, peer_exchange_enabled=True),
        timing=Timing(
            ping_interval,
            peer_exchange_interval,
            command_poll_interval if cnc_style is CncStyle.PULL else 0,
        ),
        commands=standard_commands(cnc_style),
    )
