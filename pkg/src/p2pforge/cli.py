"""Command-line front end.

Exit codes: 0 success, 1 domain failure (validation / verification),
2 usage or configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from p2pforge.controllers import (
    AnatomyThresholds,
    Enumeration,
    InsufficientObservations,
    RealTransportRefused,
    StopRule,
    collect_evidence,
    dumps_report,
    make_report,
    observe_anatomy,
    summary_text,
    takeover,
)
from p2pforge.emulator.client import BootstrapFailed, EmulatedClient, Participation
from p2pforge.emulator.transport import UdpTransport
from p2pforge.evidence import (
    EvidenceError,
    FaultInjectingSink,
    FileSink,
    RemoteSink,
    RetryLimitExceeded,
    SignatureMismatch,
    SinkFailure,
    VerificationRequired,
    corrupt_chunk_always,
    corrupt_chunk_once,
    corrupt_first_delivery,
    iter_records,
    open_bag,
    read_layout,
    replay,
    transfer,
    verify,
)
from p2pforge.registry import RegistryError, SignatureRegistry
from p2pforge.signature import (
    CncStyle,
    NetworkSignature,
    SignatureError,
    digest,
    load_signature,
    parse_signature,
    serialize,
)
from p2pforge.simnet import InvalidConfig, SimConfig, SimTransport, build, default_signature_for

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3

KINDS = ("enumerate", "anatomy", "collect", "takeover")

log = logging.getLogger("p2pforge")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class Console:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def out(self, text: str = "") -> None:
        if not self.quiet:
            print(text)

    def err(self, text: str) -> None:
        print(text, file=sys.stderr)


# -- signatures -------------------------------------------------------------

def _parse_version(text: str) -> tuple[int, int, int]:
    parts = text.split(".")
    if len(parts) != 3 or not all(p.isdigit() for p in parts):
        raise ValueError(f"bad version {text!r}; expected MAJOR.MINOR.PATCH")
    return tuple(int(p) for p in parts)  # type: ignore[return-value]


def cmd_sig(args, con: Console) -> int:
    action = args.sig_command
    if action == "validate":
        try:
            sig = load_signature(args.file)
        except OSError as exc:
            con.err(f"error: {exc}")
            return EXIT_USAGE
        except SignatureError as exc:
            con.out("invalid")
            for v in exc.violations:
                con.out(f"  {v.code}: {v.detail}")
            if not exc.violations:
                con.out(f"  {type(exc).__name__}: {exc}")
            return EXIT_DOMAIN
        con.out(f"valid ({sig.network_id} {sig.version_text}, {len(sig.commands)} commands)")
        return EXIT_OK
    if action == "digest":
        try:
            sig = load_signature(args.file)
        except OSError as exc:
            con.err(f"error: {exc}")
            return EXIT_USAGE
        except SignatureError as exc:
            con.err(f"invalid signature: {exc}")
            return EXIT_DOMAIN
        print(digest(sig).hex())
        return EXIT_OK
    if action == "builtin":
        sig = default_signature_for(SimConfig(seed=0, node_count=2, degree_target=1), CncStyle(args.cnc))
        text = serialize(sig).decode("utf-8") + "\n"
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        return EXIT_OK
    try:
        registry = SignatureRegistry(args.registry)
    except (OSError, SignatureError, RegistryError) as exc:
        con.err(f"error: cannot open registry {args.registry}: {exc}")
        return EXIT_USAGE
    if action == "import":
        try:
            bundle = Path(args.bundle).read_bytes()
        except OSError as exc:
            con.err(f"error: {exc}")
            return EXIT_USAGE
        if bundle.lstrip().startswith(b"{"):
            # a bare signature document rather than a bundle
            try:
                sig = parse_signature(bundle)
                registry.add(sig)
            except SignatureError as exc:
                con.out(f"invalid signature: {exc}")
                return EXIT_DOMAIN
            except RegistryError as exc:
                con.out(str(exc))
                return EXIT_DOMAIN
            con.out(f"added 1 ({sig.network_id} {sig.version_text})")
            return EXIT_OK
        result = registry.import_bundle(bundle)
        con.out(f"added {result.added}")
        for p in result.problems:
            con.out(f"  line {p.line}: {p.code}: {p.detail}")
        return EXIT_DOMAIN if result.problems else EXIT_OK
    if action == "export":
        keys = []
        try:
            for ref in args.ids:
                name, _, ver = ref.partition("@")
                keys.append(registry.get(name, _parse_version(ver) if ver else None).key)
        except (KeyError, ValueError) as exc:
            con.err(f"error: {exc}")
            return EXIT_USAGE
        bundle = registry.export_bundle(keys or None)
        if args.out:
            Path(args.out).write_bytes(bundle)
            con.out(f"exported {len(keys) or len(registry)} signature(s) to {args.out}")
        else:
            sys.stdout.write(bundle.decode("ascii"))
        return EXIT_OK
    if action == "list":
        for name, ver in registry.keys():
            print(f"{name}@{'.'.join(map(str, ver))}")
        return EXIT_OK
    raise AssertionError(action)


# -- simulation -------------------------------------------------------------

def _load_json(path: str) -> Any:
    try:
        with open(path, "rb") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(path, str(exc)) from None
    except json.JSONDecodeError as exc:
        raise ConfigError(path, f"not valid JSON: {exc}") from None


def _sim_config(raw: Any, seed: Optional[int]) -> SimConfig:
    if not isinstance(raw, dict):
        raise ConfigError("sim", "must be an object")
    raw = dict(raw)
    if seed is not None:
        raw["seed"] = seed
    try:
        return SimConfig.from_dict(raw)
    except InvalidConfig as exc:
        raise ConfigError(f"sim.{exc.field}", str(exc).split(": ", 1)[-1]) from None


def cmd_sim(args, con: Console) -> int:
    try:
        raw = _load_json(args.config)
        if isinstance(raw, dict) and "sim" in raw:
            raw = raw["sim"]
        cfg = _sim_config(raw, args.seed)
    except ConfigError as exc:
        con.err(f"config error: {exc}")
        return EXIT_USAGE
    sig = default_signature_for(cfg, CncStyle(args.cnc))
    world = build(cfg, sig)
    if args.commands:
        world.start_botmaster(args.command_interval, args.commands)
    world.run_until(args.until)
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    events = out_dir / args.events
    events.write_text(world.export_event_log(), encoding="utf-8")
    endpoints = world.oracle_ip_observations()
    con.out(f"time: {world.current_time}")
    con.out(f"nodes: {cfg.node_count} ({cfg.bot_count} bots)")
    con.out(f"live bots: {len(world.oracle_live_set())}")
    con.out(f"footprint: {len(world.oracle_footprint_set())}")
    con.out(f"unique endpoints: {len(endpoints)}")
    con.out(f"events: {len(world.event_log)} -> {events}")
    return EXIT_OK


# -- investigations ---------------------------------------------------------

@dataclass
class InvestigationConfig:
    kind: str
    transport: str
    seed: int
    signature_ref: dict
    sim: Optional[SimConfig]
    params: dict
    bag: Optional[str]
    case: dict
    output: Optional[str]
    echo: dict = field(default_factory=dict)


def _get(raw: dict, key: str, typ, default, where: str):
    value = raw.get(key, default)
    if typ is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"{where}{key}", "must be an integer")
    if typ is str and not isinstance(value, str):
        raise ConfigError(f"{where}{key}", "must be a string")
    if typ is dict and not isinstance(value, dict):
        raise ConfigError(f"{where}{key}", "must be an object")
    return value


_PARAMS = {
    "enumerate": {"n_clients": 3, "idle_rounds": 5, "max_rounds": 500, "min_rounds": 0},
    "anatomy": {"duration": 600, "command_interval": 10, "command_count": 60, "table_bound": 64},
    "collect": {"duration": 100},
    "takeover": {"command": "takeover", "key": None, "horizon": None},
}


def parse_investigation(raw: Any, seed_override: Optional[int]) -> InvestigationConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<document>", "must be a JSON object")
    known = {"kind", "transport", "seed", "signature", "sim", "params", "bag", "case", "output"}
    extra = sorted(set(raw) - known)
    if extra:
        raise ConfigError(extra[0], "unknown field")
    kind = _get(raw, "kind", str, None, "") if "kind" in raw else None
    if kind not in KINDS:
        raise ConfigError("kind", f"must be one of {', '.join(KINDS)}")
    transport = _get(raw, "transport", str, "sim", "")
    if transport not in ("sim", "loopback"):
        raise ConfigError("transport", "must be 'sim' or 'loopback'")
    if kind == "takeover" and transport != "sim":
        raise ConfigError("transport", "takeover is refused on real transports; use transport=sim")
    seed = seed_override if seed_override is not None else _get(raw, "seed", int, 0, "")
    sig_ref = _get(raw, "signature", dict, {"builtin": "push"}, "")
    if len(sig_ref) != 1 and not ({"network_id"} <= set(sig_ref) <= {"network_id", "version"}):
        raise ConfigError("signature", "give one of builtin, path, or network_id[+version]")
    if "builtin" in sig_ref and sig_ref["builtin"] not in ("push", "pull"):
        raise ConfigError("signature.builtin", "must be 'push' or 'pull'")
    sim = None
    if transport == "sim":
        if "sim" not in raw:
            raise ConfigError("sim", "required when transport is sim")
        sim = _sim_config(raw["sim"], seed)
    elif "builtin" in sig_ref:
        raise ConfigError("signature", "loopback investigations need a real signature (path or registry)")
    params = dict(_PARAMS[kind])
    given = _get(raw, "params", dict, {}, "")
    for key, value in given.items():
        if key not in params:
            raise ConfigError(f"params.{key}", f"not a parameter of {kind}")
        params[key] = value
    for key, value in params.items():
        if key in ("command", "key"):
            if value is not None and not isinstance(value, str):
                raise ConfigError(f"params.{key}", "must be a string")
        elif value is not None and (isinstance(value, bool) or not isinstance(value, int) or value < 0):
            raise ConfigError(f"params.{key}", "must be a non-negative integer")
    if kind == "enumerate" and params["n_clients"] < 1:
        raise ConfigError("params.n_clients", "must be at least 1")
    if params.get("key") is not None:
        try:
            bytes.fromhex(params["key"])
        except ValueError:
            raise ConfigError("params.key", "must be hex") from None
    bag = raw.get("bag")
    if bag is not None and not isinstance(bag, str):
        raise ConfigError("bag", "must be a path string")
    if kind == "collect" and bag is None:
        raise ConfigError("bag", "required for evidence collection")
    case = _get(raw, "case", dict, {}, "")
    output = raw.get("output")
    echo = {
        "kind": kind,
        "transport": transport,
        "seed": seed,
        "signature": sig_ref,
        "sim": sim.to_dict() if sim else None,
        "params": params,
        "bag": bag,
    }
    return InvestigationConfig(kind, transport, seed, sig_ref, sim, params, bag, case, output, echo)


def _resolve_signature(cfg: InvestigationConfig, registry_root: str, base: Path) -> NetworkSignature:
    ref = cfg.signature_ref
    if "builtin" in ref:
        return default_signature_for(cfg.sim, CncStyle(ref["builtin"]))
    if "path" in ref:
        path = Path(ref["path"])
        return load_signature(path if path.is_absolute() else base / path)
    registry = SignatureRegistry(registry_root)
    version = _parse_version(ref["version"]) if ref.get("version") else None
    return registry.get(ref["network_id"], version)


def run_investigation(cfg: InvestigationConfig, sig: NetworkSignature, out_dir: Path, con: Console) -> int:
    if cfg.transport == "sim":
        world = build(cfg.sim, sig)
        transport = SimTransport(world)
    else:
        world = None
        transport = UdpTransport()
    bag = None
    if cfg.bag:
        bag_path = Path(cfg.bag)
        if not bag_path.is_absolute():
            bag_path = out_dir / bag_path
        bag = open_bag(
            bag_path,
            case_id=str(cfg.case.get("case_id", f"{cfg.kind}-{cfg.seed}")),
            investigator=str(cfg.case.get("investigator", "p2pforge")),
            network_id=sig.network_id,
            signature_digest=digest(sig),
            clock=transport.clock,
            notes=str(cfg.case.get("notes", "")),
        )
    p = cfg.params
    try:
        if cfg.kind == "enumerate":
            stop = StopRule(idle_rounds=max(1, p["idle_rounds"]), max_rounds=max(1, p["max_rounds"]),
                            min_rounds=min(p["min_rounds"], max(1, p["max_rounds"])))
            run = Enumeration(transport, sig, p["n_clients"], stop, seed=cfg.seed,
                              tap=bag.append if bag else None)
            report = run.run()
            findings = report.findings()
            findings["interim"] = [[r.rounds, r.live_estimate, len(r.footprint_ids)] for r in run.reports]
        elif cfg.kind == "anatomy":
            if world is not None and p["command_count"]:
                world.start_botmaster(max(1, p["command_interval"]), p["command_count"])
            findings = observe_anatomy(transport, sig, p["duration"], bag=bag, seed=cfg.seed,
                                       table_bound=max(1, p["table_bound"]),
                                       thresholds=AnatomyThresholds()).findings()
        elif cfg.kind == "collect":
            client = EmulatedClient(sig, transport, rng=random.Random(cfg.seed), participation=Participation.PASSIVE,
                                    tap=bag.append)
            hints = transport.bootstrap_hints() if hasattr(transport, "bootstrap_hints") else ()
            client.connect(hints)
            findings = collect_evidence(client, p["duration"], bag).findings()
        else:
            key = bytes.fromhex(p["key"]) if p["key"] is not None else cfg.sim.botmaster_key
            findings = takeover(transport, sig, p["command"].encode("utf-8"), key, horizon=p["horizon"]).findings()
    finally:
        if hasattr(transport, "close"):
            transport.close()

    exit_code = EXIT_OK
    if bag is not None:
        bag.seal()
        result = verify(bag.path)
        findings["bag"] = {
            "path": cfg.bag,
            "records": bag.next_seq,
            "chunks": len(result.chunks),
            "verified": result.ok,
        }
        if not result.ok:
            exit_code = EXIT_DOMAIN
    doc = make_report(cfg.kind, cfg.echo, digest(sig), findings)
    (out_dir / "report.json").write_text(dumps_report(doc), encoding="utf-8")
    summary = summary_text(cfg.kind, findings)
    (out_dir / "summary.txt").write_text(summary, encoding="utf-8")
    con.out(summary.rstrip("\n"))
    return exit_code


def cmd_investigate(args, con: Console) -> int:
    try:
        raw = _load_json(args.config)
        cfg = parse_investigation(raw, args.seed)
        sig = _resolve_signature(cfg, args.registry, Path(args.config).parent)
    except ConfigError as exc:
        con.err(f"config error: {exc}")
        return EXIT_USAGE
    except (SignatureError, KeyError, OSError, ValueError) as exc:
        con.err(f"config error: signature: {exc}")
        return EXIT_USAGE
    out_dir = Path(args.output_dir if args.output_dir != "." or not cfg.output else cfg.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        return run_investigation(cfg, sig, out_dir, con)
    except RealTransportRefused as exc:
        con.err(f"refused: {exc}")
        return EXIT_USAGE
    except (BootstrapFailed, InsufficientObservations, EvidenceError, OSError) as exc:
        con.err(f"investigation failed: {type(exc).__name__}: {exc}")
        return EXIT_RUNTIME


# -- evidence bags ----------------------------------------------------------

def cmd_bag(args, con: Console) -> int:
    action = args.bag_command
    if not Path(args.bag).exists():
        con.err(f"error: {args.bag} does not exist")
        return EXIT_USAGE
    if action == "verify":
        result = verify(args.bag)
        for line in result.lines():
            con.out(line)
        return EXIT_OK if result.ok else EXIT_DOMAIN
    if action == "replay":
        sig = None
        try:
            if args.sig:
                sig = load_signature(args.sig)
        except (OSError, SignatureError) as exc:
            con.err(f"error: signature: {exc}")
            return EXIT_USAGE
        try:
            items = replay(args.bag, sig, check_signature=not args.no_sig_check)
            for item in items:
                print(item.line(sig))
        except VerificationRequired as exc:
            con.err(str(exc))
            return EXIT_DOMAIN
        except SignatureMismatch as exc:
            con.err(f"error: {exc}")
            return EXIT_DOMAIN
        return EXIT_OK
    if action == "transfer":
        if args.remote:
            host, _, port = args.remote.rpartition(":")
            try:
                sink = RemoteSink(host or "127.0.0.1", int(port))
            except (OSError, ValueError) as exc:
                con.err(f"error: cannot reach sink: {exc}")
                return EXIT_RUNTIME
        else:
            if not args.dest:
                con.err("error: give a destination path or --remote HOST:PORT")
                return EXIT_USAGE
            sink = FileSink(args.dest)
        if args.fault:
            mode, _, arg = args.fault.partition(":")
            try:
                corrupt = {"first": lambda: corrupt_first_delivery,
                           "once": lambda: corrupt_chunk_once(int(arg)),
                           "always": lambda: corrupt_chunk_always(int(arg))}[mode]()
            except (KeyError, ValueError):
                con.err("error: --fault takes first, once:N or always:N")
                return EXIT_USAGE
            sink = FaultInjectingSink(sink, corrupt)
        try:
            result = transfer(args.bag, sink, retry_limit=args.retry_limit)
        except RetryLimitExceeded as exc:
            for line in exc.log.lines():
                con.out(line)
            con.err(f"transfer failed: {exc}")
            return EXIT_DOMAIN
        except (SinkFailure, EvidenceError) as exc:
            con.err(f"transfer failed: {exc}")
            return EXIT_RUNTIME
        for line in result.lines():
            con.out(line)
        con.out(f"transferred {len({a.chunk_no for a in result.attempts})} chunk(s)")
        return EXIT_OK
    if action == "info":
        try:
            records = sum(1 for _ in iter_records(args.bag, strict=False))
        except EvidenceError as exc:
            con.err(f"error: {exc}")
            return EXIT_DOMAIN
        layout = read_layout(args.bag)
        con.out(json.dumps(layout.header, sort_keys=True, indent=2))
        con.out(f"records: {records}")
        con.out(f"sealed: {layout.sealed}")
        return EXIT_OK
    raise AssertionError(action)


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the configured seed")
    common.add_argument("--output-dir", default=argparse.SUPPRESS, help="where reports and logs go")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="suppress text output")
    common.add_argument("--registry", default=argparse.SUPPRESS, help="signature registry directory")

    parser = argparse.ArgumentParser(prog="p2pforge", parents=[common],
                                     description="Signature-driven P2P overlay investigation toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sig = sub.add_parser("sig", parents=[common], help="signature management")
    sig_sub = sig.add_subparsers(dest="sig_command", required=True)
    for name in ("validate", "digest"):
        p = sig_sub.add_parser(name, parents=[common])
        p.add_argument("file")
    p = sig_sub.add_parser("import", parents=[common], help="import a bundle into the registry")
    p.add_argument("bundle")
    p = sig_sub.add_parser("export", parents=[common], help="export registry entries as a bundle")
    p.add_argument("ids", nargs="*", metavar="NETWORK_ID[@VERSION]")
    p.add_argument("-o", "--out")
    sig_sub.add_parser("list", parents=[common])
    p = sig_sub.add_parser("builtin", parents=[common], help="print the simulator's own signature")
    p.add_argument("--cnc", choices=("push", "pull"), default="push")
    p.add_argument("-o", "--out")

    sim = sub.add_parser("sim", parents=[common], help="run the overlay simulator")
    sim_sub = sim.add_subparsers(dest="sim_command", required=True)
    p = sim_sub.add_parser("run", parents=[common])
    p.add_argument("config", help="JSON simulator config (or an investigation config with a 'sim' block)")
    p.add_argument("--until", type=int, default=1000)
    p.add_argument("--cnc", choices=("push", "pull"), default="push")
    p.add_argument("--events", default="events.tsv", help="event log file name inside the output dir")
    p.add_argument("--commands", type=int, default=0, help="botmaster commands to issue")
    p.add_argument("--command-interval", type=int, default=10)

    inv = sub.add_parser("investigate", parents=[common], help="run an investigation from a config file")
    inv.add_argument("config")

    bag = sub.add_parser("bag", parents=[common], help="evidence bag operations")
    bag_sub = bag.add_subparsers(dest="bag_command", required=True)
    p = bag_sub.add_parser("verify", parents=[common])
    p.add_argument("bag")
    p = bag_sub.add_parser("info", parents=[common])
    p.add_argument("bag")
    p = bag_sub.add_parser("replay", parents=[common])
    p.add_argument("bag")
    p.add_argument("--sig", help="signature file used to decode payloads")
    p.add_argument("--no-sig-check", action="store_true", help="decode even if the bag names another signature")
    p = bag_sub.add_parser("transfer", parents=[common])
    p.add_argument("bag")
    p.add_argument("dest", nargs="?")
    p.add_argument("--remote", metavar="HOST:PORT")
    p.add_argument("--retry-limit", type=int, default=5)
    p.add_argument("--fault", help="inject corruption: first | once:N | always:N")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    for name, default in (("seed", None), ("output_dir", "."), ("quiet", False),
                          ("registry", os.environ.get("P2PFORGE_REGISTRY", "registry"))):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    con = Console(args.quiet)
    handler = {"sig": cmd_sig, "sim": cmd_sim, "investigate": cmd_investigate, "bag": cmd_bag}[args.command]
    try:
        return handler(args, con)
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except BrokenPipeError:
        # downstream closed early (e.g. piped into head); not an error for us
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, sys.stdout.fileno())
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
