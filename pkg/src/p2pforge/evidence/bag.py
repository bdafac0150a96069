"""Append-only evidence bag with chunked SHA-512 integrity.

File layout (all integers big-endian)::

    "P2PEB\\0"  u16 version  u32 header_len  header JSON
    record*     -- u64 seq, u64 timestamp, u8 direction, 6B src, 6B dst, u32 len, payload
    index*      -- u32 chunk_no, u64 file offset, u32 length, 64B sha512      (sealed only)
    footer      -- u64 record_region_len, u32 chunk_count, 64B bag_hash, "P2PEB\\xff"

The record region is cut into fixed-size chunks (last one may be short). The
bag hash is SHA-512 over the header bytes followed by every chunk hash in
order, so it pins both the header and the index.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import IntEnum
from pathlib import Path
from typing import BinaryIO, Iterator, Optional

from p2pforge.net import Endpoint

MAGIC = b"P2PEB\x00"
END_MAGIC = b"P2PEB\xff"
FORMAT_VERSION = 1
DEFAULT_CHUNK_SIZE = 1 << 20

_PREFIX = struct.Struct(">6sHI")
_RECORD = struct.Struct(">QQB6s6sI")
_INDEX = struct.Struct(">IQI64s")
_FOOTER = struct.Struct(">QI64s6s")

RECORD_HEADER_LEN = _RECORD.size
INDEX_ENTRY_LEN = _INDEX.size
FOOTER_LEN = _FOOTER.size

REQUIRED_HEADER = ("case_id", "investigator", "network_id", "signature_digest")


class EvidenceError(Exception):
    pass


class BagSealed(EvidenceError):
    pass


class HeaderIncomplete(EvidenceError):
    pass


class IoFailure(EvidenceError):
    pass


class CorruptBag(EvidenceError):
    pass


class Direction(IntEnum):
    INBOUND = 0
    OUTBOUND = 1

    @classmethod
    def of(cls, value) -> "Direction":
        if isinstance(value, Direction):
            return value
        if value in ("in", "inbound"):
            return cls.INBOUND
        if value in ("out", "outbound"):
            return cls.OUTBOUND
        return cls(value)


@dataclass(frozen=True)
class PacketRecord:
    timestamp: int
    direction: Direction
    src: Endpoint
    dst: Endpoint
    payload: bytes
    seq: Optional[int] = None

    def pack(self, seq: int) -> bytes:
        return _RECORD.pack(seq, self.timestamp, int(self.direction), self.src.pack(),
                            self.dst.pack(), len(self.payload)) + self.payload


@dataclass(frozen=True)
class ChunkEntry:
    chunk_no: int
    offset: int
    length: int
    sha512: bytes


def utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def _encode_header(header: dict) -> bytes:
    body = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, FORMAT_VERSION, len(body)) + body


def _fsync(fh: BinaryIO) -> None:
    fh.flush()
    os.fsync(fh.fileno())


class _ChunkHasher:
    """Hash the record stream chunk by chunk as bytes arrive."""

    def __init__(self, chunk_size: int):
        self.chunk_size = chunk_size
        self.done: list[bytes] = []
        self._cur = hashlib.sha512()
        self._fill = 0
        self.total = 0

    def feed(self, data: bytes) -> None:
        view = memoryview(data)
        while view:
            take = min(len(view), self.chunk_size - self._fill)
            self._cur.update(view[:take])
            self._fill += take
            self.total += take
            view = view[take:]
            if self._fill == self.chunk_size:
                self.done.append(self._cur.digest())
                self._cur = hashlib.sha512()
                self._fill = 0

    def finish(self) -> list[bytes]:
        hashes = list(self.done)
        if self._fill:
            hashes.append(self._cur.digest())
        return hashes


class EvidenceBag:
    """A writable bag. Use :func:`open_bag` to create or resume one."""

    def __init__(self, path: Path, fh: BinaryIO, header: dict, header_bytes: bytes,
                 next_seq: int, durable: bool):
        self.path = path
        self.header = header
        self.header_bytes = header_bytes
        self.chunk_size = int(header["chunk_size"])
        self.next_seq = next_seq
        self.durable = durable
        self.sealed = False
        self.bag_hash: Optional[bytes] = None
        self._fh = fh
        self._hasher = _ChunkHasher(self.chunk_size)
        self._last_timestamp = 0

    @property
    def record_bytes(self) -> int:
        """Size of the record region written so far."""
        return self._hasher.total

    @property
    def record_offset(self) -> int:
        return len(self.header_bytes)

    def append_packet(self, record: PacketRecord) -> int:
        """Persist ``record`` and return its sequence number."""
        if self.sealed:
            raise BagSealed(f"{self.path} is sealed")
        seq = self.next_seq
        blob = record.pack(seq)
        try:
            self._fh.write(blob)
            if self.durable:
                _fsync(self._fh)
            else:
                self._fh.flush()
        except OSError as exc:
            raise IoFailure(str(exc)) from exc
        self._hasher.feed(blob)
        self.next_seq = seq + 1
        return seq

    def append(self, direction, timestamp: int, src: Endpoint, dst: Endpoint, payload: bytes) -> int:
        return self.append_packet(PacketRecord(timestamp, Direction.of(direction), src, dst, bytes(payload)))

    def tap(self):
        """Callable usable as an emulated client's packet tap."""
        return self.append

    def seal(self) -> bytes:
        if self.sealed:
            raise BagSealed(f"{self.path} is already sealed")
        hashes = self._hasher.finish()
        base = len(self.header_bytes)
        total = self._hasher.total
        trailer = bytearray()
        for i, h in enumerate(hashes):
            length = min(self.chunk_size, total - i * self.chunk_size)
            trailer += _INDEX.pack(i, base + i * self.chunk_size, length, h)
        bag_hash = hashlib.sha512(self.header_bytes + b"".join(hashes)).digest()
        trailer += _FOOTER.pack(total, len(hashes), bag_hash, END_MAGIC)
        try:
            self._fh.write(trailer)
            _fsync(self._fh)
            self._fh.close()
        except OSError as exc:
            raise IoFailure(str(exc)) from exc
        self.sealed = True
        self.bag_hash = bag_hash
        return bag_hash

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self) -> "EvidenceBag":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def open_bag(
    path: os.PathLike | str,
    *,
    case_id: str = "",
    investigator: str = "",
    network_id: str = "",
    signature_digest: bytes = b"",
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    clock: str = "sim",
    notes: str = "",
    created_at: Optional[str] = None,
    durable: bool = True,
) -> EvidenceBag:
    """Create a bag, or resume an unsealed one left by a crash.

    ``notes`` is free text (e.g. host state the investigator wants on record).
    """
    path = Path(path)
    if path.exists():
        layout = read_layout(path)
        if layout.sealed:
            raise BagSealed(f"{path} is sealed; open it read-only")
        return recover(path, durable=durable)

    header = {
        "case_id": case_id,
        "investigator": investigator,
        "network_id": network_id,
        "signature_digest": signature_digest.hex() if isinstance(signature_digest, (bytes, bytearray)) else signature_digest,
        "chunk_size": chunk_size,
        "clock": clock,
        "notes": notes,
        "created_at": created_at or utc_now(),
    }
    missing = [k for k in REQUIRED_HEADER if not header[k]]
    if missing:
        raise HeaderIncomplete(f"missing header fields: {', '.join(missing)}")
    if len(bytes.fromhex(header["signature_digest"])) != 64:
        raise HeaderIncomplete("signature_digest must be 64 bytes")
    if chunk_size < 1:
        raise HeaderIncomplete("chunk_size must be positive")
    header_bytes = _encode_header(header)
    try:
        fh = open(path, "xb")
        fh.write(header_bytes)
        _fsync(fh)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return EvidenceBag(path, fh, header, header_bytes, 0, durable)


# -- reading ----------------------------------------------------------------

@dataclass
class BagLayout:
    size: int
    header: dict
    header_bytes: bytes
    sealed: bool
    record_start: int
    record_end: int  # exclusive, as found in the file
    declared_record_len: Optional[int] = None
    index: list[ChunkEntry] = field(default_factory=list)
    bag_hash: Optional[bytes] = None

    @property
    def chunk_size(self) -> int:
        return int(self.header["chunk_size"])

    @property
    def trailer_start(self) -> int:
        return self.record_end


def _read_prefix(fh: BinaryIO) -> tuple[dict, bytes]:
    raw = fh.read(_PREFIX.size)
    if len(raw) < _PREFIX.size:
        raise CorruptBag("file shorter than the bag prefix")
    magic, version, hlen = _PREFIX.unpack(raw)
    if magic != MAGIC:
        raise CorruptBag("bad magic")
    if version != FORMAT_VERSION:
        raise CorruptBag(f"unsupported format version {version}")
    body = fh.read(hlen)
    if len(body) < hlen:
        raise CorruptBag("header block truncated")
    try:
        header = json.loads(body)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptBag(f"header is not JSON: {exc}") from None
    if not isinstance(header, dict) or not isinstance(header.get("chunk_size"), int) or header["chunk_size"] < 1:
        raise CorruptBag("header lacks a usable chunk_size")
    return header, raw + body


def read_layout(path: os.PathLike | str) -> BagLayout:
    path = Path(path)
    size = path.stat().st_size
    with open(path, "rb") as fh:
        header, header_bytes = _read_prefix(fh)
        start = len(header_bytes)
        sealed = False
        if size - start >= FOOTER_LEN:
            fh.seek(size - FOOTER_LEN)
            rec_len, count, bag_hash, end = _FOOTER.unpack(fh.read(FOOTER_LEN))
            index_start = size - FOOTER_LEN - count * INDEX_ENTRY_LEN
            sealed = end == END_MAGIC and index_start >= start
        if not sealed:
            return BagLayout(size, header, header_bytes, False, start, size)
        fh.seek(index_start)
        raw = fh.read(count * INDEX_ENTRY_LEN)
        index = [ChunkEntry(*_INDEX.unpack_from(raw, i * INDEX_ENTRY_LEN)) for i in range(count)]
    return BagLayout(size, header, header_bytes, True, start, index_start, rec_len, index, bag_hash)


def iter_records(path: os.PathLike | str, layout: Optional[BagLayout] = None,
                 strict: bool = True) -> Iterator[tuple[int, PacketRecord]]:
    """Yield (record-region offset, record) in file order.

    With ``strict`` a partial trailing record raises CorruptBag; otherwise
    iteration just stops there.
    """
    layout = layout or read_layout(path)
    with open(path, "rb") as fh:
        fh.seek(layout.record_start)
        region = fh.read(layout.record_end - layout.record_start)
    pos = 0
    n = len(region)
    while pos < n:
        if pos + RECORD_HEADER_LEN > n:
            if strict:
                raise CorruptBag(f"partial record header at region offset {pos}")
            return
        seq, ts, direction, src, dst, length = _RECORD.unpack_from(region, pos)
        end = pos + RECORD_HEADER_LEN + length
        if end > n:
            if strict:
                raise CorruptBag(f"record {seq} payload runs past the record region")
            return
        try:
            dir_value = Direction(direction)
        except ValueError:
            raise CorruptBag(f"record {seq} has direction byte {direction}") from None
        rec = PacketRecord(ts, dir_value, Endpoint.unpack(src), Endpoint.unpack(dst),
                           bytes(region[pos + RECORD_HEADER_LEN:end]), seq)
        yield pos, rec
        pos = end


def recover(path: os.PathLike | str, durable: bool = True) -> EvidenceBag:
    """Reopen an unsealed bag, dropping any partially written trailing record."""
    path = Path(path)
    layout = read_layout(path)
    if layout.sealed:
        raise BagSealed(f"{path} is sealed")
    good_end = 0
    next_seq = 0
    for offset, rec in iter_records(path, layout, strict=False):
        if rec.seq != next_seq:
            raise CorruptBag(f"sequence gap: expected {next_seq}, found {rec.seq}")
        next_seq += 1
        good_end = offset + RECORD_HEADER_LEN + len(rec.payload)
    try:
        fh = open(path, "r+b")
        fh.truncate(layout.record_start + good_end)
        fh.seek(layout.record_start)
        region = fh.read(good_end)
        fh.seek(0, os.SEEK_END)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    bag = EvidenceBag(path, fh, layout.header, layout.header_bytes, next_seq, durable)
    bag._hasher.feed(region)
    return bag
