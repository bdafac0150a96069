"""Recompute chunk hashes and the bag hash of a sealed bag."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from typing import Optional

from p2pforge.evidence.bag import CorruptBag, read_layout

OK = "ok"
HASH_MISMATCH = "HashMismatch"
LENGTH_MISMATCH = "LengthMismatch"
INDEX_MISMATCH = "IndexMismatch"


@dataclass(frozen=True)
class ChunkResult:
    chunk_no: int
    status: str
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OK


@dataclass
class VerifyReport:
    chunks: list[ChunkResult] = field(default_factory=list)
    bag_hash_ok: bool = False
    structure_error: Optional[str] = None
    record_count: Optional[int] = None

    @property
    def ok(self) -> bool:
        return self.structure_error is None and self.bag_hash_ok and all(c.ok for c in self.chunks)

    @property
    def failed_chunks(self) -> list[int]:
        return [c.chunk_no for c in self.chunks if not c.ok]

    def lines(self) -> list[str]:
        out = []
        if self.structure_error:
            out.append(f"structure: FAIL {self.structure_error}")
        for c in self.chunks:
            out.append(f"chunk {c.chunk_no}: {'ok' if c.ok else 'FAIL ' + c.status}"
                       + (f" ({c.detail})" if c.detail else ""))
        if self.structure_error is None:
            out.append(f"bag_hash: {'ok' if self.bag_hash_ok else 'FAIL'}")
        out.append("verdict: " + ("PASS" if self.ok else "FAIL"))
        return out


def verify(path: os.PathLike | str) -> VerifyReport:
    report = VerifyReport()
    try:
        layout = read_layout(path)
    except (CorruptBag, OSError) as exc:
        report.structure_error = str(exc)
        return report
    if not layout.sealed:
        report.structure_error = "TrailerMissing: bag is not sealed or its trailer is damaged"
        return report

    size = layout.chunk_size
    start = layout.record_start
    found_len = layout.record_end - start
    declared = layout.declared_record_len
    region_end = start + found_len
    with open(path, "rb") as fh:
        for i, entry in enumerate(layout.index):
            want_offset = start + i * size
            want_length = min(size, declared - i * size) if declared is not None else entry.length
            if entry.chunk_no != i or entry.offset != want_offset or entry.length != want_length:
                report.chunks.append(ChunkResult(i, INDEX_MISMATCH,
                                                 f"entry says #{entry.chunk_no} @{entry.offset}+{entry.length}"))
                continue
            last = i == len(layout.index) - 1
            available = max(0, min(entry.length, region_end - entry.offset))
            if available < entry.length:
                report.chunks.append(ChunkResult(
                    i, LENGTH_MISMATCH, f"expected {entry.length} bytes, found {available}"))
                continue
            if last and found_len != declared:
                report.chunks.append(ChunkResult(
                    i, LENGTH_MISMATCH, f"record region is {found_len} bytes, trailer says {declared}"))
                continue
            fh.seek(entry.offset)
            data = fh.read(entry.length)
            if hashlib.sha512(data).digest() != entry.sha512:
                report.chunks.append(ChunkResult(i, HASH_MISMATCH))
            else:
                report.chunks.append(ChunkResult(i, OK))
    expected_chunks = -(-declared // size) if declared else 0
    if expected_chunks != len(layout.index):
        report.structure_error = f"index holds {len(layout.index)} chunks, record length implies {expected_chunks}"
    recomputed = hashlib.sha512(layout.header_bytes + b"".join(e.sha512 for e in layout.index)).digest()
    report.bag_hash_ok = recomputed == layout.bag_hash
    return report
