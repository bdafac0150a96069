"""Verified chunk-by-chunk transfer of a sealed bag to a sink.

The sender ships the bag's header block and trailer first (the manifest), then
each chunk. The sink hashes every chunk on receipt, compares it with the
manifest's index, and acknowledges OK or BAD. BAD chunks are re-sent
immediately, up to ``retry_limit`` attempts in total.
"""

from __future__ import annotations

import hashlib
import os
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol

from p2pforge.evidence.bag import (
    FOOTER_LEN,
    INDEX_ENTRY_LEN,
    ChunkEntry,
    EvidenceError,
    _FOOTER,
    _INDEX,
    read_layout,
)
from p2pforge.evidence.verify import verify

RETRY_LIMIT = 5


class SinkFailure(EvidenceError):
    pass


@dataclass(frozen=True)
class Ack:
    chunk_no: int
    ok: bool
    sha512_hex: str


@dataclass(frozen=True)
class TransferAttempt:
    chunk_no: int
    attempt: int
    ok: bool
    sha512_hex: str


@dataclass
class TransferLog:
    attempts: list[TransferAttempt] = field(default_factory=list)
    completed: bool = False

    def attempts_for(self, chunk_no: int) -> int:
        return sum(1 for a in self.attempts if a.chunk_no == chunk_no)

    def lines(self) -> list[str]:
        return [f"chunk {a.chunk_no} attempt {a.attempt}: {'OK' if a.ok else 'BAD'} {a.sha512_hex[:16]}"
                for a in self.attempts]


class RetryLimitExceeded(EvidenceError):
    def __init__(self, chunk_no: int, log: TransferLog):
        super().__init__(f"chunk {chunk_no} not acknowledged after {log.attempts_for(chunk_no)} attempts")
        self.chunk_no = chunk_no
        self.log = log


class Sink(Protocol):
    def begin(self, prefix: bytes, trailer: bytes) -> None: ...
    def put_chunk(self, chunk_no: int, data: bytes) -> Ack: ...
    def finish(self) -> bool: ...


def parse_index(trailer: bytes) -> list[ChunkEntry]:
    if len(trailer) < FOOTER_LEN:
        raise SinkFailure("manifest trailer too short")
    _, count, _, _ = _FOOTER.unpack_from(trailer, len(trailer) - FOOTER_LEN)
    if len(trailer) != FOOTER_LEN + count * INDEX_ENTRY_LEN:
        raise SinkFailure("manifest trailer size disagrees with its chunk count")
    return [ChunkEntry(*_INDEX.unpack_from(trailer, i * INDEX_ENTRY_LEN)) for i in range(count)]


class FileSink:
    """Reassemble the bag at ``path``; accepted chunks only ever hit the disk."""

    def __init__(self, path: os.PathLike | str):
        self.path = Path(path)
        self._part = self.path.with_name(self.path.name + ".part")
        self._index: list[ChunkEntry] = []
        self._prefix = b""
        self._trailer = b""
        self._received: set[int] = set()
        self._fh = None

    def begin(self, prefix: bytes, trailer: bytes) -> None:
        self._index = parse_index(trailer)
        self._prefix, self._trailer = prefix, trailer
        self._fh = open(self._part, "wb")
        self._fh.write(prefix)

    def put_chunk(self, chunk_no: int, data: bytes) -> Ack:
        got = hashlib.sha512(data).digest()
        if not 0 <= chunk_no < len(self._index):
            return Ack(chunk_no, False, got.hex())
        entry = self._index[chunk_no]
        ok = got == entry.sha512 and len(data) == entry.length
        if ok:
            self._fh.seek(entry.offset)
            self._fh.write(data)
            self._received.add(chunk_no)
        return Ack(chunk_no, ok, got.hex())

    def finish(self) -> bool:
        if self._fh is None:
            return False
        if len(self._received) != len(self._index):
            self._fh.close()
            return False
        end = self._index[-1].offset + self._index[-1].length if self._index else len(self._prefix)
        self._fh.seek(end)
        self._fh.write(self._trailer)
        self._fh.truncate()
        self._fh.flush()
        os.fsync(self._fh.fileno())
        self._fh.close()
        os.replace(self._part, self.path)
        return verify(self.path).ok


def corrupt_first_delivery(chunk_no: int, attempt: int) -> bool:
    return attempt == 1


def corrupt_chunk_always(target: int) -> Callable[[int, int], bool]:
    return lambda chunk_no, attempt: chunk_no == target


def corrupt_chunk_once(target: int) -> Callable[[int, int], bool]:
    return lambda chunk_no, attempt: chunk_no == target and attempt == 1


class FaultInjectingSink:
    """Flips a byte of selected deliveries before handing them to ``inner``."""

    def __init__(self, inner: Sink, corrupt: Callable[[int, int], bool] = corrupt_first_delivery):
        self.inner = inner
        self.corrupt = corrupt
        self.deliveries: dict[int, int] = {}

    def begin(self, prefix: bytes, trailer: bytes) -> None:
        self.inner.begin(prefix, trailer)

    def put_chunk(self, chunk_no: int, data: bytes) -> Ack:
        n = self.deliveries.get(chunk_no, 0) + 1
        self.deliveries[chunk_no] = n
        if data and self.corrupt(chunk_no, n):
            damaged = bytearray(data)
            damaged[len(damaged) // 2] ^= 0xFF
            data = bytes(damaged)
        return self.inner.put_chunk(chunk_no, data)

    def finish(self) -> bool:
        return self.inner.finish()


def transfer(path: os.PathLike | str, sink: Sink, retry_limit: int = RETRY_LIMIT) -> TransferLog:
    layout = read_layout(path)
    if not layout.sealed:
        raise EvidenceError(f"{path} is not sealed")
    log = TransferLog()
    with open(path, "rb") as fh:
        fh.seek(layout.record_end)
        trailer = fh.read()
        try:
            sink.begin(layout.header_bytes, trailer)
            for entry in layout.index:
                fh.seek(entry.offset)
                data = fh.read(entry.length)
                for attempt in range(1, retry_limit + 1):
                    ack = sink.put_chunk(entry.chunk_no, data)
                    log.attempts.append(TransferAttempt(entry.chunk_no, attempt, ack.ok, ack.sha512_hex))
                    if ack.ok:
                        break
                else:
                    raise RetryLimitExceeded(entry.chunk_no, log)
            ok = sink.finish()
        except (OSError, ConnectionError) as exc:
            raise SinkFailure(str(exc)) from exc
    if not ok:
        raise SinkFailure("sink could not verify the reassembled bag")
    log.completed = True
    return log


# -- loopback TCP -----------------------------------------------------------
#
#   BEGIN <prefix_len> <trailer_len>\n <bytes>   ->  OK\n
#   CHUNK <chunk_no> <length>\n <bytes>           ->  ACK <chunk_no> OK|BAD <sha512-hex>\n
#   END\n                                         ->  END OK|BAD\n


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        sink: Sink = self.server.sink_factory()  # type: ignore[attr-defined]
        while True:
            line = self.rfile.readline()
            if not line:
                return
            parts = line.decode("ascii", "replace").split()
            if parts[:1] == ["BEGIN"] and len(parts) == 3:
                plen, tlen = int(parts[1]), int(parts[2])
                prefix = self.rfile.read(plen)
                trailer = self.rfile.read(tlen)
                try:
                    sink.begin(prefix, trailer)
                    self.wfile.write(b"OK\n")
                except (SinkFailure, OSError) as exc:
                    self.wfile.write(f"ERR {exc}\n".encode())
            elif parts[:1] == ["CHUNK"] and len(parts) == 3:
                n, length = int(parts[1]), int(parts[2])
                ack = sink.put_chunk(n, self.rfile.read(length))
                self.wfile.write(f"ACK {n} {'OK' if ack.ok else 'BAD'} {ack.sha512_hex}\n".encode())
            elif parts == ["END"]:
                self.wfile.write(b"END OK\n" if sink.finish() else b"END BAD\n")
                return
            else:
                self.wfile.write(b"ERR bad request\n")
                return


class SinkServer:
    """Threaded loopback server fronting a sink; one sink per connection."""

    def __init__(self, sink_factory: Callable[[], Sink], host: str = "127.0.0.1", port: int = 0):
        self._server = socketserver.ThreadingTCPServer((host, port), _Handler)
        self._server.daemon_threads = True
        self._server.sink_factory = sink_factory  # type: ignore[attr-defined]
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def start(self) -> "SinkServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> "SinkServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


class RemoteSink:
    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._rfile = self._sock.makefile("rb")

    def _reply(self) -> list[str]:
        line = self._rfile.readline()
        if not line:
            raise SinkFailure("sink closed the connection")
        return line.decode("ascii", "replace").split()

    def begin(self, prefix: bytes, trailer: bytes) -> None:
        self._sock.sendall(f"BEGIN {len(prefix)} {len(trailer)}\n".encode() + prefix + trailer)
        reply = self._reply()
        if reply[:1] != ["OK"]:
            raise SinkFailure(" ".join(reply))

    def put_chunk(self, chunk_no: int, data: bytes) -> Ack:
        self._sock.sendall(f"CHUNK {chunk_no} {len(data)}\n".encode() + data)
        reply = self._reply()
        if len(reply) != 4 or reply[0] != "ACK" or int(reply[1]) != chunk_no:
            raise SinkFailure("unexpected reply: " + " ".join(reply))
        return Ack(chunk_no, reply[2] == "OK", reply[3])

    def finish(self) -> bool:
        self._sock.sendall(b"END\n")
        reply = self._reply()
        self.close()
        return reply == ["END", "OK"]

    def close(self) -> None:
        self._rfile.close()
        self._sock.close()
