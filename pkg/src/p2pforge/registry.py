"""Local file-backed signature registry with digest-checked bundle import/export.

Bundle format: one record per line, ``<sha512-hex> <base64(document)>``.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from p2pforge.signature import (
    NetworkSignature,
    SignatureError,
    parse_signature,
    serialize,
)

log = logging.getLogger(__name__)

SigKey = tuple[str, tuple[int, int, int]]


@dataclass
class ImportProblem:
    line: int
    code: str  # DigestMismatch | DuplicateNetworkIdSameVersion | MalformedRecord | InvalidSignature
    detail: str


@dataclass
class ImportResult:
    added: int = 0
    problems: list[ImportProblem] = field(default_factory=list)
    added_keys: list[SigKey] = field(default_factory=list)


class RegistryError(Exception):
    pass


class SignatureRegistry:
    """In-memory index of signatures, optionally persisted to a directory.

    Multiple versions of one network_id may coexist; ``get`` without a version
    returns the highest.
    """

    def __init__(self, root: Optional[os.PathLike | str] = None):
        self.root = Path(root) if root is not None else None
        self._docs: dict[SigKey, bytes] = {}
        self._sigs: dict[SigKey, NetworkSignature] = {}
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            for path in sorted(self.root.glob("*.json")):
                sig = parse_signature(path.read_bytes())
                self._put(sig, persist=False)

    def __len__(self) -> int:
        return len(self._sigs)

    def __contains__(self, key: SigKey) -> bool:
        return key in self._sigs

    def keys(self) -> list[SigKey]:
        return sorted(self._sigs)

    def _path_for(self, key: SigKey) -> Path:
        assert self.root is not None
        name, ver = key
        safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in name)
        return self.root / f"{safe}@{ver[0]}.{ver[1]}.{ver[2]}.json"

    def _put(self, sig: NetworkSignature, persist: bool = True) -> None:
        doc = serialize(sig)
        self._docs[sig.key] = doc
        self._sigs[sig.key] = sig
        if persist and self.root is not None:
            path = self._path_for(sig.key)
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(doc)
            os.replace(tmp, path)

    def add(self, sig: NetworkSignature) -> None:
        if sig.key in self._sigs:
            raise RegistryError(f"DuplicateNetworkIdSameVersion: {sig.network_id} {sig.version_text}")
        self._put(sig)

    def get(self, network_id: str, version: Optional[tuple[int, int, int]] = None) -> NetworkSignature:
        if version is not None:
            try:
                return self._sigs[(network_id, tuple(version))]  # type: ignore[index]
            except KeyError:
                raise KeyError(f"{network_id} {version} not in registry") from None
        versions = [k for k in self._sigs if k[0] == network_id]
        if not versions:
            raise KeyError(f"{network_id} not in registry")
        return self._sigs[max(versions)]

    def document(self, key: SigKey) -> bytes:
        return self._docs[key]

    def export_bundle(self, keys: Optional[Iterable[SigKey]] = None) -> bytes:
        selected = self.keys() if keys is None else [(k[0], tuple(k[1])) for k in keys]
        lines = []
        for key in selected:
            doc = self._docs[key]  # type: ignore[index]
            lines.append(hashlib.sha512(doc).hexdigest() + " " + base64.b64encode(doc).decode("ascii"))
        return ("\n".join(lines) + "\n").encode("ascii") if lines else b""

    def import_bundle(self, bundle: bytes | str) -> ImportResult:
        """Import every record whose embedded digest matches its document.

        A bad record is reported and skipped; the rest still import.
        """
        if isinstance(bundle, bytes):
            bundle = bundle.decode("ascii", errors="replace")
        result = ImportResult()
        for lineno, line in enumerate(bundle.splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            hex_digest, sep, b64 = line.partition(" ")
            try:
                if not sep:
                    raise ValueError("missing separator")
                doc = base64.b64decode(b64, validate=True)
            except (ValueError, binascii.Error) as exc:
                result.problems.append(ImportProblem(lineno, "MalformedRecord", str(exc)))
                continue
            if hashlib.sha512(doc).hexdigest() != hex_digest.lower():
                result.problems.append(ImportProblem(lineno, "DigestMismatch", "embedded digest does not match document"))
                continue
            try:
                sig = parse_signature(doc)
            except SignatureError as exc:
                result.problems.append(ImportProblem(lineno, "InvalidSignature", str(exc)))
                continue
            if sig.key in self._sigs:
                result.problems.append(ImportProblem(
                    lineno, "DuplicateNetworkIdSameVersion", f"{sig.network_id} {sig.version_text}"))
                continue
            self._put(sig)
            result.added += 1
            result.added_keys.append(sig.key)
            log.debug("imported %s %s", sig.network_id, sig.version_text)
        return result
