"""JSON report envelope and plain-text summaries."""

from __future__ import annotations

import json
from typing import Any

REPORT_KEY = "p2pforge_report_v1"


def make_report(kind: str, config: dict, signature_digest: bytes | str, findings: dict) -> dict:
    digest_hex = signature_digest.hex() if isinstance(signature_digest, (bytes, bytearray)) else signature_digest
    return {REPORT_KEY: {"kind": kind, "config": config, "signature_digest": digest_hex, "findings": findings}}


def dumps_report(report: dict) -> str:
    # fixed key order and separators: the same run must give the same bytes
    return json.dumps(report, sort_keys=True, indent=2, ensure_ascii=True) + "\n"


def load_report(text: str) -> dict:
    doc = json.loads(text)
    if not isinstance(doc, dict) or REPORT_KEY not in doc:
        raise ValueError(f"not a {REPORT_KEY} document")
    return doc[REPORT_KEY]


_HIDDEN = {"footprint_ids"}


def summary_text(kind: str, findings: dict[str, Any]) -> str:
    lines = [f"investigation: {kind}"]
    _flatten(findings, "", lines)
    return "\n".join(lines) + "\n"


def _flatten(findings: dict[str, Any], prefix: str, lines: list[str]) -> None:
    for key in sorted(findings):
        if key in _HIDDEN:
            continue
        value = findings[key]
        if isinstance(value, dict):
            _flatten(value, f"{prefix}{key}.", lines)
            continue
        if isinstance(value, list):
            value = ", ".join(str(v) for v in value) if value else "-"
        lines.append(f"{prefix}{key}: {value}")
