"""Forensic evidence bag: capture, seal, verify, replay, transfer."""

from p2pforge.evidence.bag import (
    DEFAULT_CHUNK_SIZE,
    BagSealed,
    CorruptBag,
    Direction,
    EvidenceBag,
    EvidenceError,
    HeaderIncomplete,
    IoFailure,
    PacketRecord,
    iter_records,
    open_bag,
    read_layout,
    recover,
)
from p2pforge.evidence.replay import RawPayload, ReplayItem, SignatureMismatch, VerificationRequired, replay
from p2pforge.evidence.transfer import (
    FaultInjectingSink,
    FileSink,
    RemoteSink,
    RetryLimitExceeded,
    SinkFailure,
    SinkServer,
    TransferLog,
    corrupt_chunk_always,
    corrupt_chunk_once,
    corrupt_first_delivery,
    transfer,
)
from p2pforge.evidence.verify import ChunkResult, VerifyReport, verify

__all__ = [
    "DEFAULT_CHUNK_SIZE", "BagSealed", "ChunkResult", "CorruptBag", "Direction", "EvidenceBag",
    "EvidenceError", "FaultInjectingSink", "FileSink", "HeaderIncomplete", "IoFailure",
    "PacketRecord", "RawPayload", "RemoteSink", "ReplayItem", "RetryLimitExceeded",
    "SignatureMismatch", "SinkFailure", "SinkServer", "TransferLog", "VerificationRequired",
    "VerifyReport", "corrupt_chunk_always", "corrupt_chunk_once", "corrupt_first_delivery",
    "iter_records", "open_bag", "read_layout", "recover", "replay", "transfer", "verify",
]
