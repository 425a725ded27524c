"""Store snapshots: the gzip file format for backup and restore.

A snapshot freezes the result warehouse (signature → result bytes) and
any saved training sets. The payload is gzip-compressed; inside, a magic
and version prefix the records and a SHA-256 checksum trails them, so a
truncated or tampered file is rejected before anything is loaded.
"""

from __future__ import annotations

import gzip
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .demands import DemandSignature
from .encoding import RecordError, RecordReader, RecordWriter
from .errors import EdurtError

__all__ = [
    "SNAPSHOT_MAGIC",
    "SNAPSHOT_VERSION",
    "CorruptSnapshot",
    "Snapshot",
    "encode_snapshot",
    "decode_snapshot",
    "write_snapshot",
    "read_snapshot",
]

SNAPSHOT_MAGIC = b"EDSS"
SNAPSHOT_VERSION = 0x01

_DIGEST_SIZE = 32


class CorruptSnapshot(EdurtError):
    """The file is not a well-formed snapshot; nothing was loaded."""


@dataclass(frozen=True)
class Snapshot:
    """Decoded snapshot contents."""

    warehouse: tuple[tuple[DemandSignature, bytes], ...] = ()
    training_sets: tuple[tuple[str, bytes], ...] = field(default_factory=tuple)


def encode_snapshot(
    warehouse: Iterable[tuple[DemandSignature, bytes]],
    training_sets: Iterable[tuple[str, bytes]] = (),
) -> bytes:
    writer = RecordWriter()
    writer.raw(SNAPSHOT_MAGIC)
    writer.u8(SNAPSHOT_VERSION)
    warehouse = list(warehouse)
    writer.u32(len(warehouse))
    for signature, result in warehouse:
        writer.text(signature.workload_id)
        writer.text(signature.stage_id)
        writer.raw(signature.input_digest)
        writer.blob(result)
    training_sets = list(training_sets)
    writer.u32(len(training_sets))
    for filename, content in training_sets:
        writer.text(filename)
        writer.blob(content)
    body = writer.done()
    return gzip.compress(body + hashlib.sha256(body).digest())


def decode_snapshot(data: bytes) -> Snapshot:
    try:
        raw = gzip.decompress(data)
    except (OSError, EOFError) as exc:
        raise CorruptSnapshot(f"not a gzip stream: {exc}") from None
    if len(raw) < len(SNAPSHOT_MAGIC) + 1 + _DIGEST_SIZE:
        raise CorruptSnapshot("file too short to hold a snapshot")
    body, checksum = raw[:-_DIGEST_SIZE], raw[-_DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != checksum:
        raise CorruptSnapshot("checksum mismatch")
    reader = RecordReader(body)
    try:
        magic = reader.raw(len(SNAPSHOT_MAGIC))
        if magic != SNAPSHOT_MAGIC:
            raise CorruptSnapshot(f"bad magic {magic!r}")
        version = reader.u8()
        if version != SNAPSHOT_VERSION:
            raise CorruptSnapshot(f"unsupported snapshot version {version:#04x}")
        warehouse = []
        for _ in range(reader.u32()):
            workload_id = reader.text()
            stage_id = reader.text()
            digest = reader.raw(_DIGEST_SIZE)
            result = reader.blob()
            warehouse.append((DemandSignature(workload_id, stage_id, digest), result))
        training_sets = []
        for _ in range(reader.u32()):
            training_sets.append((reader.text(), reader.blob()))
        reader.expect_end()
    except RecordError as exc:
        raise CorruptSnapshot(f"malformed snapshot: {exc}") from None
    return Snapshot(tuple(warehouse), tuple(training_sets))


def write_snapshot(
    path: str | Path,
    warehouse: Iterable[tuple[DemandSignature, bytes]],
    training_sets: Iterable[tuple[str, bytes]] = (),
) -> None:
    Path(path).write_bytes(encode_snapshot(warehouse, training_sets))


def read_snapshot(path: str | Path) -> Snapshot:
    return decode_snapshot(Path(path).read_bytes())
