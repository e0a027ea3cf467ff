"""Hash-chained accountability log for record reads and writes.

Identifiers are stored only as SHA-256 digests, operations and record
categories only as small integer tags. Each entry hashes a canonical
``AUD1|...`` string and chains it to its predecessor, so edits, insertions
and deletions all break verification at the first affected row.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import asdict, dataclass, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import AuditWriteError
from .escrow import hash_identifier

GENESIS = "0" * 64
CANON_VERSION = "AUD1"

READ, WRITE, TAMPER = 1, 2, 3
OPERATIONS = {"read": READ, "write": WRITE, "tamper": TAMPER}
CATEGORIES = ("basic", "confidential", "emergency")


@dataclass(frozen=True)
class TagMap:
    """Deployment-fixed bijection from record category to a tag in {1, 2, 3}."""

    basic: int = 2
    confidential: int = 3
    emergency: int = 1

    def __post_init__(self):
        if sorted((self.basic, self.confidential, self.emergency)) != [1, 2, 3]:
            raise ValueError("tag map must be a permutation of {1, 2, 3}")

    def tag(self, category: str) -> int:
        if category not in CATEGORIES:
            raise ValueError(f"unknown record category {category!r}")
        return getattr(self, category)

    def category(self, tag: int) -> str:
        for c in CATEGORIES:
            if getattr(self, c) == tag:
                return c
        raise ValueError(f"tag {tag} not in map")

    @classmethod
    def load(cls, path) -> "TagMap":
        return cls(**json.loads(Path(path).read_text()))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self)) + "\n")


def format_timestamp(now: float) -> str:
    return datetime.fromtimestamp(now, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def sha256_hex(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class AuditEntry:
    operation_id: int
    operation_no: int
    license_hash: str
    timestamp: str
    patient_hash: str
    rec_type_no: int
    operation_hash: str
    chain_hash: str

    def canonical(self) -> str:
        return canonical_string(
            self.operation_id, self.operation_no, self.license_hash,
            self.timestamp, self.patient_hash, self.rec_type_no,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))


_FIELD_TYPES = {f.name: (int if f.type in ("int", int) else str) for f in fields(AuditEntry)}


def canonical_string(operation_id, operation_no, license_hash, timestamp, patient_hash, rec_type_no) -> str:
    return "|".join(
        str(v) for v in (CANON_VERSION, operation_id, operation_no, license_hash,
                         timestamp, patient_hash, rec_type_no)
    )


def chain(prev_chain: str, operation_hash: str) -> str:
    return sha256_hex(prev_chain + operation_hash)


def record_integrity_digest(record_bytes: bytes) -> str:
    return sha256_hex(record_bytes)


class AuditLog:
    """Append-only audit log, optionally backed by a JSON-lines file.

    A ``.head`` sidecar holds the entry count and last chain hash so that
    truncation of trailing rows is detectable too.
    """

    def __init__(self, path: Optional[os.PathLike] = None, tagmap: TagMap = TagMap()):
        self.path = Path(path) if path is not None else None
        self.tagmap = tagmap
        self._entries: list[AuditEntry] = []
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._entries = [e for e in parse_lines(self.path.read_bytes()) if isinstance(e, AuditEntry)]

    @property
    def head_path(self) -> Optional[Path]:
        return None if self.path is None else self.path.with_name(self.path.name + ".head")

    @property
    def entries(self) -> tuple[AuditEntry, ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def head(self) -> dict:
        last = self._entries[-1].chain_hash if self._entries else GENESIS
        return {"count": len(self._entries), "chain_hash": last}

    def append(self, operation_no: int, license_hash: str, patient_hash: str, rec_type_no: int, now: float) -> AuditEntry:
        with self._lock:
            prev = self._entries[-1] if self._entries else None
            op_id = prev.operation_id + 1 if prev else 1
            ts = format_timestamp(now)
            op_hash = sha256_hex(canonical_string(op_id, operation_no, license_hash, ts, patient_hash, rec_type_no))
            entry = AuditEntry(op_id, operation_no, license_hash, ts, patient_hash, rec_type_no,
                               op_hash, chain(prev.chain_hash if prev else GENESIS, op_hash))
            if self.path is not None:
                try:
                    with open(self.path, "a") as fh:
                        fh.write(entry.to_json() + "\n")
                    self.head_path.write_text(json.dumps({"count": len(self._entries) + 1,
                                                          "chain_hash": entry.chain_hash}) + "\n")
                except OSError as exc:
                    raise AuditWriteError(f"cannot append to {self.path}: {exc}") from exc
            self._entries.append(entry)
            return entry

    def verify(self) -> Optional[int]:
        head = None
        if self.head_path is not None and self.head_path.exists():
            head = json.loads(self.head_path.read_text())
        if self.path is not None and self.path.exists():
            return verify_chain(parse_lines(self.path.read_bytes()), head)
        return verify_chain(self._entries, head)


def record_access(
    log: AuditLog,
    op: str,
    license_no: str,
    patient_no: str,
    category: str,
    now: float,
) -> AuditEntry:
    """Log a read or write; clear identifiers are hashed before storage."""
    return record_access_hashed(log, op, hash_identifier(license_no), hash_identifier(patient_no), category, now)


def record_access_hashed(log: AuditLog, op: str, license_hash: str, patient_hash: str, category: str, now: float) -> AuditEntry:
    if op not in ("read", "write"):
        raise ValueError(f"only read and write are logged, got {op!r}")
    return log.append(OPERATIONS[op], license_hash, patient_hash, log.tagmap.tag(category), now)


def check_record_integrity(
    log: AuditLog,
    record_bytes: bytes,
    expected_digest: str,
    license_hash: str,
    patient_hash: str,
    category: str,
    now: float,
) -> bool:
    """Compare a record against its stored digest; log a tamper entry on mismatch."""
    if record_integrity_digest(record_bytes) == expected_digest:
        return True
    log.append(TAMPER, license_hash, patient_hash, log.tagmap.tag(category), now)
    return False


def parse_lines(data: bytes) -> list:
    """Split a serialized log into entries; unreadable rows become None."""
    rows = data.split(b"\n")
    if rows and rows[-1] == b"":
        rows.pop()
    out = []
    for raw in rows:
        try:
            obj = json.loads(raw.decode("utf-8"))
            out.append(_entry_from_obj(obj))
        except (ValueError, TypeError, UnicodeDecodeError):
            out.append(None)
    return out


def _entry_from_obj(obj) -> AuditEntry:
    if not isinstance(obj, dict) or set(obj) != set(_FIELD_TYPES):
        raise ValueError("entry fields do not match the schema")
    for name, typ in _FIELD_TYPES.items():
        if type(obj[name]) is not typ:
            raise TypeError(f"field {name} has the wrong type")
    return AuditEntry(**obj)


def verify_chain(entries: Sequence[Optional[AuditEntry]], head: Optional[dict] = None) -> Optional[int]:
    """Return None if intact, else the index of the first tampered entry.

    ``None`` items (unparseable rows) count as tampered. With ``head`` the
    expected entry count and final chain hash are checked as well.
    """
    prev_chain = GENESIS
    prev_id = 0
    for i, e in enumerate(entries):
        if e is None:
            return i
        if e.operation_id != prev_id + 1 or e.operation_no not in (READ, WRITE, TAMPER) or e.rec_type_no not in (1, 2, 3):
            return i
        if sha256_hex(e.canonical()) != e.operation_hash:
            return i
        if chain(prev_chain, e.operation_hash) != e.chain_hash:
            return i
        prev_chain = e.chain_hash
        prev_id = e.operation_id
    if head is not None:
        count = head.get("count")
        if not isinstance(count, int) or count > len(entries):
            return len(entries)
        if count < len(entries):
            return count
        if head.get("chain_hash") != prev_chain:
            return max(len(entries) - 1, 0)
    return None


def describe(entry: AuditEntry, tagmap: TagMap) -> dict:
    """Interpret tags back into names for an authorized viewer."""
    op = {v: k for k, v in OPERATIONS.items()}[entry.operation_no]
    return dict(asdict(entry), operation=op, category=tagmap.category(entry.rec_type_no))
