"""Patient-owned key escrow.

Each record ties a patient's key to one physician (by license hash). The
state space is {ACTIVE, EXPIRED} x {ENROLLED, UNENROLLED}: keys only ever
move ACTIVE -> EXPIRED and UNENROLLED -> ENROLLED, and a physician holds at
most one ACTIVE key per patient. Time is always passed in by the caller.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterator, Optional

from .errors import ActiveKeyExists, IdentityMismatch, KeyExpired, NotFound, NotOwner
from .glcm import ACTIVE, ENROLLED, EXPIRED, UNENROLLED, TimedKey


def hash_identifier(value: str) -> str:
    """SHA-256 hex of an identifier such as a license or patient number."""
    return hashlib.sha256(str(value).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class EscrowRecord:
    escrow_id: int
    patient_no: str
    key_digits: str
    license_hash: str
    created_now: float
    created_expired: float
    hospital_id: str
    key_status: str = ACTIVE
    enrolled: str = UNENROLLED

    def usable(self, now: float) -> bool:
        return self.key_status == ACTIVE and now <= self.created_expired

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BiometricProof:
    """What a successful vault unlock proves: whose finger, which key."""

    license_hash: str
    key_digits: str


class EscrowStore:
    """In-memory escrow table, optionally mirrored to a JSON-lines file.

    New records are appended to the file; any update rewrites it atomically.
    With ``seal_key`` set, key digits are stored AES-GCM encrypted.
    """

    def __init__(self, path: Optional[os.PathLike] = None, seal_key: Optional[bytes] = None):
        self.path = Path(path) if path is not None else None
        self.seal_key = seal_key
        self._records: dict[int, EscrowRecord] = {}
        self._lock = threading.RLock()
        if self.path is not None and self.path.exists():
            for line in self.path.read_text().splitlines():
                if line.strip():
                    rec = self._decode(json.loads(line))
                    self._records[rec.escrow_id] = rec

    # -- persistence --

    def _encode(self, rec: EscrowRecord) -> dict:
        data = rec.to_dict()
        if self.seal_key is not None:
            from cryptography.hazmat.primitives.ciphers.aead import AESGCM

            nonce = os.urandom(12)
            ct = AESGCM(self.seal_key).encrypt(nonce, rec.key_digits.encode(), str(rec.escrow_id).encode())
            data["key_digits"] = "sealed:" + (nonce + ct).hex()
        return data

    def _decode(self, data: dict) -> EscrowRecord:
        digits = data["key_digits"]
        if digits.startswith("sealed:"):
            if self.seal_key is None:
                raise ValueError("store is sealed; a seal key is required")
            from cryptography.hazmat.primitives.ciphers.aead import AESGCM

            blob = bytes.fromhex(digits[len("sealed:"):])
            data = dict(data, key_digits=AESGCM(self.seal_key).decrypt(
                blob[:12], blob[12:], str(data["escrow_id"]).encode()).decode())
        return EscrowRecord(**data)

    def _line(self, rec: EscrowRecord) -> str:
        return json.dumps(self._encode(rec), sort_keys=True, separators=(",", ":")) + "\n"

    def _append(self, rec: EscrowRecord) -> None:
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(self._line(rec))

    def _rewrite(self) -> None:
        if self.path is None:
            return
        fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=self.path.name, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            for rec in self:
                fh.write(self._line(rec))
        os.replace(tmp, self.path)

    # -- access --

    def __iter__(self) -> Iterator[EscrowRecord]:
        return iter(sorted(self._records.values(), key=lambda r: r.escrow_id))

    def __len__(self) -> int:
        return len(self._records)

    def get(self, escrow_id: int) -> EscrowRecord:
        try:
            return self._records[escrow_id]
        except KeyError:
            raise NotFound(f"no escrow record {escrow_id}") from None

    def _next_id(self) -> int:
        return max(self._records, default=0) + 1

    def _put(self, rec: EscrowRecord) -> EscrowRecord:
        self._records[rec.escrow_id] = rec
        self._rewrite()
        return rec


def deposit_key(
    store: EscrowStore,
    patient_no: str,
    timed_key: TimedKey,
    license_hash: str,
    hospital_id: str,
    now: Optional[float] = None,
) -> EscrowRecord:
    """Place a patient's key in escrow for one physician.

    Records that have lapsed by ``now`` (default: the key's activation
    time) are expired first, so a lapsed key never blocks a fresh deposit.
    """
    with store._lock:
        expire_sweep(store, timed_key.active_from if now is None else now)
        if query_active(store, patient_no, license_hash) is not None:
            raise ActiveKeyExists(f"physician already holds an active key for patient {patient_no}")
        rec = EscrowRecord(
            escrow_id=store._next_id(),
            patient_no=patient_no,
            key_digits=timed_key.digits,
            license_hash=license_hash,
            created_now=timed_key.created_at,
            created_expired=timed_key.expires_at,
            hospital_id=hospital_id,
        )
        store._records[rec.escrow_id] = rec
        store._append(rec)
        return rec


def enroll_key(store: EscrowStore, escrow_id: int, proof: BiometricProof, now: float) -> EscrowRecord:
    with store._lock:
        rec = store.get(escrow_id)
        if not rec.usable(now):
            raise KeyExpired(f"escrow record {escrow_id} is expired")
        if proof.license_hash != rec.license_hash:
            raise IdentityMismatch("biometric identity does not match the key holder")
        if proof.key_digits != rec.key_digits:
            raise IdentityMismatch("biometric proof was issued for a different key")
        if rec.enrolled == ENROLLED:
            return rec
        return store._put(replace(rec, enrolled=ENROLLED))


def expire_sweep(store: EscrowStore, now: float) -> int:
    with store._lock:
        lapsed = [r for r in store if r.key_status == ACTIVE and r.created_expired < now]
        for r in lapsed:
            store._records[r.escrow_id] = replace(r, key_status=EXPIRED)
        if lapsed:
            store._rewrite()
        return len(lapsed)


def revoke_key(store: EscrowStore, patient_no: str, escrow_id: int) -> EscrowRecord:
    with store._lock:
        rec = store.get(escrow_id)
        if rec.patient_no != patient_no:
            raise NotOwner(f"record {escrow_id} does not belong to patient {patient_no}")
        if rec.key_status == EXPIRED:
            return rec
        return store._put(replace(rec, key_status=EXPIRED))


def query_active(store: EscrowStore, patient_no: str, license_hash: str) -> Optional[EscrowRecord]:
    found = [
        r for r in store
        if r.patient_no == patient_no and r.license_hash == license_hash and r.key_status == ACTIVE
    ]
    assert len(found) <= 1, "one-active-key invariant violated"
    return found[0] if found else None
