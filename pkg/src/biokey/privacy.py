"""Three-tier EHR partitioning and view resolution.

Attributes carry any combination of basic / confidential / emergency flags.
Basic values are stored in clear. Every non-basic confidential value lives
only in an AES-256-GCM block keyed by the patient's escrowed key, and every
non-basic emergency value in a second block keyed by the key bound to the
patient's iris commitment.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .audit import AuditLog, check_record_integrity, record_access_hashed, record_integrity_digest
from .commitment import Commitment, IrisCode, decommit
from .errors import DecryptFailure, KeyExpired, NotEnrolled
from .escrow import EscrowStore, hash_identifier, query_active
from .glcm import ENROLLED, binding_key

BASIC, CONFIDENTIAL, EMERGENCY = "basic", "confidential", "emergency"
SECTIONS = (BASIC, CONFIDENTIAL, EMERGENCY)


# -- catalog -----------------------------------------------------------------


@dataclass(frozen=True)
class AttributeFlags:
    basic: bool
    confidential: bool
    emergency: bool
    section: str = ""

    def __post_init__(self):
        if not (self.basic or self.confidential or self.emergency):
            raise ValueError("attribute needs at least one of basic/confidential/emergency")

    def has(self, category: str) -> bool:
        return getattr(self, category)


class AttributeCatalog(dict):
    """Mapping of attribute name to AttributeFlags."""

    @classmethod
    def from_json(cls, data: Mapping) -> "AttributeCatalog":
        return cls({name: AttributeFlags(**flags) for name, flags in data.items()})

    @classmethod
    def load(cls, path=None) -> "AttributeCatalog":
        if path is None:
            text = resources.files("biokey").joinpath("data/catalog.json").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_json(json.loads(text))

    def names(self, category: str) -> list[str]:
        return [n for n, f in self.items() if f.has(category)]

    def stored_in(self, block: str) -> list[str]:
        """Attributes whose values live in the given encrypted block."""
        return [n for n, f in self.items() if f.has(block) and not f.basic]


def default_catalog() -> AttributeCatalog:
    return AttributeCatalog.load()


# -- sealed blocks -----------------------------------------------------------


def cipher_key(key_bits: bytes) -> bytes:
    return hashlib.sha256(key_bits).digest()


def _canonical(values: Mapping[str, str]) -> bytes:
    return json.dumps(dict(values), sort_keys=True, separators=(",", ":")).encode("utf-8")


@dataclass(frozen=True)
class SealedBlock:
    ciphertext: bytes
    nonce: bytes

    def to_json(self) -> dict:
        return {"ciphertext": self.ciphertext.hex(), "nonce": self.nonce.hex()}

    @classmethod
    def from_json(cls, data: Mapping) -> "SealedBlock":
        return cls(bytes.fromhex(data["ciphertext"]), bytes.fromhex(data["nonce"]))


def seal(values: Mapping[str, str], key_bits: bytes, aad: bytes) -> SealedBlock:
    nonce = os.urandom(12)
    return SealedBlock(AESGCM(cipher_key(key_bits)).encrypt(nonce, _canonical(values), aad), nonce)


def unseal(block: SealedBlock, key_bits: bytes, aad: bytes) -> dict:
    try:
        plain = AESGCM(cipher_key(key_bits)).decrypt(block.nonce, block.ciphertext, aad)
    except InvalidTag:
        raise DecryptFailure("authentication failed: wrong or corrupted key") from None
    return json.loads(plain)


# -- records -----------------------------------------------------------------


@dataclass(frozen=True)
class EhrRecord:
    """A patient record. ``pending`` holds plaintext awaiting encryption and
    is never serialized."""

    patient_no: str
    clear: dict
    sealed: dict = field(default_factory=dict)
    pending: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_attributes(cls, patient_no: str, attributes: Mapping[str, str], catalog: AttributeCatalog) -> "EhrRecord":
        unknown = set(attributes) - set(catalog)
        if unknown:
            raise ValueError(f"attributes not in catalog: {sorted(unknown)}")
        clear = {k: v for k, v in attributes.items() if catalog[k].basic}
        pending = {
            block: {k: attributes[k] for k in catalog.stored_in(block) if k in attributes}
            for block in (CONFIDENTIAL, EMERGENCY)
        }
        return cls(patient_no, clear, {}, pending)

    def aad(self, block: str) -> bytes:
        return f"{self.patient_no}|{block}".encode("utf-8")

    def canonical_bytes(self) -> bytes:
        if any(self.pending.values()):
            raise ValueError("record still holds unencrypted values")
        body = {
            "patient_no": self.patient_no,
            "clear": self.clear,
            "sealed": {k: v.to_json() for k, v in sorted(self.sealed.items())},
        }
        return json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")

    def digest(self) -> str:
        return record_integrity_digest(self.canonical_bytes())

    def to_json(self) -> str:
        doc = json.loads(self.canonical_bytes())
        for name, block in doc["sealed"].items():
            block["digest"] = self.digest()
        doc["digest"] = self.digest()
        return json.dumps(doc, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> tuple["EhrRecord", str]:
        """Parse a record file; returns the record and the digest stored with it."""
        doc = json.loads(text)
        sealed = {k: SealedBlock.from_json(v) for k, v in doc.get("sealed", {}).items()}
        return cls(doc["patient_no"], doc["clear"], sealed), doc.get("digest", "")


def _encrypt_block(record: EhrRecord, block: str, key_bits: bytes) -> EhrRecord:
    values = record.pending.get(block, {})
    sealed = dict(record.sealed)
    sealed[block] = seal(values, key_bits, record.aad(block))
    pending = {k: v for k, v in record.pending.items() if k != block}
    return replace(record, sealed=sealed, pending=pending)


def encrypt_confidential(record: EhrRecord, key_bits: bytes) -> EhrRecord:
    return _encrypt_block(record, CONFIDENTIAL, key_bits)


def encrypt_emergency(record: EhrRecord, key_bits: bytes) -> EhrRecord:
    return _encrypt_block(record, EMERGENCY, key_bits)


def decrypt_block(record: EhrRecord, block: str, key_bits: bytes) -> dict:
    if block not in record.sealed:
        raise DecryptFailure(f"record has no {block} block")
    return unseal(record.sealed[block], key_bits, record.aad(block))


# -- access resolution -------------------------------------------------------


@dataclass(frozen=True)
class AccessContext:
    """Who is asking and what they have unlocked.

    ``unlocked_key`` is the 120-bit key released by the physician's vault;
    ``emergency_key`` is the key released by decommitting the patient's iris
    and its presence is what "patient biometric present" means.
    """

    license_hash: str = ""
    patient_no: str = ""
    authenticated: bool = True
    unlocked_key: Optional[bytes] = None
    emergency_key: Optional[bytes] = None

    @property
    def is_patient(self) -> bool:
        return bool(self.patient_no) and not self.license_hash

    @property
    def patient_biometric_present(self) -> bool:
        return self.emergency_key is not None


@dataclass
class View:
    patient_no: str
    attributes: dict
    sections_granted: list
    denied: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"patient_no": self.patient_no, "attributes": self.attributes,
             "sections_granted": self.sections_granted, "denied": self.denied},
            sort_keys=True,
        )


def _confidential_gate(record, ctx, escrow, now) -> Optional[str]:
    """None when the key may be used, else the denial reason."""
    if ctx.is_patient:
        return None
    rec = query_active(escrow, record.patient_no, ctx.license_hash)
    if rec is None or not rec.usable(now):
        return KeyExpired.__name__
    if rec.enrolled != ENROLLED:
        return NotEnrolled.__name__
    if binding_key(rec.key_digits) != ctx.unlocked_key:
        return DecryptFailure.__name__
    return None


def resolve_view(
    record: EhrRecord,
    context: AccessContext,
    catalog: AttributeCatalog,
    escrow: EscrowStore,
    log: AuditLog,
    now: float,
    stored_digest: Optional[str] = None,
) -> View:
    """Filter a record down to what the requester may see.

    Basic is always granted to an authenticated requester. Confidential
    needs an unlocked key backed by an ACTIVE, ENROLLED, unexpired escrow
    record; emergency needs the patient's biometric. Denials are reported
    per section in ``View.denied`` and never disturb other sections. One
    read entry is logged per section granted.
    """
    if not context.authenticated:
        raise PermissionError("requester is not authenticated")
    actor = context.license_hash or hash_identifier(context.patient_no)
    patient_hash = hash_identifier(record.patient_no)
    if stored_digest is not None:
        check_record_integrity(log, record.canonical_bytes(), stored_digest, actor, patient_hash, BASIC, now)

    attrs = {k: v for k, v in record.clear.items() if catalog[k].basic}
    granted = [BASIC]
    denied = {}

    if context.unlocked_key is not None:
        reason = _confidential_gate(record, context, escrow, now)
        if reason is None:
            try:
                values = decrypt_block(record, CONFIDENTIAL, context.unlocked_key)
            except DecryptFailure:
                reason = DecryptFailure.__name__
            else:
                attrs.update({k: v for k, v in values.items() if catalog[k].confidential})
                attrs.update({k: v for k, v in record.clear.items() if catalog[k].confidential})
                granted.append(CONFIDENTIAL)
        if reason is not None:
            denied[CONFIDENTIAL] = reason

    if context.patient_biometric_present:
        try:
            values = decrypt_block(record, EMERGENCY, context.emergency_key)
        except DecryptFailure:
            denied[EMERGENCY] = DecryptFailure.__name__
        else:
            attrs.update(values)
            attrs.update({k: v for k, v in record.clear.items() if catalog[k].emergency})
            granted.append(EMERGENCY)

    for section in granted:
        record_access_hashed(log, "read", actor, patient_hash, section, now)
    return View(record.patient_no, attrs, granted, denied)


def emergency_unlock(
    record: EhrRecord,
    iris_query: IrisCode,
    stored_commitment: Optional[Commitment],
    catalog: AttributeCatalog,
    log: Optional[AuditLog] = None,
    license_hash: str = "",
    now: float = 0.0,
) -> View:
    """Emergency-only view released by the patient's iris.

    Decommit failures propagate as Reject and release nothing.
    """
    if stored_commitment is None:
        raise NotEnrolled(f"no iris commitment on file for patient {record.patient_no}")
    key = decommit(iris_query, stored_commitment)
    values = decrypt_block(record, EMERGENCY, key)
    attrs = {k: v for k, v in record.clear.items() if catalog[k].emergency}
    attrs.update(values)
    if log is not None:
        record_access_hashed(log, "read", license_hash, hash_identifier(record.patient_no), EMERGENCY, now)
    return View(record.patient_no, attrs, [EMERGENCY])


def update_record(
    record: EhrRecord,
    context: AccessContext,
    updates: Mapping[str, str],
    catalog: AttributeCatalog,
    escrow: EscrowStore,
    log: AuditLog,
    now: float,
) -> EhrRecord:
    """Apply a physician's write; sealed blocks are re-encrypted under their keys.

    Writing a sealed value needs the key of the block it lives in. One write
    entry is logged per section touched.
    """
    clear = dict(record.clear)
    sealed = dict(record.sealed)
    touched = []
    block_keys = {CONFIDENTIAL: context.unlocked_key, EMERGENCY: context.emergency_key}
    for block in (CONFIDENTIAL, EMERGENCY):
        names = [k for k in updates if k in catalog.stored_in(block)]
        if not names:
            continue
        key = block_keys[block]
        if key is None:
            raise PermissionError(f"writing {block} attributes needs the {block} key")
        if block == CONFIDENTIAL:
            reason = _confidential_gate(record, context, escrow, now)
            if reason == KeyExpired.__name__:
                raise KeyExpired("escrowed key is expired")
            if reason is not None:
                raise DecryptFailure(reason)
        values = decrypt_block(record, block, key)
        values.update({k: updates[k] for k in names})
        sealed[block] = seal(values, key, record.aad(block))
        touched.append(block)
    for k, v in updates.items():
        if k not in catalog:
            raise ValueError(f"unknown attribute {k!r}")
        if catalog[k].basic:
            clear[k] = v
            if BASIC not in touched:
                touched.append(BASIC)
    actor = context.license_hash or hash_identifier(context.patient_no)
    for section in touched:
        record_access_hashed(log, "write", actor, hash_identifier(record.patient_no), section, now)
    return replace(record, clear=clear, sealed=sealed)
