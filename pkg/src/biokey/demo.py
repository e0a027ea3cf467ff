"""Scripted end-to-end run over fresh stores.

Each step states the outcome it expects and records what it observed; the
first deviation aborts with a diff. With a fixed clock and seed the
transcript is identical across runs.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from .audit import READ, WRITE, AuditLog
from .commitment import DEFAULT_PARAMS, commit
from .errors import BiokeyError, IdentityMismatch, MatchBelowThreshold, Reject
from .escrow import BiometricProof, EscrowStore, deposit_key, enroll_key, expire_sweep, hash_identifier
from .glcm import GlcmParams, GrayImage, attach_validity, binding_key, generate_key
from .privacy import (
    AccessContext,
    EhrRecord,
    default_catalog,
    emergency_unlock,
    encrypt_confidential,
    encrypt_emergency,
    resolve_view,
    update_record,
)
from .synth import NoiseModel, gen_population, perturb
from .vault import lock_key, unlock_key

DEMO_EPOCH = 1_700_000_000.0
KEY_TTL = 3600.0
PATIENT = "P-0001"
PHYSICIAN, INSIDER = "MDCN-1001", "MDCN-2002"

PATIENT_ATTRIBUTES = {
    "Firstname": "Ada",
    "Lastname": "Okafor",
    "DOB": "1984-03-12",
    "Gender": "F",
    "Religion": "None",
    "Genotype": "AS",
    "HIV/AIDS": "Positive",
    "Blood group": "O+",
    "Hepatitis B": "Negative",
    "Hypertension": "Yes",
    "Depressive illness": "Mild, treated",
    "Parity": "G2P1",
}


class DemoFailure(BiokeyError):
    def __init__(self, step: str, diff: list):
        super().__init__(f"{step}: " + "; ".join(diff))
        self.step = step
        self.diff = diff


class _Transcript(list):
    def check(self, step: str, expected: dict, observed: dict) -> None:
        diff = [
            f"{k}: expected {v!r}, observed {observed.get(k)!r}"
            for k, v in expected.items()
            if observed.get(k) != v
        ]
        self.append({"step": step, "expected": expected, "observed": observed, "ok": not diff})
        if diff:
            raise DemoFailure(step, diff)


def _attempt(fn):
    """Run ``fn``; return the error class name on a biokey error, else None."""
    try:
        fn()
    except BiokeyError as exc:
        return getattr(exc, "reason", None) or type(exc).__name__
    return None


def run_demo(workdir: Optional[str] = None, seed: int = 0, now: Optional[float] = None) -> list:
    now = DEMO_EPOCH if now is None else now
    rng = np.random.default_rng(seed)
    base = Path(workdir) if workdir else None
    if base is not None:
        base.mkdir(parents=True, exist_ok=True)
        for name in ("escrow.jsonl", "audit.jsonl", "audit.jsonl.head"):
            if (base / name).exists():
                raise DemoFailure("setup", [f"{base / name} already exists; the demo needs empty stores"])
    escrow = EscrowStore(base / "escrow.jsonl" if base else None)
    log = AuditLog(base / "audit.jsonl" if base else None)
    catalog = default_catalog()
    t = _Transcript()
    doctor, insider = hash_identifier(PHYSICIAN), hash_identifier(INSIDER)

    # patient key from a texture image, iris commitment for the emergency key
    image = GrayImage(rng.integers(0, 32, (64, 64)), 32)
    timed = attach_validity(generate_key(image, GlcmParams(1, 0, 32)), now, KEY_TTL)
    fingers = gen_population("fingerprint", 2, int(rng.integers(2**31)))
    iris = gen_population("iris", 2, int(rng.integers(2**31)))
    emergency_key = rng.bytes(DEFAULT_PARAMS.key_bits // 8)
    stored_commitment = commit(iris[0], emergency_key, now=now)
    record = EhrRecord.from_attributes(PATIENT, PATIENT_ATTRIBUTES, catalog)
    record = encrypt_emergency(encrypt_confidential(record, timed.binding_key()), emergency_key)
    if base is not None:
        (base / f"{PATIENT}.json").write_text(record.to_json() + "\n")

    # 1. login alone shows basic data: genotype yes, HIV status no
    view = resolve_view(record, AccessContext(license_hash=doctor), catalog, escrow, log, now)
    t.check("basic_view",
            {"sections": ["basic"], "Genotype": "AS", "HIV/AIDS": None},
            {"sections": view.sections_granted, "Genotype": view.attributes.get("Genotype"),
             "HIV/AIDS": view.attributes.get("HIV/AIDS")})

    # 2. deposit, enroll with the physician's own finger, then view confidential
    rec = deposit_key(escrow, PATIENT, timed, doctor, "H-01", now)
    helper = lock_key(fingers[0], timed.digits, int(rng.integers(2**31)))
    capture = perturb(fingers[0], NoiseModel(sigma_xy=1.0, sigma_theta=2.0, drop_rate=0.05),
                      int(rng.integers(2**31)))
    released = unlock_key(capture, helper)
    rec = enroll_key(escrow, rec.escrow_id, BiometricProof(doctor, released), now + 60)
    view = resolve_view(record, AccessContext(license_hash=doctor, unlocked_key=binding_key(released)),
                        catalog, escrow, log, now + 120)
    t.check("confidential_view",
            {"status": ["ACTIVE", "ENROLLED"], "sections": ["basic", "confidential"],
             "HIV/AIDS": "Positive", "Parity": "G2P1"},
            {"status": [rec.key_status, rec.enrolled], "sections": view.sections_granted,
             "HIV/AIDS": view.attributes.get("HIV/AIDS"), "Parity": view.attributes.get("Parity")})

    # 3. an insider can neither unlock the vault nor enroll the key
    insider_capture = fingers[1]
    unlock_reason = _attempt(lambda: unlock_key(insider_capture, helper))
    enroll_reason = _attempt(lambda: enroll_key(escrow, rec.escrow_id, BiometricProof(insider, timed.digits), now + 180))
    view = resolve_view(record, AccessContext(license_hash=insider), catalog, escrow, log, now + 180)
    insider_rows = [e for e in log.entries if e.license_hash == insider]
    t.check("insider_rejected",
            {"unlock": MatchBelowThreshold.__name__, "enroll": IdentityMismatch.__name__,
             "sections": ["basic"], "HIV/AIDS": None, "insider_reads": [log.tagmap.tag("basic")]},
            {"unlock": unlock_reason, "enroll": enroll_reason, "sections": view.sections_granted,
             "HIV/AIDS": view.attributes.get("HIV/AIDS"),
             "insider_reads": [e.rec_type_no for e in insider_rows if e.operation_no == READ]})

    # 4. emergency: the patient's iris releases the emergency set only
    query = perturb(iris[0], NoiseModel(flip_probability=0.05), int(rng.integers(2**31)))
    view = emergency_unlock(record, query, stored_commitment, catalog, log, doctor, now + 240)
    impostor_reason = _attempt(lambda: emergency_unlock(record, iris[1], stored_commitment, catalog))
    t.check("emergency_unlock",
            {"sections": ["emergency"], "Blood group": "O+", "HIV/AIDS": "Positive",
             "Genotype": "AS", "Depressive illness": None, "impostor_rejected": True},
            {"sections": view.sections_granted, "Blood group": view.attributes.get("Blood group"),
             "HIV/AIDS": view.attributes.get("HIV/AIDS"), "Genotype": view.attributes.get("Genotype"),
             "Depressive illness": view.attributes.get("Depressive illness"),
             "impostor_rejected": impostor_reason in Reject.REASONS, "impostor_reason": impostor_reason})

    # 5. a physician write is signed into the chained log
    before = len(log)
    ctx = AccessContext(license_hash=doctor, unlocked_key=binding_key(released))
    record = update_record(record, ctx, {"Depressive illness": "Remission", "Diabetes": "Type 2"},
                           catalog, escrow, log, now + 300)
    written = [e for e in log.entries[before:] if e.operation_no == WRITE]
    view = resolve_view(record, ctx, catalog, escrow, log, now + 360)
    t.check("write_audited",
            {"writes": sorted([log.tagmap.tag("basic"), log.tagmap.tag("confidential")]),
             "signed_by_physician": True, "Depressive illness": "Remission", "chain": None},
            {"writes": sorted(e.rec_type_no for e in written),
             "signed_by_physician": all(e.license_hash == doctor for e in written),
             "Depressive illness": view.attributes.get("Depressive illness"), "chain": log.verify()})

    # 6. once the key lapses the confidential section closes again
    later = now + KEY_TTL + 1
    expired = expire_sweep(escrow, later)
    view = resolve_view(record, ctx, catalog, escrow, log, later)
    t.check("key_expired",
            {"swept": 1, "sections": ["basic"], "denied": {"confidential": "KeyExpired"}, "HIV/AIDS": None},
            {"swept": expired, "sections": view.sections_granted, "denied": view.denied,
             "HIV/AIDS": view.attributes.get("HIV/AIDS")})

    if base is not None:
        (base / f"{PATIENT}.json").write_text(record.to_json() + "\n")
    return list(t)
