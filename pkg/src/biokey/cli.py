"""``biokey`` command-line entry point.

Every command prints one JSON document on stdout; diagnostics go to
stderr. Exit codes: 0 success, 2 a rejection (the answer was "no"),
1 a fault, 64 bad usage.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import secrets
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
from filelock import FileLock

from . import __version__
from .audit import AuditLog, TagMap, describe, parse_lines, verify_chain
from .commitment import Commitment, CommitmentParams, commit, decommit, read_iris_file
from .errors import (
    ActiveKeyExists,
    BiokeyError,
    ExpiredHelper,
    IdentityMismatch,
    KeyExpired,
    MatchBelowThreshold,
    NotEnrolled,
    NotOwner,
    Reject,
)
from .escrow import BiometricProof, EscrowStore, deposit_key, enroll_key, expire_sweep, hash_identifier, revoke_key
from .glcm import DEFAULT_KEY_LEN, DEFAULT_LEVELS, GlcmParams, TimedKey, attach_validity, binding_key, generate_key, load_image
from .privacy import (
    AccessContext,
    AttributeCatalog,
    EhrRecord,
    encrypt_confidential,
    encrypt_emergency,
    resolve_view,
    update_record,
)
from .vault import DEFAULT_THRESHOLD, MinutiaeTemplate, VaultHelperData, lock_key, unlock_vault

EXIT_OK, EXIT_FAULT, EXIT_REJECT, EXIT_USAGE = 0, 1, 2, 64
REJECTIONS = (MatchBelowThreshold, Reject, KeyExpired, ExpiredHelper, IdentityMismatch, NotOwner, ActiveKeyExists)
CONFIG_ENV = "BIOKEY_CONFIG"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class CliConfig:
    escrow: str = "escrow.jsonl"
    audit: str = "audit.jsonl"
    records: str = "records"
    catalog: Optional[str] = None
    tagmap: Optional[str] = None
    commitment: dict = field(default_factory=dict)
    escrow_seal_key: Optional[str] = None
    now: Optional[float] = None

    @classmethod
    def load(cls, path: Optional[str]) -> "CliConfig":
        if not path:
            return cls()
        path = Path(path)
        data = json.loads(path.read_text())
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        # relative paths are taken relative to the config file
        for name in ("escrow", "audit", "records", "catalog", "tagmap"):
            value = getattr(cfg, name)
            if value and not Path(value).is_absolute():
                setattr(cfg, name, str(path.parent / value))
        return cfg

    def validate(self) -> None:
        for name in ("escrow", "audit"):
            parent = Path(getattr(self, name)).resolve().parent
            if not parent.is_dir():
                raise UsageError(f"{name} store directory {parent} does not exist")
        self.params()
        self.tag_map()
        self.attribute_catalog()

    def params(self) -> CommitmentParams:
        try:
            return CommitmentParams(**self.commitment)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid commitment parameters: {exc}") from None

    def tag_map(self) -> TagMap:
        return TagMap.load(self.tagmap) if self.tagmap else TagMap()

    def attribute_catalog(self) -> AttributeCatalog:
        return AttributeCatalog.load(self.catalog)

    def seal_key(self) -> Optional[bytes]:
        return bytes.fromhex(self.escrow_seal_key) if self.escrow_seal_key else None


class Session:
    """Resolved config plus per-invocation flags."""

    def __init__(self, args, cfg: CliConfig):
        self.args = args
        self.cfg = cfg
        self.dry_run = getattr(args, "dry_run", False)
        self._now = args.now if getattr(args, "now", None) is not None else cfg.now
        self._locks = contextlib.ExitStack()

    def now(self) -> float:
        return time.time() if self._now is None else float(self._now)

    def seed(self) -> int:
        if getattr(self.args, "seed", None) is not None:
            return self.args.seed
        seed = secrets.randbits(32)
        self.args.seed = seed
        print(f"biokey: drawn seed {seed}", file=sys.stderr)
        return seed

    def lock(self, path) -> None:
        if not self.dry_run:
            self._locks.enter_context(FileLock(str(path) + ".lock"))

    def escrow(self) -> EscrowStore:
        self.lock(self.cfg.escrow)
        store = EscrowStore(self.cfg.escrow, self.cfg.seal_key())
        if self.dry_run:
            store.path = None
        return store

    def audit(self) -> AuditLog:
        self.lock(self.cfg.audit)
        log = AuditLog(self.cfg.audit, self.cfg.tag_map())
        if self.dry_run:
            log.path = None
        return log

    def write(self, path, text: str) -> Optional[str]:
        if self.dry_run:
            return None
        path = Path(path)
        self.lock(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text)
        os.replace(tmp, path)
        return str(path)

    def record_paths(self, patient: str) -> tuple[Path, Path]:
        base = Path(self.cfg.records)
        return base / f"{patient}.json", base / f"{patient}.fc"

    def close(self):
        self._locks.close()


# -- helpers -----------------------------------------------------------------


def _read_key(path) -> TimedKey:
    return TimedKey.from_dict(json.loads(Path(path).read_text()))


def _read_template(path) -> MinutiaeTemplate:
    return MinutiaeTemplate.from_text(Path(path).read_text())


def _read_helper(path) -> VaultHelperData:
    return VaultHelperData.from_text(Path(path).read_text())


def _public(rec) -> dict:
    d = rec.to_dict()
    d.pop("key_digits")
    return d


def _unlock(args) -> str:
    return unlock_vault(_read_template(args.template), _read_helper(args.helper), args.threshold).to_digits()


# -- commands ----------------------------------------------------------------


def cmd_keygen(s: Session):
    a = s.args
    image = load_image(a.image, a.levels)
    digits = generate_key(image, GlcmParams(a.distance, a.angle, a.levels), a.key_len)
    key = attach_validity(digits, s.now(), a.ttl)
    out = key.to_dict()
    if a.out:
        out["written"] = s.write(a.out, json.dumps(key.to_dict(), indent=1) + "\n")
    return out


def cmd_vault_lock(s: Session):
    a = s.args
    if a.digits:
        digits = a.digits
    elif a.key.isdigit() and not Path(a.key).exists():
        digits = a.key
    else:
        digits = _read_key(a.key).digits
    helper = lock_key(_read_template(a.template), digits, s.seed())
    return {"seed": a.seed, "n": helper.n, "width": helper.width,
            "written": s.write(a.out, helper.to_text())}


def cmd_vault_unlock(s: Session):
    return {"result": "accept", "key": _unlock(s.args)}


def cmd_commit(s: Session):
    a = s.args
    params = s.cfg.params()
    key = bytes.fromhex(a.key_hex) if a.key_hex else np.random.default_rng(s.seed()).bytes(params.key_bits // 8)
    c = commit(read_iris_file(a.iris), key, params, s.now())
    return {"key": key.hex(), "key_digest": c.key_digest, "seed": a.seed,
            "written": s.write(a.out, c.to_text())}


def cmd_decommit(s: Session):
    a = s.args
    c = Commitment.from_text(Path(a.commitment).read_text())
    return {"result": "accept", "key": decommit(read_iris_file(a.iris), c).hex()}


def cmd_record_create(s: Session):
    a = s.args
    catalog = s.cfg.attribute_catalog()
    attrs = json.loads(Path(a.attributes).read_text())
    params = s.cfg.params()
    emergency_key = np.random.default_rng(s.seed()).bytes(params.key_bits // 8)
    record = EhrRecord.from_attributes(a.patient, attrs, catalog)
    record = encrypt_confidential(record, _read_key(a.key).binding_key())
    record = encrypt_emergency(record, emergency_key)
    c = commit(read_iris_file(a.iris), emergency_key, params, s.now())
    rec_path, fc_path = s.record_paths(a.patient)
    if not s.dry_run:
        rec_path.parent.mkdir(parents=True, exist_ok=True)
    return {"patient_no": a.patient, "digest": record.digest(), "seed": a.seed,
            "written": [s.write(rec_path, record.to_json() + "\n"), s.write(fc_path, c.to_text())]}


def _context(s: Session, want_key: bool, want_bio: bool, as_patient: bool, record: EhrRecord,
             denied: Optional[dict] = None) -> AccessContext:
    """Build the requester context. With ``denied`` given, a failed vault or
    iris unlock is recorded there instead of aborting the request."""
    a = s.args
    unlocked = emergency = None
    if want_key:
        try:
            unlocked = binding_key(_unlock(a))
        except REJECTIONS as exc:
            if denied is None:
                raise
            denied["confidential"] = getattr(exc, "reason", None) or type(exc).__name__
    if want_bio:
        fc_path = Path(a.commitment) if a.commitment else s.record_paths(record.patient_no)[1]
        c = Commitment.from_text(fc_path.read_text()) if fc_path.exists() else None
        if c is None:
            raise NotEnrolled(f"no iris commitment on file for patient {record.patient_no}")
        try:
            emergency = decommit(read_iris_file(a.iris), c)
        except Reject as exc:
            if denied is None:
                raise
            denied["emergency"] = exc.reason
    if as_patient:
        return AccessContext(patient_no=record.patient_no, unlocked_key=unlocked, emergency_key=emergency)
    if not a.license:
        raise UsageError("--license is required unless viewing as the patient")
    return AccessContext(license_hash=hash_identifier(a.license), unlocked_key=unlocked, emergency_key=emergency)


def _load_record(s: Session) -> tuple[EhrRecord, str]:
    a = s.args
    path = Path(a.record) if a.record else s.record_paths(a.patient)[0]
    return EhrRecord.from_json(path.read_text())


def cmd_view(s: Session):
    a = s.args
    modes = set(a.as_ or ["login"])
    record, digest = _load_record(s)
    early: dict = {}
    ctx = _context(s, "key" in modes, "biometric" in modes, "patient" in modes, record, early)
    escrow, log = s.escrow(), s.audit()
    view = resolve_view(record, ctx, s.cfg.attribute_catalog(), escrow, log, s.now(), digest or None)
    view.denied.update(early)
    out = json.loads(view.to_json())
    out["result"] = "reject" if view.denied else "accept"
    return out, (EXIT_REJECT if view.denied else EXIT_OK)


def cmd_record_update(s: Session):
    a = s.args
    updates = {}
    for item in a.set:
        name, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects name=value, got {item!r}")
        updates[name] = value
    record, _ = _load_record(s)
    ctx = _context(s, bool(a.helper), bool(a.iris), False, record)
    escrow, log = s.escrow(), s.audit()
    record = update_record(record, ctx, updates, s.cfg.attribute_catalog(), escrow, log, s.now())
    rec_path = Path(a.record) if a.record else s.record_paths(record.patient_no)[0]
    return {"patient_no": record.patient_no, "digest": record.digest(), "updated": sorted(updates),
            "written": s.write(rec_path, record.to_json() + "\n")}


def cmd_escrow_deposit(s: Session):
    a = s.args
    rec = deposit_key(s.escrow(), a.patient, _read_key(a.key), hash_identifier(a.license), a.hospital, s.now())
    return _public(rec)


def cmd_escrow_enroll(s: Session):
    a = s.args
    digits = _unlock(a)
    store = s.escrow()
    rec = enroll_key(store, a.id, BiometricProof(hash_identifier(a.license), digits), s.now())
    return _public(rec)


def cmd_escrow_revoke(s: Session):
    return _public(revoke_key(s.escrow(), s.args.patient, s.args.id))


def cmd_escrow_sweep(s: Session):
    return {"expired": expire_sweep(s.escrow(), s.now())}


def cmd_escrow_list(s: Session):
    store = s.escrow()
    rows = [_public(r) for r in store if s.args.patient in (None, r.patient_no)]
    return {"records": rows}


def cmd_audit_verify(s: Session):
    path = Path(s.args.log or s.cfg.audit)
    head_path = path.with_name(path.name + ".head")
    head = json.loads(head_path.read_text()) if head_path.exists() else None
    entries = parse_lines(path.read_bytes()) if path.exists() else []
    first = verify_chain(entries, head)
    return {"entries": len(entries), "first_tampered": first}, (EXIT_OK if first is None else EXIT_REJECT)


def cmd_audit_show(s: Session):
    path = Path(s.args.log or s.cfg.audit)
    tagmap = TagMap.load(s.args.tagmap) if s.args.tagmap else s.cfg.tag_map()
    entries = parse_lines(path.read_bytes()) if path.exists() else []
    return {"entries": [describe(e, tagmap) if e is not None else None for e in entries]}


def cmd_eval(s: Session):
    from .synth import NoiseModel, gen_population, run_far_frr

    a = s.args
    noise = NoiseModel.from_json(a.noise or "{}")
    seed = s.seed()
    kind = "fingerprint" if a.system == "vault" else "iris"
    params = s.cfg.params()
    population = gen_population(kind, a.size, seed, params.n_bits)
    report = run_far_frr(a.system, population, noise, a.threshold, seed, a.impostor_limit, params)
    if a.out:
        s.write(a.out, report.to_json() + "\n")
    if a.csv:
        s.write(a.csv, report.trials_csv())
    out = report.to_dict()
    out.pop("trials")
    return out


def cmd_ecc_selftest(s: Session):
    from .ecc import selftest

    report = selftest(seed=s.seed(), rs_trials=s.args.rs_trials, quick=s.args.quick)
    report["seed"] = s.args.seed
    return report, (EXIT_OK if report["ok"] else EXIT_FAULT)


def cmd_demo(s: Session):
    from .demo import DemoFailure, run_demo

    try:
        transcript = run_demo(s.args.workdir, seed=s.seed(), now=s.now() if s._now is not None else None)
    except DemoFailure as exc:
        print(f"biokey: demo step failed: {exc}", file=sys.stderr)
        return {"ok": False, "failed": exc.step, "diff": exc.diff}, EXIT_FAULT
    return {"ok": True, "seed": s.args.seed, "steps": transcript}


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")
    common.add_argument("--now", type=float, help="override the clock (epoch seconds)")
    common.add_argument("--dry-run", action="store_true", help="compute but write nothing")
    common.add_argument("--seed", type=int, help="seed for any randomness; drawn and printed if absent")

    p = _Parser(prog="biokey", description="Biometric key management for EHR access.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def leaf(parent, name, func, help_):
        q = parent.add_parser(name, parents=[common], help=help_)
        q.set_defaults(func=func)
        return q

    def unlock_args(q, required=True):
        q.add_argument("--template", required=required, help="query minutiae file")
        q.add_argument("--helper", required=required, help="vault helper file")
        q.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)

    q = leaf(sub, "keygen", cmd_keygen, "derive a timed key from a texture image")
    q.add_argument("--image", required=True)
    q.add_argument("--distance", type=int, default=1)
    q.add_argument("--angle", type=int, default=0, choices=(0, 45, 90, 135))
    q.add_argument("--levels", type=int, default=DEFAULT_LEVELS)
    q.add_argument("--key-len", type=int, default=DEFAULT_KEY_LEN)
    q.add_argument("--ttl", type=float, required=True, help="validity in seconds")
    q.add_argument("--out")

    vault = sub.add_parser("vault", help="fingerprint fuzzy vault").add_subparsers(
        dest="action", required=True, parser_class=_Parser)
    q = leaf(vault, "lock", cmd_vault_lock, "bind key digits to a template")
    q.add_argument("--template", required=True)
    g = q.add_mutually_exclusive_group(required=True)
    g.add_argument("--key", help="TimedKey JSON file, or the key digits themselves")
    g.add_argument("--digits")
    q.add_argument("--out", required=True)
    unlock_args(leaf(vault, "unlock", cmd_vault_unlock, "release key digits"))

    q = leaf(sub, "commit", cmd_commit, "bind a key to an iris code")
    q.add_argument("--iris", required=True)
    q.add_argument("--key-hex", "--key-bits", dest="key_hex", help="key as hex (random when absent)")
    q.add_argument("--out", required=True)
    q = leaf(sub, "decommit", cmd_decommit, "release a key with an iris code")
    q.add_argument("--iris", required=True)
    q.add_argument("--commitment", required=True)

    record = sub.add_parser("record", help="patient records").add_subparsers(
        dest="action", required=True, parser_class=_Parser)
    q = leaf(record, "create", cmd_record_create, "encrypt and store a new record")
    q.add_argument("--patient", required=True)
    q.add_argument("--attributes", required=True, help="JSON attribute map")
    q.add_argument("--key", required=True, help="patient TimedKey JSON")
    q.add_argument("--iris", required=True, help="patient iris code")
    q = leaf(record, "update", cmd_record_update, "write attributes as a physician")
    g = q.add_mutually_exclusive_group(required=True)
    g.add_argument("--record")
    g.add_argument("--patient")
    q.add_argument("--license", required=True)
    q.add_argument("--set", action="append", required=True, metavar="NAME=VALUE")
    unlock_args(q, required=False)
    q.add_argument("--iris")
    q.add_argument("--commitment")

    escrow = sub.add_parser("escrow", help="key escrow").add_subparsers(
        dest="action", required=True, parser_class=_Parser)
    q = leaf(escrow, "deposit", cmd_escrow_deposit, "escrow a key for one physician")
    q.add_argument("--patient", required=True)
    q.add_argument("--key", required=True)
    q.add_argument("--license", required=True)
    q.add_argument("--hospital", required=True)
    q = leaf(escrow, "enroll", cmd_escrow_enroll, "enroll an escrowed key with a fingerprint")
    q.add_argument("--id", type=int, required=True)
    q.add_argument("--license", required=True)
    unlock_args(q)
    q = leaf(escrow, "revoke", cmd_escrow_revoke, "patient revokes a key")
    q.add_argument("--patient", required=True)
    q.add_argument("--id", type=int, required=True)
    leaf(escrow, "sweep", cmd_escrow_sweep, "expire lapsed keys")
    q = leaf(escrow, "list", cmd_escrow_list, "list escrow records")
    q.add_argument("--patient")

    q = leaf(sub, "view", cmd_view, "resolve a record view")
    g = q.add_mutually_exclusive_group(required=True)
    g.add_argument("--record")
    g.add_argument("--patient")
    q.add_argument("--as", dest="as_", action="append", choices=("login", "key", "biometric", "patient"))
    q.add_argument("--license")
    unlock_args(q, required=False)
    q.add_argument("--iris")
    q.add_argument("--commitment")

    audit = sub.add_parser("audit", help="accountability log").add_subparsers(
        dest="action", required=True, parser_class=_Parser)
    q = leaf(audit, "verify", cmd_audit_verify, "check the hash chain")
    q.add_argument("--log")
    q = leaf(audit, "show", cmd_audit_show, "interpret tags for an authorized viewer")
    q.add_argument("--log")
    q.add_argument("--tagmap")

    q = leaf(sub, "eval", cmd_eval, "FAR/FRR and timing on a synthetic population")
    q.add_argument("--system", required=True, choices=("vault", "commitment"))
    q.add_argument("--size", type=int, default=200)
    q.add_argument("--noise", help="NoiseModel as JSON")
    q.add_argument("--threshold", type=float)
    q.add_argument("--impostor-limit", type=int)
    q.add_argument("--out")
    q.add_argument("--csv")

    ecc = sub.add_parser("ecc", help="error-correcting codes").add_subparsers(
        dest="action", required=True, parser_class=_Parser)
    q = leaf(ecc, "selftest", cmd_ecc_selftest, "field, Reed-Solomon and Hadamard checks")
    q.add_argument("--rs-trials", type=int, default=10000)
    q.add_argument("--quick", action="store_true", help="sample RS(7,3) messages instead of all 512")

    q = leaf(sub, "demo", cmd_demo, "scripted end-to-end scenario")
    q.add_argument("--workdir", help="directory for store files (default: in memory)")
    return p


def _check_view_args(args) -> None:
    modes = set(getattr(args, "as_", None) or [])
    if "key" in modes and not (args.template and args.helper):
        raise UsageError("--as key needs --template and --helper")
    if "biometric" in modes and not args.iris:
        raise UsageError("--as biometric needs --iris")


def main(argv=None) -> int:
    session = None
    try:
        args = build_parser().parse_args(argv)
        if args.func is cmd_view:
            _check_view_args(args)
        cfg = CliConfig.load(args.config or os.environ.get(CONFIG_ENV))
        cfg.validate()
        session = Session(args, cfg)
        result = args.func(session)
        payload, code = result if isinstance(result, tuple) else (result, EXIT_OK)
    except UsageError as exc:
        print(f"biokey: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except REJECTIONS as exc:
        reason = getattr(exc, "reason", None) or type(exc).__name__
        print(f"biokey: rejected: {exc}", file=sys.stderr)
        payload, code = {"result": "reject", "reason": reason, "detail": str(exc)}, EXIT_REJECT
    except (BiokeyError, OSError, ValueError, KeyError, PermissionError) as exc:
        print(f"biokey: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        payload, code = {"result": "error", "error": type(exc).__name__, "detail": str(exc)}, EXIT_FAULT
    finally:
        if session is not None:
            session.close()
    print(json.dumps(payload, sort_keys=True, default=str))
    return code


if __name__ == "__main__":
    sys.exit(main())
