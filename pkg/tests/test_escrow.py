import json

import pytest
from hypothesis import settings
from hypothesis import strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, rule

from biokey.errors import ActiveKeyExists, IdentityMismatch, KeyExpired, NotFound, NotOwner
from biokey.escrow import (
    BiometricProof,
    EscrowStore,
    deposit_key,
    enroll_key,
    expire_sweep,
    hash_identifier,
    query_active,
    revoke_key,
)
from biokey.glcm import ACTIVE, ENROLLED, EXPIRED, UNENROLLED, attach_validity

T0 = 1_000_000.0
D1, D2 = hash_identifier("MDCN-1001"), hash_identifier("MDCN-2002")


def key(digits="123456789012345", ttl=3600, t0=T0):
    return attach_validity(digits, t0, ttl)


def test_first_deposit():
    store = EscrowStore()
    rec = deposit_key(store, "P1", key(), D1, "H1", T0)
    assert (rec.key_status, rec.enrolled) == (ACTIVE, UNENROLLED)
    assert rec.escrow_id == 1 and rec.created_expired == T0 + 3600
    assert query_active(store, "P1", D1) == rec


def test_one_active_key_per_physician():
    store = EscrowStore()
    deposit_key(store, "P1", key(), D1, "H1", T0)
    with pytest.raises(ActiveKeyExists):
        deposit_key(store, "P1", key("999999999999999"), D1, "H1", T0 + 10)
    a = query_active(store, "P1", D1)
    b = deposit_key(store, "P1", key("999999999999999"), D2, "H1", T0 + 10)
    assert query_active(store, "P1", D2) == b != a
    assert query_active(store, "P2", D1) is None


def test_lapsed_key_does_not_block_deposit():
    store = EscrowStore()
    deposit_key(store, "P1", key(ttl=10), D1, "H1", T0)
    rec = deposit_key(store, "P1", key(t0=T0 + 20), D1, "H1", T0 + 20)
    assert rec.escrow_id == 2
    assert store.get(1).key_status == EXPIRED


def test_enroll():
    store = EscrowStore()
    rec = deposit_key(store, "P1", key(), D1, "H1", T0)
    with pytest.raises(IdentityMismatch):
        enroll_key(store, rec.escrow_id, BiometricProof(D2, rec.key_digits), T0 + 1)
    with pytest.raises(IdentityMismatch):
        enroll_key(store, rec.escrow_id, BiometricProof(D1, "000000000000000"), T0 + 1)
    assert store.get(rec.escrow_id).enrolled == UNENROLLED
    assert enroll_key(store, rec.escrow_id, BiometricProof(D1, rec.key_digits), T0 + 1).enrolled == ENROLLED
    with pytest.raises(NotFound):
        enroll_key(store, 99, BiometricProof(D1, rec.key_digits), T0)


def test_enroll_after_expiry():
    store = EscrowStore()
    rec = deposit_key(store, "P1", key(ttl=60), D1, "H1", T0)
    with pytest.raises(KeyExpired):
        enroll_key(store, rec.escrow_id, BiometricProof(D1, rec.key_digits), T0 + 61)


def test_sweep_boundary():
    store = EscrowStore()
    rec = deposit_key(store, "P1", key(ttl=100), D1, "H1", T0)
    t = rec.created_expired
    assert expire_sweep(store, t - 1) == 0
    assert expire_sweep(store, t) == 0
    assert query_active(store, "P1", D1) == rec
    assert expire_sweep(store, t + 1) == 1
    assert store.get(rec.escrow_id).key_status == EXPIRED
    assert query_active(store, "P1", D1) is None
    assert expire_sweep(store, t + 2) == 0


def test_revoke():
    store = EscrowStore()
    rec = deposit_key(store, "P1", key(), D1, "H1", T0)
    with pytest.raises(NotOwner):
        revoke_key(store, "P2", rec.escrow_id)
    with pytest.raises(NotFound):
        revoke_key(store, "P1", 42)
    assert revoke_key(store, "P1", rec.escrow_id).key_status == EXPIRED
    assert not store.get(rec.escrow_id).usable(T0 + 1)
    with pytest.raises(KeyExpired):
        enroll_key(store, rec.escrow_id, BiometricProof(D1, rec.key_digits), T0 + 1)


def test_both_expired_status_pairs_reachable():
    store = EscrowStore()
    a = deposit_key(store, "P1", key(ttl=50), D1, "H1", T0)
    deposit_key(store, "P1", key(ttl=50), D2, "H1", T0)
    enroll_key(store, a.escrow_id, BiometricProof(D1, a.key_digits), T0 + 1)
    expire_sweep(store, T0 + 100)
    pairs = {(r.key_status, r.enrolled) for r in store}
    assert pairs == {(EXPIRED, ENROLLED), (EXPIRED, UNENROLLED)}
    assert len(store) == 2  # expired rows are archived, not deleted


def test_file_store_round_trip(tmp_path):
    path = tmp_path / "escrow.jsonl"
    store = EscrowStore(path)
    a = deposit_key(store, "P1", key(), D1, "H1", T0)
    deposit_key(store, "P2", key(), D1, "H1", T0)
    enroll_key(store, a.escrow_id, BiometricProof(D1, a.key_digits), T0)
    lines = path.read_text().splitlines()
    assert len(lines) == 2 and all(json.loads(line) for line in lines)
    assert list(EscrowStore(path)) == list(store)
    text = path.read_text()
    assert "MDCN-1001" not in text and D1 in text


def test_sealed_store(tmp_path):
    path = tmp_path / "sealed.jsonl"
    seal = bytes(range(32))
    store = EscrowStore(path, seal_key=seal)
    rec = deposit_key(store, "P1", key("314159265358979"), D1, "H1", T0)
    assert "314159265358979" not in path.read_text()
    assert EscrowStore(path, seal_key=seal).get(rec.escrow_id) == rec
    with pytest.raises(ValueError):
        EscrowStore(path)


PATIENTS = ["P1", "P2", "P3"]
LICENSES = [hash_identifier(f"MDCN-{i}") for i in range(3)]


class EscrowMachine(RuleBasedStateMachine):
    def __init__(self):
        super().__init__()
        self.store = EscrowStore()
        self.now = T0
        self.history = {}

    @rule(dt=st.integers(0, 200))
    def tick(self, dt):
        self.now += dt

    @rule(p=st.sampled_from(PATIENTS), d=st.sampled_from(LICENSES), ttl=st.integers(1, 300))
    def deposit(self, p, d, ttl):
        held = query_active(self.store, p, d)
        try:
            deposit_key(self.store, p, key(ttl=ttl, t0=self.now), d, "H1", self.now)
        except ActiveKeyExists:
            assert held is not None and held.created_expired >= self.now

    @rule(i=st.integers(1, 40), own=st.booleans())
    def enroll(self, i, own):
        if i not in self.store._records:
            return
        rec = self.store.get(i)
        proof = BiometricProof(rec.license_hash if own else "x", rec.key_digits)
        try:
            enroll_key(self.store, i, proof, self.now)
        except KeyExpired:
            assert not rec.usable(self.now)
        except IdentityMismatch:
            assert not own

    @rule()
    def sweep(self):
        expire_sweep(self.store, self.now)

    @rule(i=st.integers(1, 40), p=st.sampled_from(PATIENTS))
    def revoke(self, i, p):
        try:
            revoke_key(self.store, p, i)
        except (NotFound, NotOwner):
            pass

    @invariant()
    def one_active_key(self):
        seen = set()
        for r in self.store:
            if r.key_status == ACTIVE:
                pair = (r.patient_no, r.license_hash)
                assert pair not in seen
                seen.add(pair)

    @invariant()
    def monotone_transitions(self):
        for r in self.store:
            before = self.history.get(r.escrow_id)
            if before is not None:
                assert not (before.key_status == EXPIRED and r.key_status == ACTIVE)
                assert not (before.enrolled == ENROLLED and r.enrolled == UNENROLLED)
                if r.enrolled != before.enrolled:
                    assert before.key_status == ACTIVE
            self.history[r.escrow_id] = r


TestEscrowMachine = EscrowMachine.TestCase
TestEscrowMachine.settings = settings(max_examples=150, stateful_step_count=40, deadline=None)
