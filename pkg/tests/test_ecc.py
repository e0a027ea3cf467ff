import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biokey.ecc import (
    PRIMITIVE_POLYNOMIALS,
    GaloisField,
    HadamardCode,
    ReedSolomonCode,
    fwht,
    hadamard_decode,
    hadamard_encode,
    is_irreducible,
    rs_decode,
    rs_encode,
    selftest,
)
from biokey.ecc.selftest import check_field, hadamard_exhaustive, hadamard_random, rs_random
from biokey.errors import LengthMismatch, MessageOutOfRange, SymbolOutOfField

RS73 = ReedSolomonCode.over(3, 7, 3)
RS3220 = ReedSolomonCode.over(7, 32, 20)


def clmul_mod(a, b, poly, m):
    """Shift-and-add multiplication, independent of the log tables."""
    out = 0
    while b:
        if b & 1:
            out ^= a
        b >>= 1
        a <<= 1
        if a >> m:
            a ^= poly
    return out


def distance(a, b):
    return sum(x != y for x, y in zip(a, b))


@pytest.fixture(scope="module")
def rs73_book():
    return {msg: RS73.encode(list(msg)) for msg in itertools.product(range(8), repeat=3)}


# -- field ---------------------------------------------------------------------


@pytest.mark.parametrize("m", range(2, 13))
def test_field_tables(m):
    gf = GaloisField(m)
    assert check_field(gf)
    assert sorted(gf.exp[: gf.order]) == list(range(1, gf.size))


@pytest.mark.parametrize("m", [3, 4, 5])
def test_field_mul_matches_shift_and_add(m):
    gf = GaloisField(m)
    poly = PRIMITIVE_POLYNOMIALS[m]
    for a in range(gf.size):
        for b in range(gf.size):
            assert gf.mul(a, b) == clmul_mod(a, b, poly, m)
            if b:
                assert gf.mul(gf.div(a, b), b) == a


def test_irreducibility():
    assert all(is_irreducible(p) for p in PRIMITIVE_POLYNOMIALS.values())
    assert not is_irreducible(0b101)  # x^2 + 1 = (x + 1)^2
    with pytest.raises(ValueError):
        GaloisField(4, 0b10101)  # reducible
    with pytest.raises(ValueError):
        GaloisField(4, 0b11111)  # irreducible but not primitive
    with pytest.raises(ZeroDivisionError):
        GaloisField(3).inverse(0)
    with pytest.raises(SymbolOutOfField):
        RS73.encode([0, 0, 8])


# -- Reed-Solomon --------------------------------------------------------------


def test_rs_zero_message():
    assert RS73.encode([0, 0, 0]) == [0] * 7
    assert RS3220.encode([0] * 20) == [0] * 32


def test_rs_systematic_and_in_code(rs73_book):
    for msg, cw in rs73_book.items():
        assert cw[:3] == list(msg)
        assert not any(RS73.syndromes(cw))


def test_rs73_minimum_distance(rs73_book):
    words = list(rs73_book.values())
    assert min(distance(a, b) for a, b in itertools.combinations(words, 2)) == 5


def test_rs_clean_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        msg = [int(s) for s in rng.integers(0, 128, 20)]
        assert rs_decode(rs_encode(msg, RS3220), RS3220).message == msg


def test_rs73_all_double_errors_on_sampled_messages(rs73_book):
    rng = np.random.default_rng(1)
    keys = list(rs73_book)
    for idx in rng.choice(len(keys), 24, replace=False):
        msg = keys[idx]
        cw = rs73_book[msg]
        for pos in itertools.combinations(range(7), 2):
            for vals in itertools.product(range(1, 8), repeat=2):
                word = list(cw)
                for p, v in zip(pos, vals):
                    word[p] ^= v
                assert RS73.decode(word).message == list(msg)


def test_rs73_matches_nearest_codeword_oracle(rs73_book):
    rng = np.random.default_rng(2)
    for _ in range(600):
        word = [int(s) for s in rng.integers(0, 8, 7)]
        dists = {msg: distance(cw, word) for msg, cw in rs73_book.items()}
        best = min(dists.values())
        res = RS73.decode(word)
        if best <= RS73.t:
            (nearest,) = [m for m, d in dists.items() if d == best]
            assert res.message == list(nearest)
        else:
            assert not res.ok


def test_rs73_three_errors_never_return_original(rs73_book):
    rng = np.random.default_rng(3)
    for _ in range(500):
        msg = tuple(int(s) for s in rng.integers(0, 8, 3))
        word = list(rs73_book[msg])
        for p in rng.choice(7, 3, replace=False):
            word[p] ^= int(rng.integers(1, 8))
        res = RS73.decode(word)
        assert res.message != list(msg)
        if res.ok:
            assert distance(RS73.encode(res.message), word) <= RS73.t


def test_rs3220_random_errors():
    assert rs_random(RS3220, 500, np.random.default_rng(4)) == 0


def test_rs_length_checks():
    with pytest.raises(LengthMismatch):
        RS73.encode([1, 2])
    with pytest.raises(LengthMismatch):
        RS73.decode([0] * 6)
    with pytest.raises(ValueError):
        ReedSolomonCode.over(3, 8, 3)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 127), min_size=20, max_size=20), st.data())
def test_rs3220_property(msg, data):
    cw = RS3220.encode(msg)
    positions = data.draw(st.lists(st.integers(0, 31), max_size=6, unique=True))
    for p in positions:
        cw[p] ^= data.draw(st.integers(1, 127))
    res = RS3220.decode(cw)
    assert res.message == msg
    assert sorted(res.error_positions) == sorted(positions)


# -- Hadamard ------------------------------------------------------------------


def test_hadamard_m3_examples():
    code = HadamardCode(3)
    assert "".join(map(str, hadamard_encode(0, code))) == "00000000"
    assert "".join(map(str, hadamard_encode(8, code))) == "11111111"
    assert "".join(map(str, hadamard_encode(1, code))) == "01010101"
    for msg in range(16):
        assert hadamard_decode(hadamard_encode(msg, code), code).message == msg
    with pytest.raises(MessageOutOfRange):
        code.encode(16)
    with pytest.raises(LengthMismatch):
        code.decode(np.zeros(7, np.uint8))


@pytest.mark.parametrize("m", [1, 2, 3, 4, 5])
def test_hadamard_pairwise_distance(m):
    code = HadamardCode(m)
    book = code.codebook
    half = 1 << m
    for a, b in itertools.combinations(range(2 * half), 2):
        d = int((book[a] != book[b]).sum())
        assert d == (half if a ^ b == half else half // 2)


def brute_decode(code, word):
    dists = (code.codebook != word).sum(axis=1)
    msgs = np.arange(len(dists))
    order = np.lexsort((msgs >> code.m, msgs & (code.length - 1), dists))
    return int(order[0])


def test_fwht_decode_matches_brute_force_all_m3_inputs():
    code = HadamardCode(3)
    words = np.array(list(itertools.product([0, 1], repeat=8)), dtype=np.uint8)
    got, _ = code.decode_many(words)
    assert [int(g) for g in got] == [brute_decode(code, w) for w in words]


@pytest.mark.parametrize("m", [4, 5])
def test_fwht_decode_matches_brute_force_random(m):
    code = HadamardCode(m)
    words = np.random.default_rng(m).integers(0, 2, (2000, code.length), dtype=np.uint8)
    got, _ = code.decode_many(words)
    assert [int(g) for g in got] == [brute_decode(code, w) for w in words]


def test_fwht_matches_matrix_product():
    H = np.array([[1]])
    for _ in range(4):
        H = np.block([[H, H], [H, -H]])
    x = np.random.default_rng(5).integers(-3, 4, (3, 16))
    assert np.array_equal(fwht(x), x @ H.T)


def test_hadamard_m5_seven_flips():
    code = HadamardCode(5)
    rng = np.random.default_rng(6)
    for msg in range(64):
        for _ in range(20):
            word = code.encode(msg)
            word[rng.choice(32, 7, replace=False)] ^= 1
            assert code.decode(word).message == msg


def test_hadamard_m5_adversarial_eight_flips():
    code = HadamardCode(5)
    a, b = 3, 1
    wa, wb = code.encode(a), code.encode(b)
    diff = np.flatnonzero(wa != wb)
    assert len(diff) == 16
    word = wa.copy()
    word[diff[:8]] ^= 1
    decoded = code.decode(word)
    assert decoded.tie and decoded.message == b


def test_hadamard_exhaustive_and_random():
    assert hadamard_exhaustive(HadamardCode(3), 1) == 0
    assert hadamard_random(HadamardCode(5), 1000, np.random.default_rng(7)) == 0
    assert hadamard_random(HadamardCode(6), 1000, np.random.default_rng(8)) == 0


def test_codebook_is_read_only():
    book = HadamardCode(3).codebook
    with pytest.raises(ValueError):
        book[0, 0] = 1
    copy = HadamardCode(3).encode_many([1, 2])
    copy[0, 0] ^= 1  # fancy indexing hands back a writable copy


def test_selftest_small():
    report = selftest(seed=1, rs_trials=100, quick=True)
    assert report["ok"] and report["rs_7_3_sampled_failures"] == 0
