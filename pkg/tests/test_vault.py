import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biokey.errors import ExpiredHelper, MatchBelowThreshold, Overflow, RootRecoveryFailure, TemplateTooShort
from biokey.synth import gen_population, random_template
from biokey.vault import (
    KeyChunks,
    Minutia,
    MinutiaeTemplate,
    VaultHelperData,
    chunks_to_coefficients,
    coefficient_width,
    decode_coefficient,
    encode_coefficient,
    extract,
    find_integer_roots,
    insertion_offsets,
    lock_key,
    lock_vault,
    match_score,
    match_template,
    splice,
    unlock_key,
    unlock_vault,
    vieta_coefficients,
)


def expand_oracle(roots):
    """Coefficient k of prod(x - r) is (-1)^k times the k-th elementary symmetric sum."""
    out = []
    for k in range(len(roots) + 1):
        e = sum(np.prod(c, dtype=object) if c else 1 for c in itertools.combinations(roots, k))
        out.append((-1) ** k * int(e))
    return tuple(out)


def template(seed=0, n=40):
    return random_template(np.random.default_rng(seed), n)


def test_symbolic_quartic():
    A, B, C, D = 3, 5, 7, 11
    assert vieta_coefficients([A, B, C, D]) == (
        1,
        -(A + B + C + D),
        A * B + A * C + A * D + B * C + B * D + C * D,
        -(A * B * C + A * B * D + A * C * D + B * C * D),
        A * B * C * D,
    )


def test_vieta_examples():
    assert vieta_coefficients([0, 0, 0, 0]) == (1, 0, 0, 0, 0)
    assert vieta_coefficients([1, 2, 3, 4]) == (1, -10, 35, -50, 24)


def test_vieta_matches_oracle_on_tagged_roots():
    rng = np.random.default_rng(3)
    for _ in range(500):
        chunks = KeyChunks(tuple(int(v) for v in rng.integers(0, 10000, 4)), 4)
        assert chunks_to_coefficients(chunks) == expand_oracle(chunks.tagged_roots())


def test_encode_coefficient_examples():
    assert encode_coefficient(0, 3) == "AAAA"
    assert encode_coefficient(1, 3) == "AAAB"
    with pytest.raises(Overflow):
        encode_coefficient(2**23, 3)


def test_coefficient_round_trip():
    rng = np.random.default_rng(4)
    width = coefficient_width(4)
    bound = 2 ** (8 * width - 1)
    for c in rng.integers(-bound, bound, 1000, dtype=np.int64):
        assert decode_coefficient(encode_coefficient(int(c), width), width) == c


def test_decode_is_strict():
    with pytest.raises(ValueError):
        decode_coefficient("AAA*", 3)
    with pytest.raises(ValueError):
        decode_coefficient("AAAAAAAA", 3)


@pytest.mark.parametrize("w", [1, 2, 3, 4])
def test_coefficient_width_holds_every_tagged_polynomial(w):
    top = KeyChunks((10**w - 1,) * 4, w)
    nbytes = coefficient_width(w)
    for c in chunks_to_coefficients(top):
        encode_coefficient(c, nbytes)


def test_chunking():
    chunks = KeyChunks.from_digits("123456789012345")
    assert chunks.width == 4 and chunks.chunks == (123, 4567, 8901, 2345)
    assert chunks.to_digits() == "123456789012345"
    assert chunks.tagged_roots() == (10123, 24567, 38901, 42345)
    assert KeyChunks.from_roots(reversed(chunks.tagged_roots()), 4) == chunks
    with pytest.raises(RootRecoveryFailure):
        KeyChunks.from_roots([10123, 10124, 38901, 42345], 4)


def test_offsets_example():
    assert insertion_offsets(60, 0) == [0, 12, 24, 36, 48]
    with pytest.raises(TemplateTooShort):
        insertion_offsets(4, 0)


@settings(max_examples=300, deadline=None)
@given(st.integers(5, 512), st.integers(0, 2**31), st.integers(1, 12), st.data())
def test_splice_extract_inverse(n, z_seed, flen, data):
    body = data.draw(st.binary(min_size=n, max_size=n))
    offsets = insertion_offsets(n, z_seed)
    assert offsets == sorted(offsets) and len(set(offsets)) == 5 and offsets[-1] <= n
    fields = [data.draw(st.binary(min_size=flen, max_size=flen)) for _ in offsets]
    payload = splice(body, fields, offsets)
    assert extract(payload, offsets, flen) == (body, fields)


def test_template_serialization():
    t = template(1)
    assert MinutiaeTemplate.deserialize(t.serialize()) == t
    assert MinutiaeTemplate.from_text(t.to_text()) == t
    assert len(t.serialize()) == 7 * len(t)
    with pytest.raises(ValueError):
        MinutiaeTemplate(tuple(Minutia(i, i, 0) for i in range(9)))
    with pytest.raises(ValueError):
        Minutia(1, 1, 360)


def test_helper_round_trip_and_relock():
    t = template(2)
    a, b = lock_key(t, "123456789012345", 0), lock_key(t, "123456789012345", 99)
    assert a.payload != b.payload
    assert unlock_key(t, a) == unlock_key(t, b) == "123456789012345"
    body, fields = a.split()
    assert body == t.serialize()
    assert splice(body, fields, a.offsets) == a.payload
    assert VaultHelperData.from_text(a.to_text()) == a


def test_unlock_roots_one_to_four():
    t = template(3)
    helper = lock_vault(t, chunks_to_coefficients(KeyChunks((1, 2, 3, 4), 1)), 5, 1)
    assert unlock_vault(t, helper).chunks == (1, 2, 3, 4)


def test_match_scores():
    t = template(4, 40)
    helper = lock_key(t, "987654321098765", 1)
    assert match_template(t, helper) == 1.0
    far = MinutiaeTemplate(tuple(Minutia(p.x, p.y, (p.theta + 180) % 360, p.kind) for p in t.points))
    assert match_template(far, helper) == 0.0
    moved = list(t.points)
    for k in range(4):
        p = moved[k]
        moved[k] = Minutia(p.x, p.y, (p.theta + 90) % 360, p.kind)
    assert match_score(MinutiaeTemplate(tuple(moved)), t) == pytest.approx(0.9)


def test_match_tolerances_are_inclusive():
    t = MinutiaeTemplate.from_tuples((40 * i, 40 * i, 10 * i, "E") for i in range(1, 13))
    shifted = MinutiaeTemplate.from_tuples((40 * i + 8, 40 * i - 8, 10 * i + 15, "E") for i in range(1, 13))
    assert match_score(shifted, t) == 1.0
    assert match_score(shifted, t, (7, 15)) == 0.0
    assert match_score(shifted, t, (8, 14)) == 0.0


def test_impostor_rejected():
    a, b = gen_population("fingerprint", 2, 11)
    helper = lock_key(a, "111122223333444", 3)
    with pytest.raises(MatchBelowThreshold):
        unlock_key(b, helper)


def test_expired_helper():
    t = template(6)
    helper = lock_key(t, "123456789012345", 0).expired()
    with pytest.raises(ExpiredHelper):
        unlock_key(t, helper)
    assert VaultHelperData.from_text(helper.to_text()).status == "EXPIRED"


def test_corrupted_coefficient_field():
    t = template(7)
    helper = lock_key(t, "123456789012345", 17)
    field_starts = [off + i * helper.field_len for i, off in enumerate(helper.offsets)]
    for start in field_starts:
        for k in range(helper.field_len):
            payload = bytearray(helper.payload)
            payload[start + k] ^= 0x01
            bad = VaultHelperData(helper.n, helper.z_seed, helper.width, bytes(payload))
            with pytest.raises(RootRecoveryFailure):
                unlock_key(t, bad)


def test_find_integer_roots_fallback():
    coeffs = vieta_coefficients([10, 11, 12, 13])
    assert sorted(find_integer_roots(coeffs, 10, 50)) == [10, 11, 12, 13]
    assert find_integer_roots(vieta_coefficients([10, 11, 12, 13])[:-1] + (7,), 10, 50) == []


def test_round_trip_many_keys():
    rng = np.random.default_rng(8)
    for i in range(200):
        digits = str(int(rng.integers(10**14, 10**15)))
        t = template(100 + i, int(rng.integers(30, 51)))
        assert unlock_key(t, lock_key(t, digits, int(rng.integers(2**31)))) == digits


def test_short_keys_round_trip():
    t = template(9)
    for digits in ("7", "42", "12345", "10000000000000", "99999999999999999"):
        assert unlock_key(t, lock_key(t, digits, 4)) == digits
