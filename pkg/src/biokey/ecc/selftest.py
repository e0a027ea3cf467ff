"""Exhaustive and randomized capacity checks, run by ``biokey ecc selftest``."""

from __future__ import annotations

import itertools

import numpy as np

from .gf import GaloisField
from .hadamard import HadamardCode
from .reed_solomon import ReedSolomonCode


def check_field(gf: GaloisField) -> bool:
    for a in range(1, gf.size):
        if gf.mul(a, gf.inverse(a)) != 1:
            return False
        if gf.exp[gf.log[a]] != a:
            return False
    return all(gf.log[gf.exp[i]] == i for i in range(gf.order))


def rs_exhaustive(code: ReedSolomonCode, messages=None) -> int:
    """Decode every message under every error pattern of weight <= t.

    Returns the failure count. Only sensible for tiny codes such as RS(7,3).
    ``messages`` restricts the sweep to a subset of messages.
    """
    q = code.field.size
    failures = 0
    patterns = []
    for w in range(code.t + 1):
        for pos in itertools.combinations(range(code.n), w):
            for vals in itertools.product(range(1, q), repeat=w):
                patterns.append(tuple(zip(pos, vals)))
    if messages is None:
        messages = itertools.product(range(q), repeat=code.k)
    for msg in messages:
        cw = code.encode(list(msg))
        for pat in patterns:
            word = list(cw)
            for p, v in pat:
                word[p] ^= v
            res = code.decode(word)
            if not res.ok or res.message != list(msg):
                failures += 1
    return failures


def rs_random(code: ReedSolomonCode, trials: int, rng: np.random.Generator) -> int:
    q = code.field.size
    failures = 0
    for _ in range(trials):
        msg = [int(s) for s in rng.integers(0, q, code.k)]
        word = code.encode(msg)
        w = int(rng.integers(0, code.t + 1))
        for p in rng.choice(code.n, size=w, replace=False):
            word[p] ^= int(rng.integers(1, q))
        res = code.decode(word)
        if not res.ok or res.message != msg:
            failures += 1
    return failures


def hadamard_exhaustive(code: HadamardCode, max_flips: int) -> int:
    failures = 0
    msgs = np.arange(1 << code.message_bits)
    words = code.encode_many(msgs)
    for w in range(max_flips + 1):
        for pos in itertools.combinations(range(code.length), w):
            noisy = words.copy()
            noisy[:, list(pos)] ^= 1
            got, _ = code.decode_many(noisy)
            failures += int((got != msgs).sum())
    return failures


def hadamard_random(code: HadamardCode, trials: int, rng: np.random.Generator) -> int:
    msgs = rng.integers(0, 1 << code.message_bits, trials)
    words = code.encode_many(msgs)
    for row in words:
        w = int(rng.integers(0, code.t + 1))
        row[rng.choice(code.length, size=w, replace=False)] ^= 1
    got, _ = code.decode_many(words)
    return int((got != msgs).sum())


def selftest(seed: int = 0, rs_trials: int = 10_000, quick: bool = False) -> dict:
    """Run every capacity check. ``quick`` sweeps RS(7,3) error patterns
    over 16 random messages instead of all 512."""
    rng = np.random.default_rng(seed)
    results = {}
    results["gf_tables"] = all(check_field(GaloisField(m)) for m in range(2, 13))
    rs73 = ReedSolomonCode.over(3, 7, 3)
    if quick:
        sample = [tuple(int(s) for s in row) for row in rng.integers(0, 8, (16, 3))]
        results["rs_7_3_sampled_failures"] = rs_exhaustive(rs73, sample)
    else:
        results["rs_7_3_exhaustive_failures"] = rs_exhaustive(rs73)
    results["rs_32_20_random_failures"] = rs_random(ReedSolomonCode.over(7, 32, 20), rs_trials, rng)
    results["hadamard_m3_exhaustive_failures"] = hadamard_exhaustive(HadamardCode(3), 1)
    results["hadamard_m5_random_failures"] = hadamard_random(HadamardCode(5), 1000, rng)
    results["ok"] = results["gf_tables"] and not any(
        v for k, v in results.items() if k.endswith("failures")
    )
    return results
