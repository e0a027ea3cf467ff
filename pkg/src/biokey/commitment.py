"""Fuzzy commitment binding a 120-bit key to an iris code.

The key (plus a 20-bit self-check pad) is Reed-Solomon encoded over GF(2^7),
each RS symbol is Hadamard encoded into a 64-bit block, and the resulting
2048-bit codeword is XORed with the iris bits. Only the masked word and a
SHA-256 digest of the key are stored.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from ._validation import check_bits
from .ecc import GaloisField, HadamardCode, ReedSolomonCode
from .errors import LengthMismatch, Reject

KEY_BITS = 120
POST_DECODE = "post_decode"
INNER = "inner"


@dataclass(frozen=True)
class CommitmentParams:
    field_m: int = 7
    rs_n: int = 32
    rs_k: int = 20
    hadamard_m: int = 6
    n_bits: int = 2048
    threshold: float = 0.30
    # post_decode: compare the fully re-encoded codeword with the candidate
    # after RS decoding; inner: compare the Hadamard re-encoding before RS.
    gate: str = POST_DECODE
    key_bits: int = KEY_BITS

    def __post_init__(self):
        if self.hadamard_m + 1 != self.field_m:
            raise ValueError("Hadamard message width must equal the RS symbol width")
        if self.rs_n * (1 << self.hadamard_m) != self.n_bits:
            raise ValueError(f"{self.rs_n} blocks of {1 << self.hadamard_m} bits != {self.n_bits}")
        pad = self.rs_k * self.field_m - self.key_bits
        if not 0 <= pad <= 256:
            raise ValueError(f"RS message holds {self.rs_k * self.field_m} bits, cannot pad {self.key_bits}")
        if not 0 < self.threshold < 0.5:
            raise ValueError("threshold must lie in (0, 0.5)")
        if self.gate not in (POST_DECODE, INNER):
            raise ValueError(f"gate must be {POST_DECODE!r} or {INNER!r}")
        if self.key_bits % 8:
            raise ValueError("key length must be whole bytes")

    @property
    def pad_bits(self) -> int:
        return self.rs_k * self.field_m - self.key_bits

    @cached_property
    def rs(self) -> ReedSolomonCode:
        return ReedSolomonCode(self.rs_n, self.rs_k, GaloisField(self.field_m))

    @cached_property
    def hadamard(self) -> HadamardCode:
        return HadamardCode(self.hadamard_m)


DEFAULT_PARAMS = CommitmentParams()


@dataclass(frozen=True)
class IrisCode:
    bits: np.ndarray
    id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "bits", check_bits(self.bits, name="iris code"))

    def __len__(self) -> int:
        return int(self.bits.size)

    def to_text(self) -> str:
        return "".join("1" if b else "0" for b in self.bits) + "\n"

    @classmethod
    def from_text(cls, text: str, id: str = "") -> "IrisCode":
        text = text.strip()
        if text.startswith(("0x", "0X")):
            raw = bytes.fromhex(text[2:])
            return cls(np.unpackbits(np.frombuffer(raw, dtype=np.uint8)), id)
        if set(text) - {"0", "1"}:
            raise ValueError("iris code must be a 0/1 string or 0x-prefixed hex")
        return cls(np.frombuffer(text.encode("ascii"), dtype=np.uint8) - ord("0"), id)


@dataclass(frozen=True)
class Commitment:
    masked: np.ndarray = field(repr=False)
    key_digest: str
    params: CommitmentParams = DEFAULT_PARAMS
    created_at: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "masked", check_bits(self.masked, self.params.n_bits, "masked"))

    def to_text(self) -> str:
        p = self.params
        header = (
            f"FC1 {p.field_m} {p.rs_n} {p.rs_k} {p.hadamard_m} {p.n_bits} "
            f"{p.threshold!r} {p.gate} {self.created_at!r}"
        )
        return f"{header}\n{np.packbits(self.masked).tobytes().hex()}\n{self.key_digest}\n"

    @classmethod
    def from_text(cls, text: str) -> "Commitment":
        lines = text.strip().splitlines()
        if len(lines) != 3:
            raise ValueError("commitment file must have header, masked and digest lines")
        head = lines[0].split()
        if len(head) != 9 or head[0] != "FC1":
            raise ValueError("commitment header must be 'FC1 m n k hm bits threshold gate created'")
        params = CommitmentParams(
            field_m=int(head[1]), rs_n=int(head[2]), rs_k=int(head[3]), hadamard_m=int(head[4]),
            n_bits=int(head[5]), threshold=float(head[6]), gate=head[7],
        )
        masked = np.unpackbits(np.frombuffer(bytes.fromhex(lines[1]), dtype=np.uint8))
        return cls(masked[: params.n_bits], lines[2].strip(), params, float(head[8]))


def hamming_fraction(a, b) -> float:
    a = check_bits(a, name="a")
    b = check_bits(b, name="b")
    if a.size != b.size:
        raise LengthMismatch(f"lengths differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise LengthMismatch("empty bit strings")
    return float(np.count_nonzero(a != b)) / a.size


def key_digest(key: bytes) -> str:
    return hashlib.sha256(key).hexdigest()


def _pad(key: bytes, pad_bits: int) -> np.ndarray:
    key_bits = np.unpackbits(np.frombuffer(key, dtype=np.uint8))
    pad = np.unpackbits(np.frombuffer(hashlib.sha256(key).digest(), dtype=np.uint8))[:pad_bits]
    return np.concatenate([key_bits, pad])


def _bits_to_symbols(bits: np.ndarray, m: int) -> list[int]:
    weights = 1 << np.arange(m - 1, -1, -1)
    return [int(v) for v in bits.reshape(-1, m) @ weights]


def _symbols_to_bits(symbols, m: int) -> np.ndarray:
    sym = np.asarray(symbols, dtype=np.int64)[:, None]
    return ((sym >> np.arange(m - 1, -1, -1)) & 1).astype(np.uint8).ravel()


def encode_key(key: bytes, params: CommitmentParams = DEFAULT_PARAMS) -> np.ndarray:
    """Padded key -> RS codeword -> concatenated Hadamard blocks (n_bits)."""
    if len(key) * 8 != params.key_bits:
        raise LengthMismatch(f"key must be {params.key_bits} bits, got {len(key) * 8}")
    symbols = _bits_to_symbols(_pad(key, params.pad_bits), params.field_m)
    return params.hadamard.encode_many(params.rs.encode(symbols)).ravel()


def commit(
    iris: IrisCode,
    key: bytes,
    params: CommitmentParams = DEFAULT_PARAMS,
    now: float = 0.0,
) -> Commitment:
    """Mask the key codeword with the iris bits. The iris is not retained."""
    if len(iris) != params.n_bits:
        raise LengthMismatch(f"iris code has {len(iris)} bits, expected {params.n_bits}")
    codeword = encode_key(key, params)
    return Commitment(codeword ^ iris.bits, key_digest(key), params, now)


def decommit(query: IrisCode, commitment: Commitment) -> bytes:
    """Release the key, or raise Reject with the reason for refusal."""
    p = commitment.params
    if len(query) != p.n_bits:
        raise LengthMismatch(f"query has {len(query)} bits, expected {p.n_bits}")
    candidate = commitment.masked ^ query.bits
    blocks = candidate.reshape(p.rs_n, -1)
    symbols, _ = p.hadamard.decode_many(blocks)

    if p.gate == INNER:
        inner = p.hadamard.encode_many(symbols).ravel()
        dist = hamming_fraction(inner, candidate)
        if not dist < p.threshold:
            raise Reject(Reject.THRESHOLD_EXCEEDED, f"inner distance {dist:.4f}")

    decoded = p.rs.decode([int(s) for s in symbols])
    if not decoded.ok:
        raise Reject(Reject.ECC_FAILURE, "Reed-Solomon decoding failed")

    if p.gate == POST_DECODE:
        recon = p.hadamard.encode_many(p.rs.encode(decoded.message)).ravel()
        dist = hamming_fraction(recon, candidate)
        if not dist < p.threshold:
            raise Reject(Reject.THRESHOLD_EXCEEDED, f"codeword distance {dist:.4f}")

    bits = _symbols_to_bits(decoded.message, p.field_m)
    key = np.packbits(bits[: p.key_bits]).tobytes()
    if not np.array_equal(_pad(key, p.pad_bits), bits):
        raise Reject(Reject.DIGEST_MISMATCH, "pad check failed")
    if key_digest(key) != commitment.key_digest:
        raise Reject(Reject.DIGEST_MISMATCH, "key digest differs")
    return key


def read_iris_file(path, id: str = "") -> IrisCode:
    return IrisCode.from_text(Path(path).read_text(), id or Path(path).stem)
