"""Augmented Hadamard code: rows of the Sylvester matrix and their complements.

A message of m+1 bits selects row ``msg & (2^m - 1)``; the top bit selects
the complement. Entries map +1 -> bit 0 and -1 -> bit 1. Minimum distance is
2^(m-1), so any 2^(m-2) - 1 bit errors are corrected.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..errors import LengthMismatch, MessageOutOfRange


@dataclass(frozen=True)
class HadamardCode:
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("Hadamard order must be >= 1")

    @property
    def length(self) -> int:
        return 1 << self.m

    @property
    def message_bits(self) -> int:
        return self.m + 1

    @property
    def t(self) -> int:
        return max((1 << self.m) // 4 - 1, 0)

    def encode(self, message: int) -> np.ndarray:
        return self.encode_many(np.array([message]))[0]

    def encode_many(self, messages) -> np.ndarray:
        """Encode an array of messages into a (count, 2^m) uint8 bit array."""
        msgs = np.asarray(messages, dtype=np.int64)
        if msgs.size and (msgs.min() < 0 or msgs.max() >= 1 << (self.m + 1)):
            raise MessageOutOfRange(f"messages must be < 2^{self.m + 1}")
        return self.codebook[msgs]

    @cached_property
    def codebook(self) -> np.ndarray:
        """All 2^(m+1) codewords, indexed by message."""
        msgs = np.arange(1 << (self.m + 1), dtype=np.int64)
        idx = np.arange(self.length, dtype=np.int64)
        # Sylvester entry H[r][c] = (-1)^popcount(r & c)
        bits = _popcount_parity((msgs[:, None] & (self.length - 1)) & idx[None, :])
        book = (bits ^ (msgs[:, None] >> self.m)).astype(np.uint8)
        book.setflags(write=False)
        return book

    def decode(self, received) -> "HadamardDecoded":
        msgs, ties = self.decode_many(np.asarray(received)[None, :])
        return HadamardDecoded(int(msgs[0]), bool(ties[0]))

    def decode_many(self, received) -> tuple[np.ndarray, np.ndarray]:
        """Maximum-correlation decode of a (count, 2^m) bit array.

        Returns (messages, tie_flags). Ties go to the lowest row index, with
        the uncomplemented reading preferred.
        """
        words = np.asarray(received)
        if words.ndim != 2 or words.shape[1] != self.length:
            raise LengthMismatch(f"expected blocks of {self.length} bits")
        spectrum = fwht(1 - 2 * words.astype(np.int64))
        mag = np.abs(spectrum)
        best = mag.argmax(axis=1)
        peak = mag[np.arange(len(words)), best]
        ties = (mag == peak[:, None]).sum(axis=1) > 1
        sign_bit = (spectrum[np.arange(len(words)), best] < 0).astype(np.int64)
        return best + (sign_bit << self.m), ties


@dataclass(frozen=True)
class HadamardDecoded:
    message: int
    tie: bool = False


def fwht(x: np.ndarray) -> np.ndarray:
    """Unnormalized fast Walsh-Hadamard transform along the last axis."""
    a = np.array(x, dtype=np.int64, copy=True)
    n = a.shape[-1]
    if n & (n - 1):
        raise ValueError("length must be a power of two")
    lead = a.shape[:-1]
    h = 1
    while h < n:
        a = a.reshape(*lead, n // (2 * h), 2, h)
        top = a[..., 0, :] + a[..., 1, :]
        bot = a[..., 0, :] - a[..., 1, :]
        a = np.stack((top, bot), axis=-2)
        h *= 2
    return a.reshape(*lead, n)


def _popcount_parity(v: np.ndarray) -> np.ndarray:
    v = v.copy()
    parity = np.zeros_like(v)
    while np.any(v):
        parity ^= v & 1
        v >>= 1
    return parity


def hadamard_encode(message: int, code: HadamardCode) -> np.ndarray:
    return code.encode(message)


def hadamard_decode(received, code: HadamardCode) -> HadamardDecoded:
    return code.decode(received)
