"""Systematic Reed-Solomon codes over GF(2^m).

Decoding runs syndromes -> Berlekamp-Massey -> Chien search -> Forney.
Generator roots are alpha^1 .. alpha^(n-k).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from ..errors import LengthMismatch
from .gf import GaloisField


@dataclass(frozen=True)
class RSDecodeResult:
    """Outcome of a decode attempt.

    ``message`` is None when the received word is further than ``t`` symbols
    from every codeword the decoder can reach; that is a normal rejection,
    not an error.
    """

    message: Optional[list[int]]
    error_positions: tuple[int, ...] = ()

    @property
    def ok(self) -> bool:
        return self.message is not None


@dataclass(frozen=True)
class ReedSolomonCode:
    n: int
    k: int
    field: GaloisField
    generator: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 1 <= self.k < self.n:
            raise ValueError(f"need 1 <= k < n, got n={self.n}, k={self.k}")
        if self.n > self.field.order:
            raise ValueError(f"block length {self.n} exceeds 2^m - 1 = {self.field.order}")
        g = [1]
        for i in range(1, self.n - self.k + 1):
            g = self.field.poly_mul(g, [1, self.field.alpha_pow(i)])
        object.__setattr__(self, "generator", tuple(g))

    @classmethod
    def over(cls, m: int, n: int, k: int) -> "ReedSolomonCode":
        return cls(n, k, GaloisField(m))

    @property
    def nsym(self) -> int:
        return self.n - self.k

    @property
    def t(self) -> int:
        return self.nsym // 2

    def encode(self, message: Sequence[int]) -> list[int]:
        if len(message) != self.k:
            raise LengthMismatch(f"expected {self.k} message symbols, got {len(message)}")
        gf = self.field
        msg = [gf.check(s) for s in message]
        # long division of msg * x^nsym by the monic generator
        rem = msg + [0] * self.nsym
        gen = self.generator
        for i in range(self.k):
            coef = rem[i]
            if coef:
                for j in range(1, len(gen)):
                    rem[i + j] ^= gf.mul(gen[j], coef)
        return msg + rem[self.k:]

    def syndromes(self, received: Sequence[int]) -> list[int]:
        # S_i = sum_j r_j * alpha^(i * (n-1-j)); table lookups inlined, this is the hot loop
        exp, log, order = self.field.exp, self.field.log, self.field.order
        terms = [(log[r], self.n - 1 - j) for j, r in enumerate(received) if r]
        out = []
        for i in range(1, self.nsym + 1):
            s = 0
            for lr, power in terms:
                s ^= exp[(lr + i * power) % order]
            out.append(s)
        return out

    def decode(self, received: Sequence[int]) -> RSDecodeResult:
        if len(received) != self.n:
            raise LengthMismatch(f"expected {self.n} symbols, got {len(received)}")
        gf = self.field
        word = [gf.check(s) for s in received]
        synd = self.syndromes(word)
        if not any(synd):
            return RSDecodeResult(word[: self.k])

        locator = _berlekamp_massey(gf, synd)
        n_err = len(locator) - 1
        if n_err > self.t:
            return RSDecodeResult(None)

        # Chien search: codeword index j carries power x^(n-1-j)
        positions = []
        for j in range(self.n):
            x_inv = gf.alpha_pow(-(self.n - 1 - j))
            if _eval_low_first(gf, locator, x_inv) == 0:
                positions.append(j)
        if len(positions) != n_err:
            return RSDecodeResult(None)

        # Forney, first consecutive root alpha^1
        omega = _mul_low_first(gf, synd, locator)[: self.nsym]
        deriv = [locator[i] if i % 2 == 1 else 0 for i in range(1, len(locator))]
        for j in positions:
            x_inv = gf.alpha_pow(-(self.n - 1 - j))
            denom = _eval_low_first(gf, deriv, x_inv)
            if denom == 0:
                return RSDecodeResult(None)
            word[j] ^= gf.div(_eval_low_first(gf, omega, x_inv), denom)

        if any(self.syndromes(word)):
            return RSDecodeResult(None)
        return RSDecodeResult(word[: self.k], tuple(positions))


def _eval_low_first(gf: GaloisField, p: Sequence[int], x: int) -> int:
    y = 0
    for c in reversed(p):
        y = gf.mul(y, x) ^ c
    return y


def _mul_low_first(gf: GaloisField, p: Sequence[int], q: Sequence[int]) -> list[int]:
    r = [0] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a:
            for j, b in enumerate(q):
                r[i + j] ^= gf.mul(a, b)
    return r


def _berlekamp_massey(gf: GaloisField, synd: Sequence[int]) -> list[int]:
    """Shortest LFSR generating ``synd``; coefficients lowest degree first."""
    c = [1]
    b = [1]
    length = 0
    shift = 1
    b_disc = 1
    for n_iter, s in enumerate(synd):
        d = s
        for i in range(1, length + 1):
            if i < len(c):
                d ^= gf.mul(c[i], synd[n_iter - i])
        if d == 0:
            shift += 1
            continue
        coef = gf.div(d, b_disc)
        update = [0] * shift + [gf.mul(coef, x) for x in b]
        prev = list(c)
        if len(update) > len(c):
            c = c + [0] * (len(update) - len(c))
        for i, u in enumerate(update):
            c[i] ^= u
        if 2 * length <= n_iter:
            length = n_iter + 1 - length
            b = prev
            b_disc = d
            shift = 1
        else:
            shift += 1
    # keep degree L even if the top coefficient vanished; the Chien root
    # count then falls short of L and the decode is rejected
    return (c + [0] * (length + 1))[: length + 1]


def rs_encode(message: Sequence[int], code: ReedSolomonCode) -> list[int]:
    return code.encode(message)


def rs_decode(received: Sequence[int], code: ReedSolomonCode) -> RSDecodeResult:
    return code.decode(received)
