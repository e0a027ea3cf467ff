"""Arithmetic in GF(2^m) backed by exp/log tables."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import SymbolOutOfField

# Conway-style primitive polynomials, bit masks including the x^m term.
PRIMITIVE_POLYNOMIALS = {
    2: 0b111,
    3: 0b1011,
    4: 0b10011,
    5: 0b100101,
    6: 0b1000011,
    7: 0b10001001,
    8: 0b100011101,
    9: 0b1000010001,
    10: 0b10000001001,
    11: 0b100000000101,
    12: 0b1000001010011,
}


def _poly_mod(a: int, b: int) -> int:
    """Remainder of carry-less division of bit polynomials."""
    db = b.bit_length()
    while a.bit_length() >= db:
        a ^= b << (a.bit_length() - db)
    return a


def is_irreducible(poly: int) -> bool:
    """Trial division by every polynomial of degree 1..deg/2."""
    deg = poly.bit_length() - 1
    if deg < 1:
        return False
    for d in range(1, deg // 2 + 1):
        for divisor in range(1 << d, 1 << (d + 1)):
            if _poly_mod(poly, divisor) == 0:
                return False
    return True


@dataclass(frozen=True)
class GaloisField:
    """GF(2^m) with log/antilog tables.

    The polynomial must be irreducible *and* primitive: x has to generate
    the whole multiplicative group, otherwise the log table is not a
    bijection.
    """

    m: int
    primitive_polynomial: int = 0
    exp: tuple = field(init=False, repr=False, compare=False)
    log: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 2 <= self.m <= 12:
            raise ValueError(f"extension degree must be in [2, 12], got {self.m}")
        poly = self.primitive_polynomial or PRIMITIVE_POLYNOMIALS[self.m]
        object.__setattr__(self, "primitive_polynomial", poly)
        if poly.bit_length() - 1 != self.m:
            raise ValueError(f"polynomial {poly:#x} is not of degree {self.m}")
        if not is_irreducible(poly):
            raise ValueError(f"polynomial {poly:#x} is reducible")

        order = (1 << self.m) - 1
        exp = [0] * (2 * order)
        log = [0] * (order + 1)
        x = 1
        for i in range(order):
            if i and x == 1:
                raise ValueError(f"polynomial {poly:#x} is not primitive")
            exp[i] = x
            log[x] = i
            x <<= 1
            if x >> self.m:
                x ^= poly
        if x != 1:
            raise ValueError(f"polynomial {poly:#x} is not primitive")
        for i in range(order, 2 * order):
            exp[i] = exp[i - order]
        object.__setattr__(self, "exp", tuple(exp))
        object.__setattr__(self, "log", tuple(log))

    @property
    def size(self) -> int:
        return 1 << self.m

    @property
    def order(self) -> int:
        """Size of the multiplicative group, 2^m - 1."""
        return (1 << self.m) - 1

    def check(self, symbol: int) -> int:
        if not 0 <= symbol < self.size:
            raise SymbolOutOfField(f"symbol {symbol} outside GF(2^{self.m})")
        return symbol

    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        return self.exp[self.log[a] + self.log[b]]

    def div(self, a: int, b: int) -> int:
        if b == 0:
            raise ZeroDivisionError("division by zero in GF(2^m)")
        if a == 0:
            return 0
        return self.exp[(self.log[a] - self.log[b]) % self.order]

    def inverse(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError("zero has no inverse")
        return self.exp[(self.order - self.log[a]) % self.order]

    def pow(self, a: int, n: int) -> int:
        if a == 0:
            return 0 if n else 1
        return self.exp[(self.log[a] * n) % self.order]

    def alpha_pow(self, n: int) -> int:
        return self.exp[n % self.order]

    # Polynomials are lists of coefficients, highest degree first.

    def poly_scale(self, p: list[int], x: int) -> list[int]:
        return [self.mul(c, x) for c in p]

    def poly_add(self, p: list[int], q: list[int]) -> list[int]:
        r = [0] * max(len(p), len(q))
        r[len(r) - len(p):] = p
        for i, c in enumerate(q):
            r[i + len(r) - len(q)] ^= c
        return r

    def poly_mul(self, p: list[int], q: list[int]) -> list[int]:
        r = [0] * (len(p) + len(q) - 1)
        for j, b in enumerate(q):
            if b == 0:
                continue
            for i, a in enumerate(p):
                r[i + j] ^= self.mul(a, b)
        return r

    def poly_eval(self, p: list[int], x: int) -> int:
        y = p[0]
        for c in p[1:]:
            y = self.mul(y, x) ^ c
        return y
