"""Error-correcting codes used by the fuzzy commitment."""

from .gf import GaloisField, PRIMITIVE_POLYNOMIALS, is_irreducible
from .hadamard import HadamardCode, HadamardDecoded, fwht, hadamard_decode, hadamard_encode
from .reed_solomon import RSDecodeResult, ReedSolomonCode, rs_decode, rs_encode
from .selftest import selftest

__all__ = [
    "GaloisField",
    "PRIMITIVE_POLYNOMIALS",
    "is_irreducible",
    "HadamardCode",
    "HadamardDecoded",
    "fwht",
    "hadamard_encode",
    "hadamard_decode",
    "ReedSolomonCode",
    "RSDecodeResult",
    "rs_encode",
    "rs_decode",
    "selftest",
]
