"""Polynomial fuzzy vault over a minutiae template.

A decimal key is split into position-tagged chunks that become the integer
roots of a monic polynomial. The polynomial's coefficients are base64
encoded and spliced into the serialized template at offsets derived from a
seed, producing the helper data. Unlocking needs a matching fingerprint;
the coefficients are then read back and the roots recovered exactly.
"""

from __future__ import annotations

import base64
import binascii
import math
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ExpiredHelper,
    MatchBelowThreshold,
    Overflow,
    RootRecoveryFailure,
    TemplateTooShort,
)

N_CHUNKS = 4
DEFAULT_TOLERANCES = (8, 15)
DEFAULT_THRESHOLD = 0.6
MIN_POINTS, MAX_POINTS = 10, 128

ENDING, BIFURCATION = "E", "B"
_POINT = struct.Struct(">HHHB")


# -- key chunks -------------------------------------------------------------


@dataclass(frozen=True)
class KeyChunks:
    """Ordered raw chunks of width ``width`` decimal digits.

    Root ``i`` of the vault polynomial is ``(i + 1) * 10**width + chunks[i]``;
    the leading tag survives the unordered root set and restores the order.
    """

    chunks: tuple[int, ...]
    width: int

    def __post_init__(self):
        object.__setattr__(self, "chunks", tuple(int(c) for c in self.chunks))
        if self.width < 1:
            raise ValueError("chunk width must be >= 1")
        if not self.chunks:
            raise ValueError("need at least one chunk")
        for c in self.chunks:
            if not 0 <= c < 10**self.width:
                raise ValueError(f"chunk {c} does not fit {self.width} digits")

    @classmethod
    def from_digits(cls, digits: str, n_chunks: int = N_CHUNKS) -> "KeyChunks":
        if not digits.isdigit():
            raise ValueError("key must be a decimal string")
        width = -(-len(digits) // n_chunks)
        padded = digits.zfill(width * n_chunks)
        return cls(tuple(int(padded[i * width : (i + 1) * width]) for i in range(n_chunks)), width)

    def to_digits(self) -> str:
        """Inverse of from_digits for keys without a leading zero."""
        joined = "".join(str(c).zfill(self.width) for c in self.chunks)
        return joined.lstrip("0") or "0"

    def tagged_roots(self) -> tuple[int, ...]:
        base = 10**self.width
        return tuple((i + 1) * base + c for i, c in enumerate(self.chunks))

    @classmethod
    def from_roots(cls, roots: Iterable[int], width: int, n_chunks: int = N_CHUNKS) -> "KeyChunks":
        base = 10**width
        by_tag = {}
        for r in roots:
            tag, raw = divmod(r, base)
            if tag in by_tag or not 1 <= tag <= n_chunks:
                raise RootRecoveryFailure(f"root {r} carries an invalid or repeated position tag")
            by_tag[tag] = raw
        if len(by_tag) != n_chunks:
            raise RootRecoveryFailure("root set does not cover every chunk position")
        return cls(tuple(by_tag[t] for t in range(1, n_chunks + 1)), width)


def vieta_coefficients(roots: Sequence[int]) -> tuple[int, ...]:
    """Coefficients of prod(x - r), highest degree first; exact integers."""
    coeffs = [1]
    for r in roots:
        nxt = coeffs + [0]
        for i, c in enumerate(coeffs):
            nxt[i + 1] -= r * c
        coeffs = nxt
    return tuple(coeffs)


def chunks_to_coefficients(chunks: KeyChunks) -> tuple[int, ...]:
    return vieta_coefficients(chunks.tagged_roots())


def coefficient_width(width: int, n_chunks: int = N_CHUNKS) -> int:
    """Bytes per signed coefficient field for chunks of ``width`` digits.

    Bounded by the largest elementary symmetric sum of the tagged roots,
    C(n, k) * R**k, plus one sign bit.
    """
    top = (n_chunks + 1) * 10**width - 1
    bound = max(math.comb(n_chunks, k) * top**k for k in range(n_chunks + 1))
    return -(-(bound.bit_length() + 1) // 8)


def encode_coefficient(c: int, width: int) -> str:
    try:
        raw = int(c).to_bytes(width, "big", signed=True)
    except OverflowError as exc:
        raise Overflow(f"coefficient {c} does not fit {width} bytes") from exc
    return base64.b64encode(raw).decode("ascii")


def decode_coefficient(text: str | bytes, width: int) -> int:
    """Strict inverse of encode_coefficient; non-canonical input is rejected."""
    if isinstance(text, bytes):
        try:
            text = text.decode("ascii")
        except UnicodeDecodeError as exc:
            raise ValueError("coefficient field is not ASCII") from exc
    try:
        raw = base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ValueError(f"bad base64 field {text!r}") from exc
    if len(raw) != width:
        raise ValueError(f"field decodes to {len(raw)} bytes, expected {width}")
    value = int.from_bytes(raw, "big", signed=True)
    if encode_coefficient(value, width) != text:
        raise ValueError(f"non-canonical base64 field {text!r}")
    return value


def field_length(width: int) -> int:
    return -(-width // 3) * 4


# -- templates ---------------------------------------------------------------


@dataclass(frozen=True)
class Minutia:
    x: int
    y: int
    theta: int
    kind: str = ENDING

    def __post_init__(self):
        if not (0 <= self.x < 65536 and 0 <= self.y < 65536):
            raise ValueError(f"minutia position ({self.x}, {self.y}) out of range")
        if not 0 <= self.theta < 360:
            raise ValueError(f"minutia angle {self.theta} outside [0, 360)")
        if self.kind not in (ENDING, BIFURCATION):
            raise ValueError(f"minutia kind must be E or B, got {self.kind!r}")


@dataclass(frozen=True)
class MinutiaeTemplate:
    points: tuple[Minutia, ...]

    def __post_init__(self):
        pts = tuple(sorted(self.points, key=lambda p: (p.x, p.y, p.theta, p.kind)))
        object.__setattr__(self, "points", pts)
        if not MIN_POINTS <= len(pts) <= MAX_POINTS:
            raise ValueError(f"template needs {MIN_POINTS}..{MAX_POINTS} points, got {len(pts)}")

    @classmethod
    def from_tuples(cls, rows) -> "MinutiaeTemplate":
        return cls(tuple(Minutia(int(x), int(y), int(t), k) for x, y, t, k in rows))

    def __len__(self) -> int:
        return len(self.points)

    def serialize(self) -> bytes:
        return b"".join(
            _POINT.pack(p.x, p.y, p.theta, p.kind == BIFURCATION) for p in self.points
        )

    @classmethod
    def deserialize(cls, data: bytes) -> "MinutiaeTemplate":
        if len(data) % _POINT.size:
            raise ValueError("template byte length is not a whole number of points")
        pts = [
            Minutia(x, y, t, BIFURCATION if k else ENDING)
            for x, y, t, k in _POINT.iter_unpack(data)
        ]
        return cls(tuple(pts))

    def as_array(self) -> np.ndarray:
        return np.array([(p.x, p.y, p.theta) for p in self.points], dtype=np.int64)

    def to_text(self) -> str:
        return "".join(f"MIN {p.x} {p.y} {p.theta} {p.kind}\n" for p in self.points)

    @classmethod
    def from_text(cls, text: str) -> "MinutiaeTemplate":
        rows = []
        for lineno, line in enumerate(text.splitlines(), 1):
            parts = line.split()
            if not parts:
                continue
            if parts[0] != "MIN" or len(parts) != 5:
                raise ValueError(f"line {lineno}: expected 'MIN <x> <y> <theta> <E|B>'")
            rows.append((parts[1], parts[2], parts[3], parts[4]))
        return cls.from_tuples(rows)


# -- helper data -------------------------------------------------------------


def insertion_offsets(n: int, z_seed: int, count: int = N_CHUNKS + 1) -> list[int]:
    """Offsets into the template bytes, strictly increasing within [0, n]."""
    if n < count:
        raise TemplateTooShort(f"template of {n} bytes cannot hold {count} fields")
    stride = n // count
    offs = sorted((z_seed + i * stride) % (n + 1) for i in range(count))
    for i in range(1, count):
        if offs[i] <= offs[i - 1]:
            offs[i] = offs[i - 1] + 1
    return offs


def splice(template_bytes: bytes, fields: Sequence[bytes], offsets: Sequence[int]) -> bytes:
    out = bytearray()
    prev = 0
    for off, f in zip(offsets, fields):
        out += template_bytes[prev:off]
        out += f
        prev = off
    out += template_bytes[prev:]
    return bytes(out)


def extract(payload: bytes, offsets: Sequence[int], field_len: int) -> tuple[bytes, list[bytes]]:
    """Inverse of splice for fixed-length fields."""
    fields = []
    body = bytearray()
    prev = 0
    for i, off in enumerate(offsets):
        start = off + i * field_len
        body += payload[prev:start]
        fields.append(payload[start : start + field_len])
        prev = start + field_len
    body += payload[prev:]
    return bytes(body), fields


@dataclass(frozen=True)
class VaultHelperData:
    n: int
    z_seed: int
    width: int
    payload: bytes = field(repr=False)
    status: str = "ACTIVE"
    n_chunks: int = N_CHUNKS
    version: str = "FV1"

    @property
    def coefficient_bytes(self) -> int:
        return coefficient_width(self.width, self.n_chunks)

    @property
    def field_len(self) -> int:
        return field_length(self.coefficient_bytes)

    @property
    def offsets(self) -> list[int]:
        return insertion_offsets(self.n, self.z_seed, self.n_chunks + 1)

    def split(self) -> tuple[bytes, list[bytes]]:
        return extract(self.payload, self.offsets, self.field_len)

    def expired(self) -> "VaultHelperData":
        return replace(self, status="EXPIRED")

    def to_text(self) -> str:
        header = f"{self.version} {self.n} {self.z_seed} {self.width}"
        if self.status != "ACTIVE":
            header += f" {self.status}"
        return header + "\n" + base64.b64encode(self.payload).decode("ascii") + "\n"

    @classmethod
    def from_text(cls, text: str) -> "VaultHelperData":
        lines = text.strip().splitlines()
        if len(lines) != 2:
            raise ValueError("helper file must hold a header line and a payload line")
        head = lines[0].split()
        if len(head) not in (4, 5) or head[0] != "FV1":
            raise ValueError("helper header must be 'FV1 <n> <z_seed> <w> [status]'")
        status = head[4] if len(head) == 5 else "ACTIVE"
        helper = cls(int(head[1]), int(head[2]), int(head[3]),
                     base64.b64decode(lines[1], validate=True), status)
        expected = helper.n + (helper.n_chunks + 1) * helper.field_len
        if len(helper.payload) != expected:
            raise ValueError(f"payload has {len(helper.payload)} bytes, header implies {expected}")
        return helper


def lock_vault(
    template: MinutiaeTemplate,
    coefficients: Sequence[int],
    z_seed: int,
    width: int,
) -> VaultHelperData:
    """Splice the base64 coefficient fields into the serialized template.

    The serialized template lives only inside the payload; nothing else
    keeps a copy.
    """
    n_chunks = len(coefficients) - 1
    body = template.serialize()
    n = len(body)
    offsets = insertion_offsets(n, z_seed, n_chunks + 1)
    nbytes = coefficient_width(width, n_chunks)
    fields = [encode_coefficient(c, nbytes).encode("ascii") for c in coefficients]
    return VaultHelperData(n, z_seed, width, splice(body, fields, offsets), n_chunks=n_chunks)


def lock_key(template: MinutiaeTemplate, digits: str, z_seed: int) -> VaultHelperData:
    chunks = KeyChunks.from_digits(digits)
    return lock_vault(template, chunks_to_coefficients(chunks), z_seed, chunks.width)


# -- matching ----------------------------------------------------------------


def match_score(
    query: MinutiaeTemplate,
    stored: MinutiaeTemplate,
    tolerances: tuple[float, float] = DEFAULT_TOLERANCES,
) -> float:
    """Greedy one-to-one pairing, closest candidate pairs first."""
    dxy, dtheta = tolerances
    q = query.as_array()
    s = stored.as_array()
    cheb = np.maximum(np.abs(q[:, None, 0] - s[None, :, 0]), np.abs(q[:, None, 1] - s[None, :, 1]))
    ang = np.abs(q[:, None, 2] - s[None, :, 2]) % 360
    ang = np.minimum(ang, 360 - ang)
    qi, si = np.nonzero((cheb <= dxy) & (ang <= dtheta))
    matched = 0
    if len(qi):
        order = np.lexsort((si, qi, ang[qi, si], cheb[qi, si]))
        used_q, used_s = set(), set()
        for k in order:
            a, b = int(qi[k]), int(si[k])
            if a not in used_q and b not in used_s:
                used_q.add(a)
                used_s.add(b)
        matched = len(used_q)
    return matched / max(len(q), len(s))


def match_template(
    query: MinutiaeTemplate,
    helper: VaultHelperData,
    tolerances: tuple[float, float] = DEFAULT_TOLERANCES,
) -> float:
    if helper.status != "ACTIVE":
        raise ExpiredHelper("vault helper is expired")
    body, _ = helper.split()
    try:
        stored = MinutiaeTemplate.deserialize(body)
    except ValueError as exc:
        raise RootRecoveryFailure(f"embedded template is corrupted: {exc}") from exc
    return match_score(query, stored, tolerances)


# -- unlocking ---------------------------------------------------------------


def _eval(coeffs: Sequence[int], x: int) -> int:
    y = 0
    for c in coeffs:
        y = y * x + c
    return y


def _deflate(coeffs: Sequence[int], r: int) -> list[int]:
    out = [coeffs[0]]
    for c in coeffs[1:-1]:
        out.append(c + out[-1] * r)
    return out


def _candidate_roots(coeffs: Sequence[int], lo: int, hi: int) -> list[int]:
    """Integer candidates near the numeric roots, all within [lo, hi)."""
    try:
        approx = np.roots(np.array(coeffs, dtype=float))
    except (np.linalg.LinAlgError, ValueError):
        return []
    cands = set()
    for z in approx:
        if not np.isfinite(z):
            continue
        base = int(round(z.real))
        for r in (base - 1, base, base + 1):
            if lo <= r < hi:
                cands.add(r)
    return sorted(cands)


def find_integer_roots(coeffs: Sequence[int], lo: int, hi: int) -> list[int]:
    """All integer roots in [lo, hi) of a monic integer polynomial, with multiplicity.

    Every root divides the constant term, so candidates are divisors of it in
    the bounded range: numeric estimates are tried first and a full divisor
    scan over the range is the fallback.
    """
    poly = list(coeffs)
    degree = len(poly) - 1
    roots: list[int] = []

    def peel(candidates):
        nonlocal poly
        for r in candidates:
            while len(poly) > 1 and (poly[-1] == 0 if r == 0 else poly[-1] % r == 0) and _eval(poly, r) == 0:
                roots.append(r)
                poly = _deflate(poly, r)

    peel(_candidate_roots(poly, lo, hi))
    if len(roots) < degree:
        peel(range(lo, hi))
    return roots


def unlock_vault(
    query: MinutiaeTemplate,
    helper: VaultHelperData,
    threshold: float = DEFAULT_THRESHOLD,
    tolerances: tuple[float, float] = DEFAULT_TOLERANCES,
) -> KeyChunks:
    score = match_template(query, helper, tolerances)
    if score < threshold:
        raise MatchBelowThreshold(f"match score {score:.3f} below threshold {threshold}")
    _, fields = helper.split()
    try:
        coeffs = [decode_coefficient(f, helper.coefficient_bytes) for f in fields]
    except ValueError as exc:
        raise RootRecoveryFailure(f"coefficient field unreadable: {exc}") from exc
    if coeffs[0] != 1:
        raise RootRecoveryFailure("leading coefficient is not 1")
    base = 10**helper.width
    roots = find_integer_roots(coeffs, base, (helper.n_chunks + 1) * base)
    if len(roots) != helper.n_chunks or vieta_coefficients(roots) != tuple(coeffs):
        raise RootRecoveryFailure("coefficients do not re-expand from integer roots")
    return KeyChunks.from_roots(roots, helper.width, helper.n_chunks)


def unlock_key(query: MinutiaeTemplate, helper: VaultHelperData, threshold: float = DEFAULT_THRESHOLD) -> str:
    return unlock_vault(query, helper, threshold).to_digits()
