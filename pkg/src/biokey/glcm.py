"""Key generation from gray-level co-occurrence texture statistics.

The six GLCM descriptors of an image are multiplied together and the
significant digits of the product become a fixed-length decimal key, which
then gets an activation window.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, replace
from decimal import ROUND_FLOOR, Decimal
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_angle, check_gray_matrix, check_positive_int
from .errors import DegenerateCorrelation, NonPositiveDuration, NoPairs, ZeroProduct

DEFAULT_LEVELS = 32
DEFAULT_KEY_LEN = 15
BINDING_KEY_BITS = 120

ACTIVE = "ACTIVE"
EXPIRED = "EXPIRED"
ENROLLED = "ENROLLED"
UNENROLLED = "UNENROLLED"

FEATURE_NAMES = ("trace", "contrast", "correlation", "energy", "entropy", "homogeneity")


@dataclass(frozen=True)
class GrayImage:
    pixels: np.ndarray
    levels: int = DEFAULT_LEVELS

    def __post_init__(self):
        check_positive_int(self.levels, "levels", minimum=2)
        object.__setattr__(self, "pixels", check_gray_matrix(self.pixels, self.levels))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @classmethod
    def from_intensities(cls, intensities, levels: int = DEFAULT_LEVELS) -> "GrayImage":
        """Uniformly bin 8-bit intensities into ``levels`` gray levels."""
        arr = np.asarray(intensities, dtype=np.int64)
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError("intensities must be 8-bit")
        return cls(arr * levels // 256, levels)


@dataclass(frozen=True)
class GlcmParams:
    distance: int = 1
    angle: int = 0
    levels: int = DEFAULT_LEVELS

    def __post_init__(self):
        check_positive_int(self.distance, "distance")
        check_angle(self.angle)
        check_positive_int(self.levels, "levels", minimum=2)

    @property
    def offset(self) -> tuple[int, int]:
        """(row, column) displacement of the neighbour pixel."""
        r = self.distance
        return {0: (0, r), 45: (-r, r), 90: (-r, 0), 135: (-r, -r)}[self.angle]


@dataclass(frozen=True)
class Glcm:
    matrix: np.ndarray
    pair_count: int


@dataclass(frozen=True)
class FeatureVector:
    trace: float
    contrast: float
    correlation: float
    energy: float
    entropy: float
    homogeneity: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in FEATURE_NAMES])


def compute_glcm(image: GrayImage, params: GlcmParams) -> Glcm:
    """Directional co-occurrence counts of (p, p + offset), normalized."""
    if image.levels != params.levels:
        raise ValueError(f"image has {image.levels} levels, params expect {params.levels}")
    px = image.pixels
    h, w = px.shape
    dr, dc = params.offset
    rows = slice(max(0, -dr), min(h, h - dr))
    cols = slice(max(0, -dc), min(w, w - dc))
    ref = px[rows, cols]
    if ref.size == 0:
        raise NoPairs(f"offset {params.offset} leaves no pixel pair in a {h}x{w} image")
    nb = px[rows.start + dr : rows.stop + dr, cols.start + dc : cols.stop + dc]
    L = params.levels
    counts = np.bincount((ref * L + nb).ravel(), minlength=L * L).reshape(L, L)
    total = int(ref.size)
    return Glcm(counts / total, total)


def extract_features(glcm: Glcm, allow_degenerate: bool = False) -> FeatureVector:
    """Trace, contrast, correlation, energy, entropy (bits) and homogeneity.

    A zero-variance marginal raises DegenerateCorrelation unless
    ``allow_degenerate`` is set, in which case correlation is NaN and the
    vector can never yield a key.
    """
    M = glcm.matrix
    L = M.shape[0]
    i, j = np.indices((L, L))
    px = M.sum(axis=1)
    py = M.sum(axis=0)
    levels = np.arange(L)
    mu_i = float(levels @ px)
    mu_j = float(levels @ py)
    sd_i = math.sqrt(float(((levels - mu_i) ** 2) @ px))
    sd_j = math.sqrt(float(((levels - mu_j) ** 2) @ py))
    if sd_i == 0 or sd_j == 0:
        if not allow_degenerate:
            raise DegenerateCorrelation("constant marginal: correlation undefined")
        correlation = math.nan
    else:
        correlation = float(((i - mu_i) * (j - mu_j) * M).sum() / (sd_i * sd_j))
    nz = M[M > 0]
    return FeatureVector(
        trace=float(np.trace(M)),
        contrast=float(((i - j) ** 2 * M).sum()),
        correlation=correlation,
        energy=float((M**2).sum()),
        entropy=float(-(nz * np.log2(nz)).sum()),
        homogeneity=float((M / (1 + np.abs(i - j))).sum()),
    )


def derive_key(features: FeatureVector, key_len: int = DEFAULT_KEY_LEN) -> str:
    """First ``key_len`` significant digits of |trace * contrast * ... * homogeneity|.

    Digits come from the shortest round-tripping decimal form of the float
    product, so the result is reproducible on any IEEE-754 platform.
    """
    check_positive_int(key_len, "key_len")
    values = features.as_array()
    if not np.all(np.isfinite(values)):
        raise ZeroProduct("non-finite feature")
    k = 1.0
    for v in values:
        k *= float(v)
    k = abs(k)
    if k == 0.0:
        raise ZeroProduct("feature product is zero")
    if not math.isfinite(k):
        raise ZeroProduct("feature product overflowed")
    d = Decimal(repr(k))
    count = key_len - 1 - d.adjusted()
    digits = str(int(d.scaleb(count).to_integral_value(rounding=ROUND_FLOOR)))
    assert len(digits) == key_len and digits[0] != "0"
    return digits


@dataclass(frozen=True)
class TimedKey:
    digits: str
    created_at: float
    active_from: float
    expires_at: float
    status: str = ACTIVE
    enrollment: str = UNENROLLED

    def refreshed(self, now: float) -> "TimedKey":
        """Copy with status EXPIRED once ``now`` is past the expiry time."""
        if now > self.expires_at and self.status != EXPIRED:
            return replace(self, status=EXPIRED)
        return self

    def binding_key(self) -> bytes:
        return binding_key(self.digits)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TimedKey":
        return cls(**data)


def binding_key(digits: str) -> bytes:
    """120-bit binding/encryption key: SHA-256 of the digit string, truncated."""
    return hashlib.sha256(digits.encode("ascii")).digest()[: BINDING_KEY_BITS // 8]


def attach_validity(digits: str, now: float, duration: float) -> TimedKey:
    if not duration > 0:
        raise NonPositiveDuration(f"duration must be positive, got {duration}")
    if not digits.isdigit() or digits[0] == "0":
        raise ValueError("key digits must be a decimal string without a leading zero")
    return TimedKey(digits, now, now, now + duration)


def generate_key(image: GrayImage, params: GlcmParams, key_len: int = DEFAULT_KEY_LEN) -> str:
    return derive_key(extract_features(compute_glcm(image, params)), key_len)


# -- file adapters ---------------------------------------------------------


def read_gray_file(path) -> GrayImage:
    """Parse ``P-GRAY <width> <height> <levels>`` followed by the levels."""
    tokens = Path(path).read_text().split()
    if len(tokens) < 4 or tokens[0] != "P-GRAY":
        raise ValueError(f"{path}: missing P-GRAY header")
    width, height, levels = (int(t) for t in tokens[1:4])
    values = [int(t) for t in tokens[4:]]
    if len(values) != width * height:
        raise ValueError(f"{path}: expected {width * height} levels, found {len(values)}")
    return GrayImage(np.array(values, dtype=np.int64).reshape(height, width), levels)


def write_gray_file(path, image: GrayImage) -> None:
    lines = [f"P-GRAY {image.width} {image.height} {image.levels}"]
    lines += [" ".join(str(v) for v in row) for row in image.pixels]
    Path(path).write_text("\n".join(lines) + "\n")


def load_image(path, levels: int = DEFAULT_LEVELS) -> GrayImage:
    """Decode JPEG/BMP/PNG (or a P-GRAY file) into a quantized GrayImage."""
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(6) == b"P-GRAY":
            return read_gray_file(path)
    from PIL import Image

    with Image.open(path) as im:
        return GrayImage.from_intensities(np.asarray(im.convert("L")), levels)


# -- estimator front end ---------------------------------------------------


class GlcmFeatureExtractor(TransformerMixin, BaseEstimator):
    """Map gray matrices to the six GLCM descriptors.

    ``X`` is a sequence of 2-D arrays already quantized to ``levels``.
    Stateless: ``fit`` only validates parameters.
    """

    def __init__(self, distance=1, angle=0, levels=DEFAULT_LEVELS):
        self.distance = distance
        self.angle = angle
        self.levels = levels

    def fit(self, X=None, y=None):
        self.params_ = GlcmParams(self.distance, self.angle, self.levels)
        self.n_features_out_ = len(FEATURE_NAMES)
        return self

    def _params(self) -> GlcmParams:
        return getattr(self, "params_", None) or GlcmParams(self.distance, self.angle, self.levels)

    def transform(self, X) -> np.ndarray:
        params = self._params()
        rows = [
            extract_features(compute_glcm(GrayImage(x, params.levels), params)).as_array() for x in X
        ]
        return np.vstack(rows) if rows else np.empty((0, len(FEATURE_NAMES)))

    def get_feature_names_out(self, input_features=None):
        return np.array(FEATURE_NAMES, dtype=object)


class GlcmKeyGenerator(GlcmFeatureExtractor):
    """Map gray matrices to fixed-length decimal keys."""

    def __init__(self, distance=1, angle=0, levels=DEFAULT_LEVELS, key_len=DEFAULT_KEY_LEN):
        super().__init__(distance=distance, angle=angle, levels=levels)
        self.key_len = key_len

    def fit(self, X=None, y=None):
        super().fit(X, y)
        check_positive_int(self.key_len, "key_len")
        return self

    def transform(self, X) -> np.ndarray:
        feats = super().transform(X)
        keys = [derive_key(FeatureVector(*row), self.key_len) for row in feats]
        return np.array(keys, dtype=object)

    def get_feature_names_out(self, input_features=None):
        return np.array(["key"], dtype=object)
