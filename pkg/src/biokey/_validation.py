"""Input validation helpers shared by the estimators and the CLI."""

from __future__ import annotations

import numbers

import numpy as np

ANGLES = (0, 45, 90, 135)


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_angle(angle) -> int:
    if angle not in ANGLES:
        raise ValueError(f"angle must be one of {ANGLES}, got {angle!r}")
    return int(angle)


def check_gray_matrix(pixels, levels: int) -> np.ndarray:
    """Return ``pixels`` as a 2-D int array with every value in [0, levels)."""
    arr = np.asarray(pixels)
    if arr.ndim != 2:
        raise ValueError(f"gray matrix must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 2 or arr.shape[1] < 2:
        raise ValueError(f"gray matrix must be at least 2x2, got {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise ValueError("gray levels must be integers")
    arr = arr.astype(np.int64)
    if arr.min() < 0 or arr.max() >= levels:
        raise ValueError(f"gray levels must lie in [0, {levels - 1}]")
    return arr


def check_bits(bits, length: int | None = None, name: str = "bits") -> np.ndarray:
    arr = np.asarray(bits, dtype=np.uint8).ravel()
    if arr.size and arr.max() > 1:
        raise ValueError(f"{name} must contain only 0/1")
    if length is not None and arr.size != length:
        from .errors import LengthMismatch

        raise LengthMismatch(f"{name} has length {arr.size}, expected {length}")
    return arr
