"""Input validation helpers used by the public entry points."""

from __future__ import annotations

import numpy as np

N_LANDMARKS = 68


def as_frame(image: np.ndarray) -> np.ndarray:
    """Coerce an image to a float64 (height, width, channels) array.

    Accepts (H, W) or (H, W, C) with C in {1, 3}. Values must be finite.
    """
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"frame must be 2-d or 3-d, got shape {arr.shape}")
    h, w, c = arr.shape
    if h < 1 or w < 1:
        raise ValueError(f"frame must be at least 1x1, got {h}x{w}")
    if c not in (1, 3):
        raise ValueError(f"frame must have 1 or 3 channels, got {c}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("frame contains non-finite values")
    return arr


def as_point(point) -> np.ndarray:
    """Coerce to a float64 (2,) array holding (x, y)."""
    p = np.asarray(point, dtype=np.float64)
    if p.shape != (2,):
        raise ValueError(f"point must have shape (2,), got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("point contains non-finite values")
    return p


def as_landmarks(points) -> np.ndarray:
    """Coerce to a float64 (68, 2) landmark array with finite values."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.shape != (N_LANDMARKS, 2):
        raise ValueError(
            f"landmark set must have shape ({N_LANDMARKS}, 2), got {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError("landmark set contains non-finite values")
    return arr


def as_landmark_stack(points) -> np.ndarray:
    """Coerce to a float64 (n, 68, 2) array of landmark sets."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[1:] != (N_LANDMARKS, 2):
        raise ValueError(
            f"expected shape (n, {N_LANDMARKS}, 2), got {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError("landmark stack contains non-finite values")
    return arr


def check_positive(name: str, value) -> None:
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")


def check_non_negative(name: str, value) -> None:
    if value < 0:
        raise ValueError(f"{name} must be non-negative, got {value}")


def check_in_unit_interval(name: str, value) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be within [0, 1], got {value}")
