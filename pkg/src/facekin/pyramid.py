"""Image pyramids, subpixel bilinear sampling and weighted patch extraction.

All sampling is clamp-to-edge: coordinates are clipped to the valid pixel
grid before interpolation, so samples never read outside the image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PyramidTooDeepError
from .validation import as_frame


def _downsample(level: np.ndarray) -> np.ndarray:
    """Halve a level by 2x2 box averaging; odd edges are clamp-replicated."""
    h, w = level.shape[:2]
    if h % 2:
        level = np.concatenate([level, level[-1:]], axis=0)
    if w % 2:
        level = np.concatenate([level, level[:, -1:]], axis=1)
    return 0.25 * (
        level[0::2, 0::2]
        + level[1::2, 0::2]
        + level[0::2, 1::2]
        + level[1::2, 1::2]
    )


def build_pyramid(frame: np.ndarray, levels: int, min_dim: int = 1) -> list[np.ndarray]:
    """Build an image pyramid with `levels + 1` levels.

    Level 0 is the input frame; level L+1 has ceil(level L / 2) dimensions and
    holds 2x2 block means. Raises PyramidTooDeepError if any level would be
    smaller than `min_dim` on either axis (callers tracking with patches pass
    the full patch size here).
    """
    frame = as_frame(frame)
    if levels < 0:
        raise ValueError(f"levels must be >= 0, got {levels}")
    if min_dim < 1:
        raise ValueError(f"min_dim must be >= 1, got {min_dim}")
    pyramid = [frame]
    for level in range(levels):
        nxt = _downsample(pyramid[-1])
        if min(nxt.shape[:2]) < min_dim:
            raise PyramidTooDeepError(
                f"level {level + 1} would be {nxt.shape[0]}x{nxt.shape[1]}, "
                f"smaller than the minimum {min_dim} pixels"
            )
        pyramid.append(nxt)
    return pyramid


def sample_bilinear(frame: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Sample a frame at subpixel (x, y) positions with bilinear interpolation.

    Parameters
    ----------
    frame : (H, W, C) array
    points : (..., 2) array of (x, y) coordinates

    Returns
    -------
    (..., C) array of interpolated values. Coordinates are clamped to
    [0, W-1] x [0, H-1] before interpolation.
    """
    h, w = frame.shape[:2]
    pts = np.asarray(points, dtype=np.float64)
    x = np.clip(pts[..., 0], 0.0, w - 1.0)
    y = np.clip(pts[..., 1], 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    top = frame[y0, x0] * (1.0 - fx) + frame[y0, x1] * fx
    bottom = frame[y1, x0] * (1.0 - fx) + frame[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def patch_weights(half_size: int, sigma: float) -> np.ndarray:
    """Gaussian patch weights exp(-(dx^2 + dy^2) / (2 sigma^2)).

    Returns a (2w+1, 2w+1) array over the integer offset grid, row-major in
    (dy, dx) with dy and dx running from -w to +w.
    """
    if half_size < 1:
        raise ValueError(f"half_size must be >= 1, got {half_size}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    offsets = np.arange(-half_size, half_size + 1, dtype=np.float64)
    dist_sq = offsets[:, None] ** 2 + offsets[None, :] ** 2
    return np.exp(-dist_sq / (2.0 * sigma * sigma))


@dataclass
class Patch:
    """A weighted square patch sampled around a (possibly subpixel) center."""

    center: np.ndarray        # (2,) x, y
    half_size: int
    sigma: float
    values: np.ndarray        # (2w+1, 2w+1, C)
    weights: np.ndarray       # (2w+1, 2w+1)


def patch_grid(center: np.ndarray, half_size: int) -> np.ndarray:
    """Integer-offset sample grid around a center: (2w+1, 2w+1, 2) of (x, y)."""
    offs = np.arange(-half_size, half_size + 1, dtype=np.float64)
    grid = np.empty((offs.size, offs.size, 2), dtype=np.float64)
    grid[:, :, 0] = center[0] + offs[None, :]
    grid[:, :, 1] = center[1] + offs[:, None]
    return grid


def extract_patch(frame: np.ndarray, center, half_size: int, sigma: float) -> Patch:
    """Extract a Gaussian-weighted patch of size (2w+1)^2 around `center`.

    Sample positions are center + integer offsets; values are bilinear
    samples with clamp-to-edge behaviour, so the patch is defined even when
    it overlaps the image border.
    """
    frame = as_frame(frame)
    c = np.asarray(center, dtype=np.float64)
    if c.shape != (2,):
        raise ValueError(f"center must have shape (2,), got {c.shape}")
    values = sample_bilinear(frame, patch_grid(c, half_size))
    return Patch(
        center=c,
        half_size=half_size,
        sigma=sigma,
        values=values,
        weights=patch_weights(half_size, sigma),
    )
