"""Reading and writing frame images.

Videos are directories of lossless raster files whose filenames are the
zero-padded frame numbers, so lexical order equals temporal order. Frames are
held in memory as float64 (height, width, channels) arrays.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .validation import as_frame

FRAME_EXTENSIONS = (".png", ".bmp", ".tif", ".tiff", ".pgm", ".ppm")


def read_frame(path: str | os.PathLike) -> np.ndarray:
    """Read one raster file into a float64 (H, W, C) array."""
    with Image.open(path) as img:
        if img.mode == "L":
            arr = np.asarray(img, dtype=np.float64)[:, :, None]
        elif img.mode == "RGB":
            arr = np.asarray(img, dtype=np.float64)
        else:
            converted = img.convert("L" if img.mode in ("1", "I", "I;16") else "RGB")
            arr = np.asarray(converted, dtype=np.float64)
            if arr.ndim == 2:
                arr = arr[:, :, None]
    return as_frame(arr)


def write_frame(path: str | os.PathLike, frame: np.ndarray) -> None:
    """Write a frame as an 8-bit grayscale or RGB raster file."""
    arr = as_frame(frame)
    data = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    if data.shape[2] == 1:
        img = Image.fromarray(data[:, :, 0], mode="L")
    else:
        img = Image.fromarray(data, mode="RGB")
    img.save(path)


def read_frame_dir(path: str | os.PathLike) -> dict[int, np.ndarray]:
    """Read a frame directory into a {frame_number: frame} mapping.

    Filenames must be numeric (zero padding allowed); the parsed number is the
    frame number used to match landmark records.
    """
    entries = sorted(
        e for e in os.listdir(path)
        if os.path.splitext(e)[1].lower() in FRAME_EXTENSIONS
    )
    if not entries:
        raise FileNotFoundError(f"no frame images found in {path}")
    frames: dict[int, np.ndarray] = {}
    for name in entries:
        stem = os.path.splitext(name)[0]
        try:
            number = int(stem)
        except ValueError:
            raise ValueError(
                f"frame filename {name!r} is not a zero-padded frame number"
            ) from None
        frames[number] = read_frame(os.path.join(path, name))
    return frames


def write_frame_dir(path: str | os.PathLike, frames, start: int = 1, pad: int = 6) -> None:
    """Write frames as zero-padded PNG files <path>/<number>.png."""
    os.makedirs(path, exist_ok=True)
    for offset, frame in enumerate(frames):
        write_frame(os.path.join(path, f"{start + offset:0{pad}d}.png"), frame)
