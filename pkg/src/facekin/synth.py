"""Synthetic data generators with known ground truth.

Two families:

* Textured frame sequences: a band-limited random texture globally shifted
  by known per-frame displacements (resampled bilinearly from frame zero, so
  the trajectory is exact), with optional additive intensity noise. Ground
  truth is the physical displacement of every tracked point.

* Landmark sequences: a stylised 68-point face animated with smooth global
  similarity motion and small smooth deformations (real class), with forgery
  modes layered on top: per-frame white jitter on a subset of landmarks, or
  slow large-amplitude drift that warps the shape over time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfBoundsTrajectoryError
from .pyramid import sample_bilinear
from .validation import N_LANDMARKS


def _smooth_axis(arr: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    """Separable 1-d convolution along one axis with edge padding."""
    k = kernel.size
    pad = k // 2
    idx = np.clip(np.arange(-pad, arr.shape[axis] + pad), 0, arr.shape[axis] - 1)
    padded = np.take(arr, idx, axis=axis)
    out = np.zeros_like(arr)
    for i in range(k):
        sl = [slice(None)] * arr.ndim
        sl[axis] = slice(i, i + arr.shape[axis])
        out += kernel[i] * padded[tuple(sl)]
    return out


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = max(1, int(np.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-x * x / (2.0 * sigma * sigma))
    return k / k.sum()


def make_texture(
    rng: np.random.Generator,
    height: int,
    width: int,
    channels: int = 1,
    smooth_sigma: float = 1.2,
) -> np.ndarray:
    """Band-limited random texture, mean 128, clipped to [0, 255].

    White noise smoothed at two scales so both fine pyramid levels and
    coarse ones see gradients.
    """
    noise = rng.standard_normal((height, width, channels))
    fine = _smooth_axis(_smooth_axis(noise, _gaussian_kernel(smooth_sigma), 0),
                        _gaussian_kernel(smooth_sigma), 1)
    coarse_noise = rng.standard_normal((height, width, channels))
    kernel = _gaussian_kernel(4.0 * smooth_sigma)
    coarse = _smooth_axis(_smooth_axis(coarse_noise, kernel, 0), kernel, 1)
    mix = fine / fine.std() + 0.8 * coarse / coarse.std()
    mix = mix / mix.std()
    return np.clip(128.0 + 40.0 * mix, 0.0, 255.0)


def shift_image(frame: np.ndarray, displacement) -> np.ndarray:
    """Resample a frame so its content moves by `displacement` (dx, dy).

    The output at position x equals the input at x - displacement, sampled
    bilinearly with clamp-to-edge.
    """
    h, w = frame.shape[:2]
    d = np.asarray(displacement, dtype=np.float64)
    xs = np.arange(w, dtype=np.float64)[None, :] - d[0]
    ys = np.arange(h, dtype=np.float64)[:, None] - d[1]
    coords = np.empty((h, w, 2))
    coords[:, :, 0] = xs
    coords[:, :, 1] = ys
    return sample_bilinear(frame, coords)


def point_grid(height: int, width: int, margin: float, n_points: int) -> np.ndarray:
    """`n_points` points on a near-square interior grid, margin from edges."""
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    if 2 * margin >= min(height, width):
        raise ValueError("margin leaves no interior area")
    rows = int(np.ceil(np.sqrt(n_points)))
    cols = int(np.ceil(n_points / rows))
    ys = np.linspace(margin, height - 1 - margin, rows)
    xs = np.linspace(margin, width - 1 - margin, cols)
    grid = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)
    return grid[:n_points].copy()


@dataclass
class SynthMotionSpec:
    """Recipe for one textured sequence with known point motion."""

    height: int = 192
    width: int = 192
    texture_seed: int = 0
    displacements: np.ndarray = field(
        default_factory=lambda: np.zeros((1, 2))
    )                           # (T-1, 2) per-frame displacement steps
    noise_sigma: float = 0.0    # additive intensity noise per frame
    n_points: int = 4
    margin: float = 40.0
    channels: int = 1


def synth_textured_sequence(spec: SynthMotionSpec) -> tuple[list[np.ndarray], np.ndarray]:
    """Generate frames and exact ground-truth point tracks.

    Returns (frames, points) where frames is a list of T = len(steps) + 1
    float images and points is a (T, n_points, 2) array: points[t] =
    points[0] + cumulative displacement. Raises OutOfBoundsTrajectoryError
    if any true point leaves the frame.
    """
    steps = np.asarray(spec.displacements, dtype=np.float64).reshape(-1, 2)
    rng = np.random.default_rng(spec.texture_seed)
    base = make_texture(rng, spec.height, spec.width, spec.channels)
    n_frames = steps.shape[0] + 1
    cumulative = np.vstack([np.zeros(2), np.cumsum(steps, axis=0)])

    start = point_grid(spec.height, spec.width, spec.margin, spec.n_points)
    points = start[None, :, :] + cumulative[:, None, :]
    if (
        points[..., 0].min() < 0 or points[..., 0].max() > spec.width - 1
        or points[..., 1].min() < 0 or points[..., 1].max() > spec.height - 1
    ):
        raise OutOfBoundsTrajectoryError(
            "ground-truth trajectory leaves the frame; reduce displacements "
            "or enlarge the margin"
        )

    frames = []
    for t in range(n_frames):
        frame = base if t == 0 else shift_image(base, cumulative[t])
        if spec.noise_sigma > 0:
            frame = frame + rng.normal(0.0, spec.noise_sigma, frame.shape)
        frames.append(frame)
    return frames, points


@dataclass
class LabeledSequence:
    """One synthetic landmark sequence with its class label."""

    points: np.ndarray    # (T, 68, 2)
    label: int            # 0 real, 1 fake
    source_id: str


def base_face_shape() -> np.ndarray:
    """Stylised 68-point face layout (units roughly pixels, centred).

    Groups follow the common 68-point convention: jaw 17, brows 2x5, nose
    bridge 4 + base 5, eyes 2x6, outer lip 12, inner lip 8.
    """
    pts = []
    # jaw: lower half ellipse, left to right
    t = np.linspace(np.pi, 2 * np.pi, 17)
    pts += [(50 * np.cos(a), -28 * np.sin(a) + 8) for a in t]
    # brows
    for side in (-1, 1):
        xs = np.linspace(12, 38, 5) * side
        for x in (xs if side > 0 else xs):
            pts.append((x, -30 - 4 * np.cos((abs(x) - 25) / 13)))
    # nose bridge and base
    for y in np.linspace(-22, 2, 4):
        pts.append((0.0, y))
    for x in np.linspace(-8, 8, 5):
        pts.append((x, 8 + 2 * np.cos(x / 8)))
    # eyes: 6 points each
    for cx in (-24, 24):
        ang = np.linspace(0, 2 * np.pi, 6, endpoint=False)
        pts += [(cx + 9 * np.cos(a), -18 + 4 * np.sin(a)) for a in ang]
    # mouth: outer 12, inner 8
    ang = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    pts += [(16 * np.cos(a), 26 + 7 * np.sin(a)) for a in ang]
    ang = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    pts += [(9 * np.cos(a), 26 + 3.5 * np.sin(a)) for a in ang]
    shape = np.asarray(pts, dtype=np.float64)
    assert shape.shape == (N_LANDMARKS, 2)
    return shape


@dataclass
class SynthDataSpec:
    """Recipe for a labelled real/fake landmark dataset."""

    n_real: int = 500
    n_fake: int = 500
    n_frames: int = 60
    seed: int = 0
    fake_mode: str = "jitter"          # "jitter" | "drift"
    jitter_sigma: float = 0.5          # white per-frame noise on fakes (px)
    jitter_fraction: float = 0.3       # fraction of landmarks affected
    drift_amplitude: float = 4.0       # slow warp amplitude on fakes (px)
    detector_noise_sigma: float = 0.1  # detector noise on every sequence (px)
    deform_amplitude: float = 0.6      # real smooth deformation (px)
    center: tuple[float, float] = (128.0, 128.0)

    def __post_init__(self):
        if self.fake_mode not in ("jitter", "drift"):
            raise ValueError(f"fake_mode must be jitter or drift, got {self.fake_mode!r}")
        if not 0.0 <= self.jitter_fraction <= 1.0:
            raise ValueError("jitter_fraction must be within [0, 1]")


def _real_motion(rng: np.random.Generator, base: np.ndarray, spec: SynthDataSpec) -> np.ndarray:
    """Smoothly animated copy of the base shape: (T, 68, 2)."""
    t = np.arange(spec.n_frames, dtype=np.float64)
    # global translation, rotation and scale, each a slow sinusoid
    def slow_wave(amp):
        period = rng.uniform(40.0, 150.0)
        phase = rng.uniform(0.0, 2 * np.pi)
        return amp * rng.uniform(0.3, 1.0) * np.sin(2 * np.pi * t / period + phase)

    tx = slow_wave(6.0)
    ty = slow_wave(6.0)
    theta = slow_wave(0.04)
    log_scale = slow_wave(0.02)

    # small smooth per-landmark deformation
    periods = rng.uniform(25.0, 90.0, size=(N_LANDMARKS, 2))
    phases = rng.uniform(0.0, 2 * np.pi, size=(N_LANDMARKS, 2))
    amps = spec.deform_amplitude * rng.uniform(0.2, 1.0, size=(N_LANDMARKS, 2))
    deform = amps * np.sin(
        2 * np.pi * t[:, None, None] / periods + phases
    )

    shape = base[None, :, :] + deform
    cos_t = np.cos(theta) * np.exp(log_scale)
    sin_t = np.sin(theta) * np.exp(log_scale)
    x = shape[..., 0] * cos_t[:, None] - shape[..., 1] * sin_t[:, None]
    y = shape[..., 0] * sin_t[:, None] + shape[..., 1] * cos_t[:, None]
    out = np.stack([x, y], axis=-1)
    out[..., 0] += spec.center[0] + tx[:, None]
    out[..., 1] += spec.center[1] + ty[:, None]
    return out


def _apply_fake(rng: np.random.Generator, points: np.ndarray, spec: SynthDataSpec) -> np.ndarray:
    """Layer the forgery artefact onto a real motion track."""
    n_affected = max(1, int(round(spec.jitter_fraction * N_LANDMARKS)))
    affected = rng.choice(N_LANDMARKS, size=n_affected, replace=False)
    out = points.copy()
    if spec.fake_mode == "jitter":
        out[:, affected] += rng.normal(
            0.0, spec.jitter_sigma, size=(points.shape[0], n_affected, 2)
        )
    else:
        t = np.arange(points.shape[0], dtype=np.float64)
        periods = rng.uniform(30.0, 90.0, size=n_affected)
        phases = rng.uniform(0.0, 2 * np.pi, size=n_affected)
        angles = rng.uniform(0.0, 2 * np.pi, size=n_affected)
        wave = spec.drift_amplitude * np.sin(
            2 * np.pi * t[:, None] / periods + phases
        )
        out[:, affected, 0] += wave * np.cos(angles)
        out[:, affected, 1] += wave * np.sin(angles)
    return out


def synth_landmark_dataset(spec: SynthDataSpec) -> list[LabeledSequence]:
    """Generate real and fake landmark sequences.

    Real and fake sequences share the same motion and detector-noise model;
    fakes differ only by the forgery artefact, so a detector must key on
    temporal consistency rather than incidental statistics. Ordering is
    all real sequences then all fake ones, ids real-0000, fake-0000, ...
    """
    base = base_face_shape()
    total = spec.n_real + spec.n_fake
    seeds = np.random.SeedSequence(spec.seed).spawn(total)
    sequences = []
    for i in range(total):
        rng = np.random.default_rng(seeds[i])
        fake = i >= spec.n_real
        points = _real_motion(rng, base, spec)
        if fake:
            points = _apply_fake(rng, points, spec)
        if spec.detector_noise_sigma > 0:
            points = points + rng.normal(
                0.0, spec.detector_noise_sigma, size=points.shape
            )
        name = f"fake-{i - spec.n_real:04d}" if fake else f"real-{i:04d}"
        sequences.append(LabeledSequence(points=points, label=int(fake), source_id=name))
    return sequences
