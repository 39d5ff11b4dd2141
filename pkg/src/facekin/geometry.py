"""Geometric normalisation of landmark sets and clip embedding.

Landmark sets are aligned to a canonical template with a least-squares
similarity transform (rotation, isotropic scale, translation; no
reflection). Aligned sets flatten into per-frame feature vectors; windows of
consecutive frames become fixed-length clips carrying the vectors and their
first differences.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .errors import DegenerateShapeError
from .validation import N_LANDMARKS, as_landmarks, as_landmark_stack

logger = logging.getLogger(__name__)

FEATURE_DIM = 2 * N_LANDMARKS  # 136

DEFAULT_CLIP_LENGTH = 60

_DEGENERATE_SPREAD = 1e-12


@dataclass(frozen=True)
class SimilarityTransform:
    """2-d similarity p -> a * p + b in complex form (a: rotation + scale)."""

    a: complex
    b: complex

    @property
    def scale(self) -> float:
        return abs(self.a)

    @property
    def rotation(self) -> float:
        return float(np.angle(self.a))

    def apply(self, points: np.ndarray) -> np.ndarray:
        z = points[..., 0] + 1j * points[..., 1]
        out = self.a * z + self.b
        return np.stack([out.real, out.imag], axis=-1)


def similarity_transform(source: np.ndarray, target: np.ndarray) -> SimilarityTransform:
    """Least-squares similarity mapping source points onto target points.

    Closed form in complex coordinates: with centred sources s and targets t,
    a = sum(conj(s) t) / sum(|s|^2) and b places the centroids. Raises
    DegenerateShapeError when the source points (nearly) coincide.
    """
    source = as_landmarks(source)
    target = as_landmarks(target)
    s = source[:, 0] + 1j * source[:, 1]
    t = target[:, 0] + 1j * target[:, 1]
    mu_s = s.mean()
    mu_t = t.mean()
    sc = s - mu_s
    denom = float(np.sum(sc.real**2 + sc.imag**2))
    if denom < _DEGENERATE_SPREAD:
        raise DegenerateShapeError("source landmarks are (nearly) coincident")
    a = complex(np.sum(np.conj(sc) * (t - mu_t)) / denom)
    b = mu_t - a * mu_s
    return SimilarityTransform(a=a, b=b)


def align_landmarks(points: np.ndarray, template: np.ndarray) -> np.ndarray:
    """Align one landmark set to a template by least-squares similarity."""
    return similarity_transform(points, template).apply(as_landmarks(points))


def _normalize_shape(points: np.ndarray) -> np.ndarray:
    """Centre on the centroid and scale to unit root-mean-square radius."""
    centred = points - points.mean(axis=0)
    rms = float(np.sqrt(np.mean(np.sum(centred**2, axis=1))))
    if rms < _DEGENERATE_SPREAD:
        raise DegenerateShapeError("landmark set is (nearly) a single point")
    return centred / rms


@dataclass
class CanonicalTemplate:
    """Canonical landmark arrangement: centroid at the origin, unit RMS radius.

    provenance identifies the training corpus the template was built from, so
    models and templates from different runs are not silently mixed.
    """

    points: np.ndarray     # (68, 2)
    provenance: str = ""


def _template_provenance(points: np.ndarray, n_shapes: int) -> str:
    digest = hashlib.sha256(np.round(points, 9).tobytes()).hexdigest()[:12]
    return f"gpa-{n_shapes}-{digest}"


def build_template(
    shapes, max_iters: int = 10, tol: float = 1e-9
) -> CanonicalTemplate:
    """Generalised Procrustes mean of many landmark sets.

    Iteratively aligns every set to the current reference and renormalises
    the mean until it stops moving. The result has centroid zero and unit
    RMS radius; its orientation follows the first input shape.
    """
    stack = as_landmark_stack(shapes)
    if stack.shape[0] == 0:
        raise ValueError("cannot build a template from zero landmark sets")
    reference = _normalize_shape(stack[0])
    for _ in range(max_iters):
        aligned = np.stack([align_landmarks(s, reference) for s in stack])
        updated = _normalize_shape(aligned.mean(axis=0))
        shift = float(np.max(np.abs(updated - reference)))
        reference = updated
        if shift < tol:
            break
    return CanonicalTemplate(
        points=reference,
        provenance=_template_provenance(reference, stack.shape[0]),
    )


def embed_coords(aligned: np.ndarray) -> np.ndarray:
    """Flatten an aligned landmark set to (136,): x1, y1, ..., x68, y68."""
    return as_landmarks(aligned).reshape(-1)


def embed_deltas(coords: np.ndarray) -> np.ndarray:
    """First differences along time of a (T, 136) feature matrix -> (T-1, 136)."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != FEATURE_DIM:
        raise ValueError(f"expected shape (T, {FEATURE_DIM}), got {coords.shape}")
    if coords.shape[0] < 2:
        raise ValueError("need at least 2 frames to take differences")
    return np.diff(coords, axis=0)


def embed_sequence(points: np.ndarray, template: CanonicalTemplate | np.ndarray) -> np.ndarray:
    """Align every frame of a (T, 68, 2) sequence and flatten to (T, 136)."""
    stack = as_landmark_stack(points)
    tpl = template.points if isinstance(template, CanonicalTemplate) else template
    out = np.empty((stack.shape[0], FEATURE_DIM), dtype=np.float64)
    for t in range(stack.shape[0]):
        out[t] = align_landmarks(stack[t], tpl).reshape(-1)
    return out


@dataclass
class ClipSample:
    """One fixed-length training clip.

    coords holds the per-frame aligned feature vectors (length, 136);
    deltas holds their first differences (length - 1, 136), so deltas[i] =
    coords[i+1] - coords[i] exactly. label is 0 for real, 1 for fake, None
    when unknown. source_id ties clips back to the video they were cut from.
    """

    coords: np.ndarray
    deltas: np.ndarray
    label: int | None = None
    source_id: str = ""
    start: int = 0


def segment_clips(
    coords: np.ndarray,
    length: int = DEFAULT_CLIP_LENGTH,
    stride: int | None = None,
    label: int | None = None,
    source_id: str = "",
) -> list[ClipSample]:
    """Cut a (T, 136) feature matrix into non-overlapping fixed-length clips.

    stride defaults to length (back-to-back windows). A sequence shorter
    than one clip yields an empty list; trailing frames that do not fill a
    window are dropped.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != FEATURE_DIM:
        raise ValueError(f"expected shape (T, {FEATURE_DIM}), got {coords.shape}")
    if length < 2:
        raise ValueError(f"clip length must be >= 2, got {length}")
    if stride is None:
        stride = length
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    n = coords.shape[0]
    if n < length:
        logger.warning(
            "sequence %s has %d frames, shorter than one clip of %d; skipped",
            source_id or "<unnamed>", n, length,
        )
        return []
    clips = []
    for start in range(0, n - length + 1, stride):
        window = coords[start:start + length].copy()
        clips.append(
            ClipSample(
                coords=window,
                deltas=np.diff(window, axis=0),
                label=label,
                source_id=source_id,
                start=start,
            )
        )
    return clips


class LandmarkAligner(BaseEstimator, TransformerMixin):
    """Transformer aligning landmark sets to a canonical template.

    fit() builds the template from the training sets by generalised
    Procrustes analysis (or adopts the one passed as `template`); transform()
    aligns each input set to it.
    """

    def __init__(self, template: CanonicalTemplate | None = None, gpa_iters: int = 10):
        self.template = template
        self.gpa_iters = gpa_iters

    def fit(self, X, y=None):
        if self.template is not None:
            self.template_ = self.template
        else:
            self.template_ = build_template(X, max_iters=self.gpa_iters)
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "template_"):
            raise NotFittedError("LandmarkAligner must be fitted before transform")
        stack = as_landmark_stack(X)
        return np.stack(
            [align_landmarks(s, self.template_.points) for s in stack]
        )
