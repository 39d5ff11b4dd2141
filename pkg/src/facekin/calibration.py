"""Scalar-gain Kalman calibration of landmark sequences.

Each landmark coordinate is filtered independently. Per frame, a landmark is
tracked from its previous calibrated position to get a prediction; the
detector's output for the new frame is then merged with that prediction using
a gain driven by the detection's apparent jitter relative to the prediction.
Landmarks whose tracking fails validation fall back to the raw detection and
their variance state is reset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pyramid import build_pyramid
from .tracking import LKConfig, TrackResult, track_points
from .validation import N_LANDMARKS, as_frame, as_landmarks

DEFAULT_PROCESS_NOISE = 0.3

RATIO_FLOOR = 1e-6
RATIO_CLAMP = 10.0


def relative_variance(x_prev, x_detected, x_predicted):
    """Apparent detection jitter: |x_det - x_prev| / |x_pred - x_prev|.

    Component-wise on arrays. The denominator magnitude is floored at 1e-6
    and the ratio is clamped to [0, 10]. A detection that moves much more
    than the tracked prediction scores high (low trust); one that moves the
    same amount scores 1.
    """
    num = np.abs(np.asarray(x_detected, dtype=np.float64) - x_prev)
    den = np.abs(np.asarray(x_predicted, dtype=np.float64) - x_prev)
    den = np.maximum(den, RATIO_FLOOR)
    return np.minimum(num / den, RATIO_CLAMP)


def kalman_gain(variance, detection_variance):
    """Gain K = P / (P + D). D = 0 yields 1 (fully trust the detection)."""
    variance = np.asarray(variance, dtype=np.float64)
    return variance / (variance + detection_variance)


def kalman_merge(x_predicted, x_detected, gain):
    """Merged estimate x_pred + K (x_det - x_pred); K in [0, 1] keeps the
    result inside the interval spanned by prediction and detection."""
    x_predicted = np.asarray(x_predicted, dtype=np.float64)
    return x_predicted + gain * (np.asarray(x_detected, dtype=np.float64) - x_predicted)


def update_variance(variance, gain, process_noise):
    """Posterior variance recursion P <- (1 - K) P + Q."""
    return (1.0 - np.asarray(gain, dtype=np.float64)) * variance + process_noise


@dataclass
class TrackState:
    """Per-landmark, per-coordinate variance state carried across frames."""

    variance: np.ndarray                      # (68, 2)
    process_noise: float = DEFAULT_PROCESS_NOISE

    @classmethod
    def initial(cls, process_noise: float = DEFAULT_PROCESS_NOISE) -> "TrackState":
        if process_noise <= 0:
            raise ValueError(f"process_noise must be positive, got {process_noise}")
        return cls(
            variance=np.full((N_LANDMARKS, 2), process_noise, dtype=np.float64),
            process_noise=process_noise,
        )


@dataclass
class CalibrationStep:
    """One calibrated frame: merged landmarks plus per-landmark validity."""

    points: np.ndarray        # (68, 2)
    state: TrackState
    valid: np.ndarray         # (68,) bool, True where tracking passed checks
    track_results: list[TrackResult] = field(default_factory=list)


def calibrate_step(
    points_prev: np.ndarray,
    detections_next: np.ndarray,
    frame_prev: np.ndarray,
    frame_next: np.ndarray,
    state: TrackState,
    lk_config: LKConfig = LKConfig(),
) -> CalibrationStep:
    """Calibrate the landmarks of one new frame.

    points_prev are the previous frame's calibrated landmarks; they are
    tracked into frame_next and merged per coordinate with detections_next.
    Landmarks that fail tracking validation pass the raw detection through
    and have their variance reset to the initial value.
    """
    min_dim = lk_config.patch_size
    pyr_prev = build_pyramid(as_frame(frame_prev), lk_config.levels, min_dim=min_dim)
    pyr_next = build_pyramid(as_frame(frame_next), lk_config.levels, min_dim=min_dim)
    return _calibrate_step_pyramids(
        points_prev, detections_next, pyr_prev, pyr_next, state, lk_config
    )


def _calibrate_step_pyramids(
    points_prev: np.ndarray,
    detections_next: np.ndarray,
    pyr_prev: list[np.ndarray],
    pyr_next: list[np.ndarray],
    state: TrackState,
    lk_config: LKConfig,
) -> CalibrationStep:
    points_prev = as_landmarks(points_prev)
    detections = as_landmarks(detections_next)
    results = track_points(pyr_prev, pyr_next, points_prev, lk_config)
    valid = np.array([r.valid for r in results])
    predicted = np.array([r.point_next for r in results])

    q = state.process_noise
    ratio = relative_variance(points_prev, detections, predicted)
    gain = kalman_gain(state.variance, ratio)
    merged = np.where(
        valid[:, None], kalman_merge(predicted, detections, gain), detections
    )
    variance = np.where(
        valid[:, None], update_variance(state.variance, gain, q), q
    )
    return CalibrationStep(
        points=merged,
        state=TrackState(variance=variance, process_noise=q),
        valid=valid,
        track_results=results,
    )


def calibrate_sequence(
    frames: list[np.ndarray],
    detections: np.ndarray,
    lk_config: LKConfig = LKConfig(),
    process_noise: float = DEFAULT_PROCESS_NOISE,
) -> tuple[np.ndarray, np.ndarray]:
    """Calibrate a whole sequence of per-frame landmark detections.

    Parameters
    ----------
    frames : list of (H, W, C) arrays, one per landmark record, in order
    detections : (T, 68, 2) raw detector output

    Returns
    -------
    (calibrated, validity): (T, 68, 2) float array and (T, 68) bool array.
    The first frame passes through unchanged with all landmarks valid.
    """
    detections = np.asarray(detections, dtype=np.float64)
    if detections.ndim != 3 or detections.shape[1:] != (N_LANDMARKS, 2):
        raise ValueError(
            f"detections must have shape (T, {N_LANDMARKS}, 2), got {detections.shape}"
        )
    if len(frames) != detections.shape[0]:
        raise ValueError(
            f"got {len(frames)} frames for {detections.shape[0]} landmark records"
        )
    n = detections.shape[0]
    if n == 0:
        return detections.copy(), np.zeros((0, N_LANDMARKS), dtype=bool)

    calibrated = np.empty_like(detections)
    validity = np.ones((n, N_LANDMARKS), dtype=bool)
    calibrated[0] = detections[0]
    state = TrackState.initial(process_noise)
    min_dim = lk_config.patch_size
    pyr_prev = build_pyramid(as_frame(frames[0]), lk_config.levels, min_dim=min_dim)
    for t in range(1, n):
        pyr_next = build_pyramid(as_frame(frames[t]), lk_config.levels, min_dim=min_dim)
        step = _calibrate_step_pyramids(
            calibrated[t - 1], detections[t], pyr_prev, pyr_next, state, lk_config
        )
        calibrated[t] = step.points
        validity[t] = step.valid
        state = step.state
        pyr_prev = pyr_next
    return calibrated, validity
