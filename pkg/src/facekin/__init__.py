"""facekin: temporal-consistency analysis of face-landmark sequences.

The pipeline tracks landmarks with pyramidal Gauss-Newton patch alignment,
calibrates detector output with a scalar-gain Kalman filter, embeds aligned
landmark clips into two feature streams (positions and their first
differences) and classifies them with a two-stream bidirectional GRU.
"""

from .calibration import (
    TrackState,
    calibrate_sequence,
    calibrate_step,
    kalman_gain,
    kalman_merge,
    relative_variance,
    update_variance,
)
from .classifier import (
    AdamState,
    Prediction,
    TrainConfig,
    TrainResult,
    TwoStreamClassifier,
    TwoStreamModel,
    adam_step,
    fuse,
    init_model,
    loss_and_grads,
    predict_clip_probs,
    predict_video,
    stream_forward,
    train,
)
from .config import RunConfig, read_run_config, write_run_config
from .dataio import (
    LandmarkSequence,
    read_landmarks,
    read_model,
    read_template,
    write_landmarks,
    write_model,
    write_template,
)
from .errors import (
    ConfigError,
    DegenerateHessianError,
    DegenerateShapeError,
    FacekinError,
    FormatVersionError,
    LandmarkParseError,
    MissingFrameError,
    OutOfBoundsTrajectoryError,
    PyramidTooDeepError,
    SequenceTooShortError,
    SingleClassError,
    TemplateMismatchError,
    WrongPointCountError,
)
from .geometry import (
    CanonicalTemplate,
    ClipSample,
    LandmarkAligner,
    SimilarityTransform,
    align_landmarks,
    build_template,
    embed_coords,
    embed_deltas,
    embed_sequence,
    segment_clips,
    similarity_transform,
)
from .gru import GruParams, bigru_forward, gru_cell, gru_forward, init_gru_params
from .metrics import MetricsReport, compute_accuracy, compute_auc
from .pipeline import pipeline_detect, train_pipeline
from .pyramid import Patch, build_pyramid, extract_patch, sample_bilinear
from .synth import (
    LabeledSequence,
    SynthDataSpec,
    SynthMotionSpec,
    synth_landmark_dataset,
    synth_textured_sequence,
)
from .tracking import (
    LKConfig,
    LKSolverContext,
    TrackResult,
    compute_jacobian,
    forward_backward_check,
    lk_refine,
    lk_solve_step,
    pyramidal_lk,
    track_point,
)

__version__ = "0.1.0"
