"""End-to-end flows shared by the command line and the test harness:
track, calibrate, embed, train, evaluate and detect."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .calibration import calibrate_sequence
from .classifier import (
    Prediction,
    TrainResult,
    TwoStreamModel,
    predict_clip_probs,
    predict_video,
    train,
)
from .config import RunConfig
from .dataio import LandmarkSequence, read_landmarks, read_model
from .errors import (
    FacekinError,
    MissingFrameError,
    SequenceTooShortError,
    TemplateMismatchError,
)
from .frames import read_frame_dir
from .geometry import (
    CanonicalTemplate,
    ClipSample,
    build_template,
    embed_sequence,
    segment_clips,
)
from .metrics import MetricsReport, build_report
from .pyramid import build_pyramid
from .synth import LabeledSequence
from .tracking import track_point

logger = logging.getLogger(__name__)


def match_frames(frames_by_number: dict[int, np.ndarray], sequence: LandmarkSequence) -> list[np.ndarray]:
    """Frame image for every landmark record, by frame number."""
    frames = []
    for index in sequence.frame_indices:
        if int(index) not in frames_by_number:
            raise MissingFrameError(f"no frame image for landmark record {int(index)}")
        frames.append(frames_by_number[int(index)])
    return frames


def track_sequence(
    frames_by_number: dict[int, np.ndarray],
    sequence: LandmarkSequence,
    config: RunConfig = RunConfig(),
) -> LandmarkSequence:
    """Chain raw tracking from the first landmark record through all frames.

    No detector fusion: each frame's points are the tracked positions of the
    previous frame's points (invalid points keep the forward prediction).
    The output carries a validity bitmap; the first record is the input.
    """
    if len(sequence) == 0:
        raise ValueError("landmark sequence is empty")
    lk = config.lk_config()
    numbers = sorted(frames_by_number)
    start = int(sequence.frame_indices[0])
    if start not in frames_by_number:
        raise MissingFrameError(f"no frame image for landmark record {start}")
    numbers = [n for n in numbers if n >= start]
    min_dim = lk.patch_size
    pyramids = {
        n: build_pyramid(frames_by_number[n], lk.levels, min_dim=min_dim)
        for n in numbers
    }
    points = [sequence.points[0]]
    validity = [np.ones(sequence.points.shape[1], dtype=bool)]
    indices = [start]
    for prev_n, next_n in zip(numbers[:-1], numbers[1:]):
        prev_pts = points[-1]
        next_pts = np.empty_like(prev_pts)
        valid = np.zeros(prev_pts.shape[0], dtype=bool)
        for j in range(prev_pts.shape[0]):
            result = track_point(pyramids[prev_n], pyramids[next_n], prev_pts[j], lk)
            next_pts[j] = result.point_next
            valid[j] = result.valid
        points.append(next_pts)
        validity.append(valid)
        indices.append(next_n)
    return LandmarkSequence(
        frame_indices=np.array(indices),
        points=np.stack(points),
        validity=np.stack(validity),
    )


def calibrate_from_files(
    frames_dir, landmarks_path, config: RunConfig = RunConfig()
) -> LandmarkSequence:
    """Read a frame directory plus detections and calibrate the sequence."""
    sequence = read_landmarks(landmarks_path)
    frames = match_frames(read_frame_dir(frames_dir), sequence)
    calibrated, validity = calibrate_sequence(
        frames, sequence.points, config.lk_config(), config.kalman_q
    )
    return LandmarkSequence(
        frame_indices=sequence.frame_indices.copy(),
        points=calibrated,
        validity=validity,
    )


def dataset_from_dir(data_dir) -> list[LabeledSequence]:
    """Load a labelled dataset laid out as <dir>/real/*.txt (+ fake/)."""
    sequences: list[LabeledSequence] = []
    found_any = False
    for label, sub in ((0, "real"), (1, "fake")):
        sub_dir = os.path.join(data_dir, sub)
        if not os.path.isdir(sub_dir):
            continue
        for name in sorted(os.listdir(sub_dir)):
            if not name.endswith(".txt"):
                continue
            found_any = True
            seq = read_landmarks(os.path.join(sub_dir, name))
            if len(seq) == 0:
                logger.warning("skipping empty landmark file %s/%s", sub, name)
                continue
            sequences.append(
                LabeledSequence(
                    points=seq.points,
                    label=label,
                    source_id=f"{sub}/{os.path.splitext(name)[0]}",
                )
            )
    if not found_any:
        raise FileNotFoundError(
            f"no landmark files under {data_dir!r} (expected real/ and fake/ subdirectories)"
        )
    return sequences


def clips_from_sequences(
    sequences: list[LabeledSequence],
    template: CanonicalTemplate,
    length: int,
    stride: int | None = None,
) -> list[ClipSample]:
    """Align, embed and window every sequence."""
    clips: list[ClipSample] = []
    for seq in sequences:
        coords = embed_sequence(seq.points, template)
        clips.extend(
            segment_clips(
                coords, length=length, stride=stride,
                label=seq.label, source_id=seq.source_id,
            )
        )
    return clips


def build_template_from_sequences(sequences: list[LabeledSequence]) -> CanonicalTemplate:
    """Generalised Procrustes template over every frame of every sequence."""
    stack = np.concatenate([seq.points for seq in sequences], axis=0)
    return build_template(stack)


@dataclass
class TrainedPipeline:
    model: TwoStreamModel
    template: CanonicalTemplate
    result: TrainResult
    clips: list[ClipSample]


def train_pipeline(
    sequences: list[LabeledSequence], config: RunConfig = RunConfig()
) -> TrainedPipeline:
    """Template + clips + trained model from labelled landmark sequences."""
    template = build_template_from_sequences(sequences)
    clips = clips_from_sequences(
        sequences, template, config.clip_length, config.effective_stride
    )
    result = train(clips, config.train_config())
    model = result.model
    model.template_points = template.points.copy()
    model.template_provenance = template.provenance
    return TrainedPipeline(model=model, template=template, result=result, clips=clips)


def model_template(
    model: TwoStreamModel, override: CanonicalTemplate | None = None
) -> CanonicalTemplate:
    """Template to align against for a model, validating provenance."""
    if override is not None:
        if (
            model.template_provenance
            and override.provenance
            and override.provenance != model.template_provenance
        ):
            raise TemplateMismatchError(
                f"template {override.provenance!r} does not match the model's "
                f"training template {model.template_provenance!r}"
            )
        return override
    if model.template_points is None:
        raise TemplateMismatchError(
            "model file carries no template; pass one explicitly"
        )
    return CanonicalTemplate(
        points=model.template_points, provenance=model.template_provenance
    )


def evaluate_clips(model: TwoStreamModel, clips: list[ClipSample]) -> MetricsReport:
    """Score labelled clips and aggregate to per-video metrics."""
    if not clips:
        raise ValueError("no clips to evaluate")
    probs = predict_clip_probs(model, clips)
    clip_p = probs["fused"]
    clip_labels = np.array([c.label for c in clips])
    clip_ids = [f"{c.source_id}#{c.start}" for c in clips]

    by_video: dict[str, list[int]] = {}
    for i, clip in enumerate(clips):
        by_video.setdefault(clip.source_id, []).append(i)
    video_ids = sorted(by_video)
    video_p = [float(np.mean(clip_p[by_video[v]])) for v in video_ids]
    video_labels = [int(clip_labels[by_video[v][0]]) for v in video_ids]
    return build_report(clip_ids, clip_labels, clip_p, video_ids, video_labels, video_p)


def pipeline_detect(
    model: TwoStreamModel,
    frames_by_number: dict[int, np.ndarray],
    sequence: LandmarkSequence,
    config: RunConfig = RunConfig(),
    template: CanonicalTemplate | None = None,
) -> Prediction:
    """Full detection flow for one video.

    Calibrates the detections against the frames, aligns and embeds them
    with the model's template, cuts clips of the model's input length and
    averages the clip predictions. Raises SequenceTooShortError when the
    video is shorter than one clip.
    """
    tpl = model_template(model, template)
    if len(sequence) < model.input_length:
        raise SequenceTooShortError(
            f"video has {len(sequence)} landmark records, need {model.input_length}"
        )
    frames = match_frames(frames_by_number, sequence)
    calibrated, _ = calibrate_sequence(
        frames, sequence.points, config.lk_config(), config.kalman_q
    )
    coords = embed_sequence(calibrated, tpl)
    clips = segment_clips(coords, length=model.input_length)
    if not clips:
        raise SequenceTooShortError("video yields no full-length clips")
    return predict_video(model, clips)


def _detect_one(args) -> dict:
    video_dir, model_path, config, template = args
    model = read_model(model_path)
    return detect_video_dir(video_dir, model, config, template)


def detect_video_dir(
    video_dir,
    model: TwoStreamModel,
    config: RunConfig = RunConfig(),
    template: CanonicalTemplate | None = None,
) -> dict:
    """Detect one video laid out as <dir>/frames/ + <dir>/landmarks.txt.

    Returns a report row dict; failures are captured in the "error" field
    so batch runs continue.
    """
    video_id = os.path.basename(os.path.normpath(video_dir))
    row = {
        "video_id": video_id, "n_clips": 0, "p_fake": "", "p_fake_coords": "",
        "p_fake_deltas": "", "label": "", "error": "",
    }
    try:
        sequence = read_landmarks(os.path.join(video_dir, "landmarks.txt"))
        frames = read_frame_dir(os.path.join(video_dir, "frames"))
        prediction = pipeline_detect(model, frames, sequence, config, template)
    except (FacekinError, FileNotFoundError, ValueError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    row.update(
        n_clips=prediction.n_clips,
        p_fake=prediction.p_fake,
        p_fake_coords="" if prediction.p_fake_coords is None else prediction.p_fake_coords,
        p_fake_deltas="" if prediction.p_fake_deltas is None else prediction.p_fake_deltas,
        label=prediction.label,
    )
    return row


def detect_batch(
    root,
    model_path,
    config: RunConfig = RunConfig(),
    template: CanonicalTemplate | None = None,
) -> list[dict]:
    """Detect every video subdirectory under `root`, optionally in parallel.

    Rows come back sorted by video id regardless of completion order, so
    output is deterministic for any jobs count.
    """
    video_dirs = sorted(
        os.path.join(root, name)
        for name in os.listdir(root)
        if os.path.isdir(os.path.join(root, name))
    )
    if not video_dirs:
        raise FileNotFoundError(f"no video subdirectories under {root!r}")
    if config.jobs <= 1:
        model = read_model(model_path)
        rows = [detect_video_dir(d, model, config, template) for d in video_dirs]
    else:
        tasks = [(d, model_path, config, template) for d in video_dirs]
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(_detect_one, tasks))
    return sorted(rows, key=lambda r: r["video_id"])
