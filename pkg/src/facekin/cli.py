"""Command line interface.

Subcommands: track, calibrate, embed, synth, train, eval, detect. Global
flags (--config, --seed, --jobs, --verbose) may appear after the subcommand
name. Numeric tunables live in the config file; flags override it.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import pipeline
from .config import RunConfig, read_run_config
from .dataio import (
    LandmarkSequence,
    read_key_value_lines,
    read_landmarks,
    read_model,
    read_template,
    write_csv,
    write_landmarks,
    write_model,
    write_template,
)
from .errors import ConfigError, FacekinError
from .frames import read_frame_dir, write_frame_dir
from .geometry import align_landmarks
from .metrics import MetricsReport
from .synth import SynthDataSpec, SynthMotionSpec, point_grid, synth_landmark_dataset, synth_textured_sequence
from .validation import N_LANDMARKS

logger = logging.getLogger("facekin")


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--seed", type=int, help="override the run seed")
    parser.add_argument("--jobs", type=int, help="worker processes for batch detect")
    parser.add_argument("--verbose", "-v", action="store_true", help="info logging")


def _load_config(args) -> RunConfig:
    config = read_run_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.jobs is not None:
        config = replace(config, jobs=args.jobs)
    return config


def _lk_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lk-window", type=int, help="patch half size in pixels")
    parser.add_argument("--lk-sigma", type=float, help="patch weight falloff")
    parser.add_argument("--levels", type=int, help="pyramid levels")
    parser.add_argument(
        "--fb-threshold", type=float, help="forward-backward rejection threshold"
    )


def _apply_lk_overrides(config: RunConfig, args) -> RunConfig:
    mapping = {
        "lk_window": "lk_half_size",
        "lk_sigma": "lk_sigma",
        "levels": "lk_levels",
        "fb_threshold": "lk_fb_threshold",
    }
    updates = {
        field: getattr(args, attr)
        for attr, field in mapping.items()
        if getattr(args, attr, None) is not None
    }
    return replace(config, **updates) if updates else config


def _cmd_track(args) -> int:
    config = _apply_lk_overrides(_load_config(args), args)
    sequence = read_landmarks(args.landmarks)
    frames = read_frame_dir(args.frames)
    tracked = pipeline.track_sequence(frames, sequence, config)
    write_landmarks(args.out, tracked)
    n_valid = int(tracked.validity.sum())
    print(
        f"tracked {len(tracked)} frames, {n_valid}/{tracked.validity.size} "
        f"valid landmark steps -> {args.out}"
    )
    return 0


def _cmd_calibrate(args) -> int:
    config = _apply_lk_overrides(_load_config(args), args)
    if args.q is not None:
        config = replace(config, kalman_q=args.q)
    calibrated = pipeline.calibrate_from_files(args.frames, args.landmarks, config)
    write_landmarks(args.out, calibrated)
    n_valid = int(calibrated.validity.sum())
    print(
        f"calibrated {len(calibrated)} frames, {n_valid}/{calibrated.validity.size} "
        f"tracked landmark steps -> {args.out}"
    )
    return 0


def _cmd_embed(args) -> int:
    template = read_template(args.template)
    sequence = read_landmarks(args.landmarks)
    aligned = np.stack(
        [align_landmarks(p, template.points) for p in sequence.points]
    ) if len(sequence) else sequence.points
    write_landmarks(
        args.out,
        LandmarkSequence(
            frame_indices=sequence.frame_indices,
            points=aligned,
            validity=sequence.validity,
        ),
    )
    print(f"aligned {len(sequence)} frames against {template.provenance or 'template'} -> {args.out}")
    return 0


def _synth_spec_values(path, kind: str) -> dict[str, str]:
    return {key: value for _, key, value in read_key_value_lines(path, "synth")}


def _cmd_synth(args) -> int:
    values = _synth_spec_values(args.spec, args.kind) if args.spec else {}

    def take(name, cast, default):
        return cast(values.pop(name)) if name in values else default

    if args.kind == "frames":
        n_frames = take("n_frames", int, 30)
        step = (take("step_x", float, 1.0), take("step_y", float, 0.0))
        if "displacements" in values:
            flat = [float(v) for v in values.pop("displacements").split()]
            displacements = np.asarray(flat).reshape(-1, 2)
        else:
            displacements = np.tile(step, (n_frames - 1, 1))
        spec = SynthMotionSpec(
            height=take("height", int, 192),
            width=take("width", int, 192),
            texture_seed=take("texture_seed", int, 0),
            displacements=displacements,
            noise_sigma=take("noise_sigma", float, 0.0),
            n_points=take("n_points", int, N_LANDMARKS),
            margin=take("margin", float, 40.0),
        )
        if values:
            raise ConfigError(f"unknown synth keys: {sorted(values)}")
        if spec.n_points != N_LANDMARKS:
            raise ConfigError(
                f"frame synthesis writes landmark files, so n_points must be {N_LANDMARKS}"
            )
        frames, points = synth_textured_sequence(spec)
        write_frame_dir(args.out, frames)
        truth = LandmarkSequence(
            frame_indices=np.arange(1, len(frames) + 1), points=points
        )
        write_landmarks(os.path.join(args.out, "truth.txt"), truth)
        print(f"wrote {len(frames)} frames + ground-truth landmarks under {args.out}")
        return 0

    spec = SynthDataSpec(
        n_real=take("n_real", int, 50),
        n_fake=take("n_fake", int, 50),
        n_frames=take("n_frames", int, 60),
        seed=take("seed", int, 0),
        fake_mode=take("fake_mode", str, "jitter"),
        jitter_sigma=take("jitter_sigma", float, 0.5),
        jitter_fraction=take("jitter_fraction", float, 0.3),
        drift_amplitude=take("drift_amplitude", float, 4.0),
        detector_noise_sigma=take("detector_noise_sigma", float, 0.1),
        deform_amplitude=take("deform_amplitude", float, 0.6),
    )
    if values:
        raise ConfigError(f"unknown synth keys: {sorted(values)}")
    sequences = synth_landmark_dataset(spec)
    for seq in sequences:
        sub, name = seq.source_id.split("-", 1)
        out_dir = os.path.join(args.out, sub)
        os.makedirs(out_dir, exist_ok=True)
        write_landmarks(
            os.path.join(out_dir, f"{name}.txt"),
            LandmarkSequence(
                frame_indices=np.arange(1, seq.points.shape[0] + 1),
                points=seq.points,
            ),
        )
    print(
        f"wrote {spec.n_real} real + {spec.n_fake} fake landmark sequences under {args.out}"
    )
    return 0


def _cmd_train(args) -> int:
    config = _load_config(args)
    overrides = {
        "learning_rate": args.lr,
        "batch_size": args.batch,
        "max_epochs": args.epochs,
        "hidden_size": args.k,
    }
    updates = {k: v for k, v in overrides.items() if v is not None}
    if updates:
        config = replace(config, **updates)
    sequences = pipeline.dataset_from_dir(args.data)
    trained = pipeline.train_pipeline(sequences, config)
    write_model(args.out, trained.model)
    if args.template_out:
        write_template(args.template_out, trained.template)
    result = trained.result
    print(
        f"trained on {len(trained.clips)} clips; best epoch {result.best_epoch} "
        f"of {len(result.history)}, validation accuracy {result.best_val_accuracy:.4f} "
        f"-> {args.out}"
    )
    return 0


def _write_report(out_dir: str, report: MetricsReport) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_csv(
        os.path.join(out_dir, "summary.csv"),
        ["metric", "value"],
        [
            ["video_accuracy", report.accuracy],
            ["video_auc", report.auc],
            ["clip_accuracy", report.clip_accuracy],
            ["clip_auc", report.clip_auc],
            ["n_real_videos", report.n_real],
            ["n_fake_videos", report.n_fake],
            ["n_real_clips", report.n_clips_real],
            ["n_fake_clips", report.n_clips_fake],
        ],
    )
    for level in ("video", "clip"):
        rows = [
            [r.unit_id, r.label, f"{r.p_fake:.17g}", r.predicted]
            for r in report.rows
            if r.level == level
        ]
        write_csv(
            os.path.join(out_dir, f"{level}s.csv"),
            ["id", "label", "p_fake", "predicted"],
            rows,
        )


def _cmd_eval(args) -> int:
    model = read_model(args.model)
    template = pipeline.model_template(
        model, read_template(args.template) if args.template else None
    )
    sequences = pipeline.dataset_from_dir(args.data)
    clips = pipeline.clips_from_sequences(
        sequences, template, model.input_length
    )
    report = pipeline.evaluate_clips(model, clips)
    _write_report(args.out, report)
    print(
        f"evaluated {report.n_real + report.n_fake} videos: "
        f"accuracy {report.accuracy:.4f}, auc {report.auc:.4f} -> {args.out}"
    )
    return 0


def _cmd_detect(args) -> int:
    config = _load_config(args)
    template = read_template(args.template) if args.template else None
    header = [
        "video_id", "n_clips", "p_fake", "p_fake_coords", "p_fake_deltas",
        "label", "error",
    ]
    if args.data:
        rows = pipeline.detect_batch(args.data, args.model, config, template)
    else:
        if not (args.frames and args.landmarks):
            raise ConfigError("detect needs either --data or --frames with --landmarks")
        model = read_model(args.model)
        sequence = read_landmarks(args.landmarks)
        frames = read_frame_dir(args.frames)
        prediction = pipeline.pipeline_detect(model, frames, sequence, config, template)
        rows = [{
            "video_id": os.path.basename(os.path.normpath(args.frames)),
            "n_clips": prediction.n_clips,
            "p_fake": prediction.p_fake,
            "p_fake_coords": "" if prediction.p_fake_coords is None else prediction.p_fake_coords,
            "p_fake_deltas": "" if prediction.p_fake_deltas is None else prediction.p_fake_deltas,
            "label": prediction.label,
            "error": "",
        }]
    csv_rows = []
    for row in rows:
        csv_rows.append([
            row["video_id"], row["n_clips"],
            "" if row["p_fake"] == "" else f"{row['p_fake']:.17g}",
            "" if row["p_fake_coords"] == "" else f"{row['p_fake_coords']:.17g}",
            "" if row["p_fake_deltas"] == "" else f"{row['p_fake_deltas']:.17g}",
            row["label"], row["error"],
        ])
    if args.out:
        write_csv(args.out, header, csv_rows)
    for row in rows:
        if row["error"]:
            print(f"{row['video_id']}: skipped ({row['error']})")
        else:
            verdict = "fake" if row["label"] == 1 else "real"
            print(f"{row['video_id']}: {verdict} (p_fake={row['p_fake']:.4f}, clips={row['n_clips']})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facekin",
        description="Temporal-consistency detection of forged face-landmark sequences",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="chain raw patch tracking from the first landmark record")
    p.add_argument("--frames", required=True, help="directory of frame images")
    p.add_argument("--landmarks", required=True, help="landmark file (first record is the seed)")
    p.add_argument("--out", required=True, help="output landmark file")
    _lk_flags(p)
    _common_flags(p)
    p.set_defaults(func=_cmd_track)

    p = sub.add_parser("calibrate", help="temporally calibrate detector landmarks against frames")
    p.add_argument("--frames", required=True)
    p.add_argument("--landmarks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--q", type=float, help="process noise of the landmark filter")
    _lk_flags(p)
    _common_flags(p)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("embed", help="align a landmark file to a template")
    p.add_argument("--landmarks", required=True)
    p.add_argument("--template", required=True)
    p.add_argument("--out", required=True)
    _common_flags(p)
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("synth", help="generate synthetic frames or landmark datasets")
    p.add_argument("--kind", choices=("frames", "landmarks"), required=True)
    p.add_argument("--spec", help="key = value recipe file (defaults used when omitted)")
    p.add_argument("--out", required=True, help="output directory")
    _common_flags(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train a detector on real/ + fake/ landmark files")
    p.add_argument("--data", required=True, help="dataset directory with real/ and fake/")
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--template-out", help="also write the alignment template")
    p.add_argument("--lr", type=float, help="override the learning rate")
    p.add_argument("--batch", type=int, help="override the batch size")
    p.add_argument("--epochs", type=int, help="override the epoch cap")
    p.add_argument("--k", type=int, help="override the recurrent state size")
    _common_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score a labelled dataset with a trained model")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--template", help="template file (defaults to the model's)")
    p.add_argument("--out", "--report", dest="out", required=True,
                   help="output report directory")
    _common_flags(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("detect", help="classify unlabelled videos")
    p.add_argument("--model", required=True)
    p.add_argument("--template", help="template file (defaults to the model's)")
    p.add_argument("--data", help="root of <video>/frames + <video>/landmarks.txt")
    p.add_argument("--frames", help="single video: frame directory")
    p.add_argument("--landmarks", help="single video: landmark file")
    p.add_argument("--out", help="output CSV report")
    _common_flags(p)
    p.set_defaults(func=_cmd_detect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (FacekinError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
