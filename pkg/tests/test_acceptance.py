"""Top-level acceptance gate, one test per shipping criterion.

Each test is self-contained, seeds everything it generates, pins its
thresholds inline, and asserts its runtime budget where one applies.
"""

import time

import numpy as np

from facekin.calibration import (
    calibrate_sequence,
    kalman_gain,
    kalman_merge,
    relative_variance,
    update_variance,
)
from facekin.classifier import TrainConfig, init_model, loss_and_grads, train
from facekin.cli import main
from facekin.dataio import write_landmarks, LandmarkSequence
from facekin.frames import write_frame_dir
from facekin.geometry import build_template, embed_sequence, segment_clips
from facekin.metrics import compute_auc
from facekin.pipeline import evaluate_clips
from facekin.pyramid import build_pyramid
from facekin.synth import (
    SynthDataSpec,
    base_face_shape,
    make_texture,
    point_grid,
    synth_landmark_dataset,
    synth_textured_sequence,
    SynthMotionSpec,
)
from facekin.tracking import LKConfig, track_points

from _oracles import numeric_gradient


def _pyr(frame, config):
    return build_pyramid(frame, config.levels, min_dim=config.patch_size)


def _clips_for(sequences, template, length=60):
    clips = []
    for seq in sequences:
        coords = embed_sequence(seq.points, template)
        clips.extend(
            segment_clips(coords, length=length, label=seq.label, source_id=seq.source_id)
        )
    return clips


def _val_auc(result, clips):
    val = [clips[i] for i in result.val_indices]
    report = evaluate_clips(result.model, val)
    return report


def test_criterion_1_kalman_arithmetic_exact():
    start = time.perf_counter()
    assert kalman_merge(10.0, 12.0, 0.5) == 11.0
    assert kalman_gain(0.3, 0.3) == 0.5
    assert update_variance(0.4, 0.5, 0.3) == 0.5
    assert relative_variance(5.0, 7.0, 6.0) == 2.0
    assert time.perf_counter() - start < 1.0


def test_criterion_2_lk_recovery_rate():
    start = time.perf_counter()
    config = LKConfig()
    total, recovered = 0, 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        angle = rng.uniform(0.0, 2.0 * np.pi)
        magnitude = rng.uniform(0.0, 12.0)
        step = magnitude * np.array([np.cos(angle), np.sin(angle)])
        spec = SynthMotionSpec(
            height=192, width=192, texture_seed=seed,
            displacements=step[None, :], n_points=4, margin=40.0,
        )
        frames, points = synth_textured_sequence(spec)
        results = track_points(
            _pyr(frames[0], config), _pyr(frames[1], config), points[0], config
        )
        for j, result in enumerate(results):
            total += 1
            error = np.hypot(*(result.point_next - points[1][j]))
            recovered += bool(error <= 0.25)
    assert recovered / total >= 0.95

    # identical frames: displacement is numerically zero
    frames, points = synth_textured_sequence(
        SynthMotionSpec(height=192, width=192, texture_seed=0, n_points=4,
                        displacements=np.zeros((1, 2)))
    )
    pyramid = _pyr(frames[0], config)
    for j, result in enumerate(track_points(pyramid, pyramid, points[0], config)):
        assert np.hypot(*(result.point_next - points[0][j])) < 1e-6
    assert time.perf_counter() - start < 60.0


def test_criterion_3_forward_backward_occlusion_filtering():
    start = time.perf_counter()
    config = LKConfig()
    n_points, n_occluded, block_half = 20, 2, 12
    occluded_total = occluded_rejected = clean_total = clean_accepted = 0
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        source = make_texture(np.random.default_rng(200 + seed), 192, 192)
        points = point_grid(192, 192, margin=30.0, n_points=n_points)
        occluded = rng.choice(n_points, size=n_occluded, replace=False)
        target = source.copy()
        for j in occluded:
            x, y = (int(round(v)) for v in points[j])
            target[y - block_half:y + block_half + 1,
                   x - block_half:x + block_half + 1] = 128.0
        results = track_points(_pyr(source, config), _pyr(target, config), points, config)
        for j, result in enumerate(results):
            if j in occluded:
                occluded_total += 1
                occluded_rejected += not result.valid
            else:
                clean_total += 1
                clean_accepted += result.valid
    assert occluded_rejected / occluded_total >= 0.90
    assert clean_accepted / clean_total >= 0.95
    assert time.perf_counter() - start < 60.0


def test_criterion_4_calibration_variance_reduction():
    start = time.perf_counter()
    n_frames, n_seeds, sigma = 100, 20, 1.0
    texture = make_texture(np.random.default_rng(11), 192, 192)
    frames = [texture] * n_frames
    truth = base_face_shape() * 0.62 + 96.0
    config = LKConfig()
    var_in = np.zeros((68, 2))
    var_out = np.zeros((68, 2))
    bias = np.zeros((68, 2))
    for seed in range(n_seeds):
        rng = np.random.default_rng(1000 + seed)
        detections = truth[None] + rng.normal(0.0, sigma, size=(n_frames, 68, 2))
        calibrated, _ = calibrate_sequence(frames, detections, config, 0.3)
        var_in += detections.var(axis=0)
        var_out += calibrated.var(axis=0)
        bias += (calibrated - truth[None]).mean(axis=0)
    ratio = var_out / var_in            # pooled across seeds per coordinate
    mean_bias = np.abs(bias) / n_seeds
    assert ratio.max() <= 0.5
    assert mean_bias.max() <= 0.5
    assert time.perf_counter() - start < 300.0


def test_criterion_5_full_model_gradient_check():
    start = time.perf_counter()
    k, t_len = 4, 5
    config = TrainConfig(
        hidden_size=k, dropout_input=0.0, dropout_hidden=0.0, logit_dropout=False
    )
    rng = np.random.default_rng(0)
    model = init_model(rng, k=k, input_length=t_len)
    clips = []
    from facekin.geometry import ClipSample

    for label in (0, 1, 0):
        a = rng.normal(0.0, 0.5, size=(t_len, 136))
        clips.append(ClipSample(coords=a, deltas=np.diff(a, axis=0), label=label))

    _, grads = loss_and_grads(model, clips, config, rng=np.random.default_rng(1), train=True)
    analytic = dict(grads.named_arrays())

    def loss_only():
        return loss_and_grads(model, clips, config, train=False)[0]

    worst = 0.0
    for name, arr in model.named_arrays():
        numeric = numeric_gradient(loss_only, arr, eps=1e-5)
        a, n = analytic[name], numeric
        rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-6)
        worst = max(worst, float(rel.max()))
    assert worst < 1e-4
    assert time.perf_counter() - start < 120.0


def test_criterion_6_synthetic_classification():
    start = time.perf_counter()
    spec = SynthDataSpec(
        n_real=500, n_fake=500, n_frames=60, seed=42,
        fake_mode="jitter", jitter_sigma=0.5,
    )
    sequences = synth_landmark_dataset(spec)
    template = build_template(np.concatenate([s.points for s in sequences]))
    clips = _clips_for(sequences, template)
    assert len(clips) == 1000
    config = TrainConfig(hidden_size=32, batch_size=100, rng_seed=0)
    result = train(clips, config)
    assert len(result.history) <= 500
    report = _val_auc(result, clips)
    assert report.clip_auc >= 0.95
    assert report.accuracy >= 0.95      # video level on the held-out 20%
    assert time.perf_counter() - start < 1800.0


def test_criterion_7_stream_ablation_directions():
    def ablation_auc(fake_mode, streams, max_epochs, drift_amplitude=4.0):
        spec = SynthDataSpec(
            n_real=200, n_fake=200, n_frames=60, seed=7,
            fake_mode=fake_mode, drift_amplitude=drift_amplitude,
        )
        sequences = synth_landmark_dataset(spec)
        template = build_template(
            np.concatenate([s.points for s in sequences[::5]])
        )
        clips = _clips_for(sequences, template)
        config = TrainConfig(
            hidden_size=32, batch_size=50, max_epochs=max_epochs,
            patience=max_epochs, dropout_input=0.0, dropout_hidden=0.0,
            logit_dropout=False, rng_seed=3, streams=streams,
        )
        result = train(clips, config)
        report = _val_auc(result, clips)
        return report.clip_auc, report

    jitter_coords, _ = ablation_auc("jitter", "coords", max_epochs=120)
    jitter_deltas, _ = ablation_auc("jitter", "deltas", max_epochs=120)
    # difference stream beats shape stream on white per-frame jitter
    assert jitter_deltas > jitter_coords

    drift_coords, report = ablation_auc(
        "drift", "coords", max_epochs=250, drift_amplitude=6.0
    )
    # shape stream beats chance by 3 sigma of a label-permutation baseline
    val_labels = np.array(
        [r.label for r in report.rows if r.level == "clip"]
    )
    rng = np.random.default_rng(0)
    scores = np.arange(val_labels.size, dtype=np.float64)
    permuted = np.array([
        compute_auc(scores, rng.permutation(val_labels)) for _ in range(1000)
    ])
    threshold = 0.5 + 3.0 * permuted.std()
    assert drift_coords > threshold


def test_criterion_8_bit_identical_training_and_detection(tmp_path):
    data = tmp_path / "data"
    spec = SynthDataSpec(n_real=10, n_fake=10, n_frames=60, seed=4, jitter_sigma=2.0)
    for seq in synth_landmark_dataset(spec):
        sub = "fake" if seq.label else "real"
        (data / sub).mkdir(parents=True, exist_ok=True)
        write_landmarks(
            data / sub / f"{seq.source_id}.txt",
            LandmarkSequence(
                frame_indices=np.arange(1, seq.points.shape[0] + 1),
                points=seq.points,
            ),
        )
    flags = ["--k", "6", "--batch", "8", "--epochs", "10", "--seed", "3"]
    model_a, model_b = tmp_path / "a.txt", tmp_path / "b.txt"
    assert main(["train", "--data", str(data), "--out", str(model_a)] + flags) == 0
    assert main(["train", "--data", str(data), "--out", str(model_b)] + flags) == 0
    assert model_a.read_bytes() == model_b.read_bytes()

    texture = make_texture(np.random.default_rng(11), 192, 192)
    rng = np.random.default_rng(5)
    videos = tmp_path / "videos"
    for name in ("aa", "bb"):
        video = videos / name
        (video / "frames").mkdir(parents=True)
        write_frame_dir(video / "frames", [texture] * 60)
        base = rng.uniform(60.0, 130.0, size=(68, 2))
        pts = np.repeat(base[None], 60, axis=0) + rng.normal(0, 0.3, (60, 68, 2))
        write_landmarks(
            video / "landmarks.txt",
            LandmarkSequence(frame_indices=np.arange(1, 61), points=pts),
        )
    out1, out2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
    for out in (out1, out2):
        assert main([
            "detect", "--model", str(model_a), "--data", str(videos),
            "--out", str(out),
        ]) == 0
    assert out1.read_bytes() == out2.read_bytes()
