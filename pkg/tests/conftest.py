"""Shared fixtures: small textures, landmark datasets, and one tiny trained
model reused by pipeline and CLI tests."""

from __future__ import annotations

import numpy as np
import pytest

from facekin.classifier import TrainConfig, train
from facekin.geometry import build_template, embed_sequence, segment_clips
from facekin.synth import (
    SynthDataSpec,
    SynthMotionSpec,
    make_texture,
    synth_landmark_dataset,
    synth_textured_sequence,
)


@pytest.fixture(scope="session")
def texture() -> np.ndarray:
    rng = np.random.default_rng(11)
    return make_texture(rng, 192, 192)


@pytest.fixture(scope="session")
def texture_rgb() -> np.ndarray:
    rng = np.random.default_rng(12)
    return make_texture(rng, 96, 96, channels=3)


@pytest.fixture(scope="session")
def textured_pair():
    """(frame_a, frame_b, displacement): frame_b is frame_a moved by d."""
    d = np.array([3.0, -2.0])
    spec = SynthMotionSpec(
        height=192, width=192, texture_seed=5,
        displacements=d[None, :], noise_sigma=0.0, n_points=4, margin=40,
    )
    frames, points = synth_textured_sequence(spec)
    return frames[0], frames[1], d


@pytest.fixture(scope="session")
def small_dataset():
    spec = SynthDataSpec(
        n_real=30, n_fake=30, n_frames=60, seed=21, fake_mode="jitter"
    )
    return synth_landmark_dataset(spec)


@pytest.fixture(scope="session")
def small_clips(small_dataset):
    template = build_template(
        np.concatenate([s.points for s in small_dataset[::4]])
    )
    clips = []
    for s in small_dataset:
        coords = embed_sequence(s.points, template)
        clips.extend(
            segment_clips(coords, length=60, label=s.label, source_id=s.source_id)
        )
    return clips, template


@pytest.fixture(scope="session")
def tiny_trained(small_clips):
    """A quickly trained small model over the jitter dataset."""
    clips, template = small_clips
    cfg = TrainConfig(
        hidden_size=8, batch_size=16, max_epochs=30, patience=30, rng_seed=1
    )
    result = train(clips, cfg)
    result.model.template_points = template.points
    result.model.template_provenance = template.provenance
    return result, clips, template
