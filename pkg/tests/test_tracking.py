"""Gauss-Newton patch tracking: solver, pyramid composition, validation."""

import numpy as np
import pytest

from facekin.errors import DegenerateHessianError
from facekin.pyramid import build_pyramid, patch_grid, patch_weights, sample_bilinear
from facekin.synth import make_texture, shift_image
from facekin.tracking import (
    LKConfig,
    compute_jacobian,
    forward_backward_check,
    lk_refine,
    lk_solve_step,
    pyramidal_lk,
    track_point,
    track_points,
)

from _oracles import ssd_integer_search, weighted_ssd

CFG = LKConfig()


def ramp_frame(h, w, a=0.0, b=1.0, c=0.0):
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return (a + b * xs + c * ys)[:, :, None]


def pyramids(frame_a, frame_b, config=CFG):
    md = config.patch_size
    return (
        build_pyramid(frame_a, config.levels, min_dim=md),
        build_pyramid(frame_b, config.levels, min_dim=md),
    )


def test_config_validation():
    with pytest.raises(ValueError):
        LKConfig(half_size=0)
    with pytest.raises(ValueError):
        LKConfig(sigma=0.0)
    with pytest.raises(ValueError):
        LKConfig(max_iters=0)
    assert LKConfig(half_size=4).patch_size == 9


def test_constant_image_is_degenerate():
    frame = np.full((64, 64, 1), 9.0)
    center = np.array([32.0, 32.0])
    with pytest.raises(DegenerateHessianError):
        compute_jacobian(frame, center, CFG)
    ctx = compute_jacobian(frame, center, CFG, check=False)
    assert ctx.degenerate
    assert ctx.hessian_det == 0.0
    assert np.array_equal(ctx.jacobian, np.zeros_like(ctx.jacobian))


def test_ramp_jacobian_closed_form():
    frame = ramp_frame(64, 64)
    center = np.array([30.0, 30.0])
    ctx = compute_jacobian(frame, center, CFG, check=False)
    assert np.allclose(ctx.jacobian[:, 0], 1.0, atol=1e-12)
    assert np.allclose(ctx.jacobian[:, 1], 0.0, atol=1e-12)
    total = patch_weights(CFG.half_size, CFG.sigma).sum()
    assert np.allclose(ctx.hessian, [[total, 0.0], [0.0, 0.0]], atol=1e-9)
    # rank-one pseudo-inverse of the normal matrix
    assert np.allclose(ctx.hessian_inv, [[1.0 / total, 0.0], [0.0, 0.0]], atol=1e-12)


def test_textured_hessian_symmetric_psd():
    rng = np.random.default_rng(8)
    frame = make_texture(rng, 64, 64)
    ctx = compute_jacobian(frame, np.array([32.0, 32.0]), CFG)
    assert np.allclose(ctx.hessian, ctx.hessian.T, atol=1e-9)
    eigvals = np.linalg.eigvalsh(ctx.hessian)
    assert np.all(eigvals >= -1e-9)
    assert not ctx.degenerate


def test_solve_step_zero_residual_gives_zero_update():
    rng = np.random.default_rng(9)
    frame = make_texture(rng, 64, 64)
    ctx = compute_jacobian(frame, np.array([32.0, 32.0]), CFG)
    delta = lk_solve_step(ctx, frame, np.zeros(2))
    assert np.array_equal(delta, np.zeros(2))


def test_solve_step_exact_on_shifted_ramp():
    source = ramp_frame(64, 64)
    target = ramp_frame(64, 64, a=-1.0)  # ramp moved by (1, 0): x - 1
    ctx = compute_jacobian(source, np.array([30.0, 30.0]), CFG, check=False)
    delta = lk_solve_step(ctx, target, np.zeros(2))
    assert np.allclose(delta, [1.0, 0.0], atol=1e-9)


def test_solve_step_exact_on_affine_images():
    # shift parallel to the gradient of I = a + bx + cy is recovered exactly
    b, c = 0.8, -0.6
    source = ramp_frame(80, 80, a=5.0, b=b, c=c)
    for mag in (0.5, -1.25, 2.0):
        shift = mag * np.array([b, c])
        target_vals = 5.0 + b * (np.arange(80)[None, :] - shift[0]) + c * (
            np.arange(80)[:, None] - shift[1]
        )
        target = target_vals[:, :, None]
        ctx = compute_jacobian(source, np.array([40.0, 40.0]), CFG, check=False)
        delta = lk_solve_step(ctx, target, np.zeros(2))
        assert np.allclose(delta, shift, atol=1e-9)


def test_refine_identical_frames_converges_immediately():
    rng = np.random.default_rng(10)
    frame = make_texture(rng, 64, 64)
    d, converged, iters = lk_refine(frame, frame, np.array([30.0, 31.0]), CFG)
    assert np.array_equal(d, np.zeros(2))
    assert converged
    assert iters == 1


def test_refine_half_pixel_shift():
    rng = np.random.default_rng(12)
    frame = make_texture(rng, 96, 96, smooth_sigma=2.0)
    target = shift_image(frame, np.array([0.5, 0.0]))
    d, converged, _ = lk_refine(frame, target, np.array([48.0, 48.0]), CFG)
    assert converged
    assert np.hypot(d[0] - 0.5, d[1]) < 0.1


def test_refine_flags_nonconvergence_outside_capture_range():
    rng = np.random.default_rng(13)
    cfg = LKConfig(half_size=5, max_iters=10)
    frame = make_texture(rng, 256, 256)
    shift = np.array([4.0 * cfg.half_size, 0.0])
    target = shift_image(frame, shift)
    d, converged, iters = lk_refine(frame, target, np.array([128.0, 128.0]), cfg)
    assert not converged
    assert iters == cfg.max_iters
    assert np.hypot(*(d - shift)) > 1.0


def test_refine_weighted_ssd_nonincreasing():
    rng = np.random.default_rng(14)
    frame = make_texture(rng, 96, 96, smooth_sigma=2.0)
    target = shift_image(frame, np.array([1.2, -0.7]))
    center = np.array([48.0, 48.0])
    ctx = compute_jacobian(frame, center, CFG)
    weights = np.repeat(patch_weights(CFG.half_size, CFG.sigma).reshape(-1), 1)
    source_patch = sample_bilinear(frame, patch_grid(center, CFG.half_size))
    d = np.zeros(2)
    prev = None
    for _ in range(CFG.max_iters):
        cur = weighted_ssd(
            source_patch,
            sample_bilinear(target, patch_grid(center + d, CFG.half_size)),
            weights,
        )
        if prev is not None:
            assert cur <= prev + 1e-9
        prev = cur
        delta = lk_solve_step(ctx, target, d)
        d = d + delta
        if np.hypot(delta[0], delta[1]) < CFG.convergence_eps:
            break


def test_pyramidal_identical_frames():
    rng = np.random.default_rng(15)
    frame = make_texture(rng, 192, 192)
    pyr = build_pyramid(frame, CFG.levels, min_dim=CFG.patch_size)
    d, flags = pyramidal_lk(pyr, pyr, np.array([100.0, 90.0]), CFG)
    assert np.hypot(d[0], d[1]) < 1e-6
    assert all(flags)


def test_pyramidal_integer_shift_matches_ssd_oracle():
    rng = np.random.default_rng(16)
    frame = make_texture(rng, 192, 192)
    shift = np.array([3.0, -2.0])
    target = shift_image(frame, shift)
    pyr_a, pyr_b = pyramids(frame, target)
    point = np.array([96.0, 96.0])
    d, _ = pyramidal_lk(pyr_a, pyr_b, point, CFG)
    assert np.hypot(*(d - shift)) < 0.25
    assert ssd_integer_search(frame, target, point, 10, 8) == (3, -2)


def test_pyramidal_large_shift_within_pyramid_range():
    rng = np.random.default_rng(17)
    frame = make_texture(rng, 192, 192)
    shift = np.array([12.0, 0.0])
    target = shift_image(frame, shift)
    pyr_a, pyr_b = pyramids(frame, target)
    d, _ = pyramidal_lk(pyr_a, pyr_b, np.array([90.0, 96.0]), CFG)
    assert np.hypot(*(d - shift)) < 0.5


def test_pyramidal_level_consistency_under_upscaling():
    # doubling the image and the shift doubles the displacement
    rng = np.random.default_rng(18)
    small = make_texture(rng, 96, 96, smooth_sigma=2.0)
    shift = np.array([2.0, -1.5])
    small_target = shift_image(small, shift)

    def upscale(frame):
        h, w = frame.shape[:2]
        ys, xs = np.mgrid[0:2 * h, 0:2 * w].astype(np.float64)
        pts = np.stack([xs / 2.0, ys / 2.0], axis=-1)
        return sample_bilinear(frame, pts)

    big, big_target = upscale(small), upscale(small_target)
    cfg = LKConfig(levels=2)
    pyr_s = pyramids(small, small_target, cfg)
    pyr_b = pyramids(big, big_target, cfg)
    d_small, _ = pyramidal_lk(pyr_s[0], pyr_s[1], np.array([48.0, 48.0]), cfg)
    d_big, _ = pyramidal_lk(pyr_b[0], pyr_b[1], np.array([96.0, 96.0]), cfg)
    assert np.hypot(*(d_big - 2.0 * d_small)) < 0.2


def test_pyramidal_rejects_out_of_frame_point():
    rng = np.random.default_rng(19)
    frame = make_texture(rng, 96, 96)
    pyr = build_pyramid(frame, 1, min_dim=CFG.patch_size)
    with pytest.raises(ValueError):
        pyramidal_lk(pyr, pyr, np.array([-1.0, 40.0]), LKConfig(levels=1))


def test_forward_backward_check_rules():
    p = np.array([10.0, 20.0])
    err, valid = forward_backward_check(p, p, 1.0)
    assert err == 0.0 and valid
    err, valid = forward_backward_check(p, p + [2.0, 0.0], 1.0)
    assert err == 2.0 and not valid
    err, valid = forward_backward_check(p, p + [1.0, 0.0], 1.0)
    assert err == 1.0 and valid  # boundary inclusive


def test_track_point_valid_on_texture_and_symmetric():
    rng = np.random.default_rng(20)
    frame = make_texture(rng, 192, 192)
    target = shift_image(frame, np.array([4.0, 1.0]))
    pyr_a, pyr_b = pyramids(frame, target)
    res = track_point(pyr_a, pyr_b, np.array([96.0, 96.0]), CFG)
    assert res.valid
    assert res.reason == ""
    assert np.hypot(*(res.point_next - [100.0, 97.0])) < 0.25
    # tracking within one frame round-trips with nearly zero error
    res_same = track_point(pyr_a, pyr_a, np.array([96.0, 96.0]), CFG)
    assert res_same.valid and res_same.fb_error < 1e-9


def test_track_point_occlusion_is_rejected():
    rng = np.random.default_rng(21)
    frame = make_texture(rng, 192, 192)
    target = frame.copy()
    target[80:112, 80:112] = 128.0  # constant block over the tracked patch
    pyr_a, pyr_b = pyramids(frame, target)
    res = track_point(pyr_a, pyr_b, np.array([96.0, 96.0]), CFG)
    assert not res.valid
    assert res.reason in ("fb-error", "degenerate-hessian", "out-of-bounds")


def test_track_point_source_out_of_bounds():
    rng = np.random.default_rng(22)
    frame = make_texture(rng, 96, 96)
    pyr = build_pyramid(frame, 1, min_dim=CFG.patch_size)
    cfg = LKConfig(levels=1)
    res = track_point(pyr, pyr, np.array([-3.0, 50.0]), cfg)
    assert not res.valid
    assert res.reason == "out-of-bounds"
    assert np.array_equal(res.point_next, [-3.0, 50.0])


def test_track_point_degenerate_source():
    frame = np.full((96, 96, 1), 7.0)
    pyr = build_pyramid(frame, 1, min_dim=CFG.patch_size)
    cfg = LKConfig(levels=1)
    res = track_point(pyr, pyr, np.array([48.0, 48.0]), cfg)
    assert not res.valid
    assert res.reason == "degenerate-hessian"


def test_batch_tracking_matches_scalar():
    rng = np.random.default_rng(23)
    frame = make_texture(rng, 192, 192)
    target = shift_image(frame, np.array([2.5, -3.5]))
    pyr_a, pyr_b = pyramids(frame, target)
    pts = rng.uniform(50, 140, size=(25, 2))
    pts = np.vstack([pts, [[-2.0, 50.0], [1.0, 1.0], [190.0, 190.0]]])
    batch = track_points(pyr_a, pyr_b, pts, CFG)
    for point, got in zip(pts, batch):
        ref = track_point(pyr_a, pyr_b, point, CFG)
        assert got.valid == ref.valid
        assert got.reason == ref.reason
        assert got.converged == ref.converged
        assert np.allclose(got.point_next, ref.point_next, atol=1e-9)
        if np.isfinite(ref.fb_error):
            assert abs(got.fb_error - ref.fb_error) < 1e-9
