"""Pyramidal Gauss-Newton patch tracking with forward-backward validation.

A point is tracked from a source frame to a target frame by minimising the
Gaussian-weighted sum of squared differences between the source patch and the
displaced target patch. The normal matrix is built once per (point, level)
from source-patch gradients, so each iteration costs one patch resample plus
a 2x2 matrix-vector product. Estimates are propagated coarse-to-fine through
an image pyramid, and validated by re-tracking the predicted point backwards:
large round-trip error marks the point invalid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateHessianError
from .pyramid import patch_grid, patch_weights, sample_bilinear
from .validation import as_point


def _ensure_frame(frame: np.ndarray) -> np.ndarray:
    """Cheap shape coercion for the hot path; full validation happens when
    frames are loaded or pyramids are built."""
    arr = np.asarray(frame, dtype=np.float64)
    return arr[:, :, None] if arr.ndim == 2 else arr


@dataclass(frozen=True)
class LKConfig:
    """Tracker settings. Defaults match the calibrated pipeline."""

    half_size: int = 10            # patch half width w; patch is (2w+1)^2
    sigma: float = 5.0             # Gaussian weight scale in pixels
    levels: int = 3                # coarsest pyramid level (levels+1 total)
    max_iters: int = 30            # Gauss-Newton iterations per level
    convergence_eps: float = 0.01  # stop when the update norm drops below this
    fb_threshold: float = 1.0      # max forward-backward error in pixels
    min_hessian_det: float = 1e-6  # below this the patch counts as textureless

    def __post_init__(self):
        if self.half_size < 1:
            raise ValueError(f"half_size must be >= 1, got {self.half_size}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.levels < 0:
            raise ValueError(f"levels must be >= 0, got {self.levels}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.convergence_eps <= 0:
            raise ValueError("convergence_eps must be positive")
        if self.fb_threshold < 0:
            raise ValueError("fb_threshold must be non-negative")

    @property
    def patch_size(self) -> int:
        return 2 * self.half_size + 1


@dataclass
class LKSolverContext:
    """Per-(point, level) solver state: template patch, Jacobian and normals.

    jacobian stacks one (C, 2) gradient block per patch position, positions
    outer and channels inner, giving shape (C * (2w+1)^2, 2). weights holds
    the matching per-row Gaussian weights. hessian_inv is the pseudo-inverse,
    so rank-deficient normal matrices still yield the minimum-norm update.
    """

    center: np.ndarray           # (2,)
    half_size: int
    source_values: np.ndarray    # (C * (2w+1)^2,) flattened template patch
    jacobian: np.ndarray         # (C * (2w+1)^2, 2)
    weights: np.ndarray          # (C * (2w+1)^2,)
    hessian: np.ndarray          # (2, 2)
    hessian_inv: np.ndarray      # (2, 2)
    hessian_det: float
    degenerate: bool


def compute_jacobian(
    frame: np.ndarray, center, config: LKConfig, *, check: bool = True
) -> LKSolverContext:
    """Build the solver context for a point: patch, gradients, normal matrix.

    Gradients are central differences (step one pixel) of bilinear samples.
    With check=True (the tracking path), a normal-matrix determinant below
    config.min_hessian_det raises DegenerateHessianError; check=False returns
    the context regardless, which is useful for inspecting degenerate cases.
    """
    frame = _ensure_frame(frame)
    c = as_point(center)
    w = config.half_size
    # One enlarged sample grid provides the patch and both +-1 px neighbours.
    big = sample_bilinear(frame, patch_grid(c, w + 1))
    values = big[1:-1, 1:-1]
    grad_x = 0.5 * (big[1:-1, 2:] - big[1:-1, :-2])
    grad_y = 0.5 * (big[2:, 1:-1] - big[:-2, 1:-1])
    channels = values.shape[2]

    jac = np.stack([grad_x, grad_y], axis=-1).reshape(-1, 2)
    weights = np.repeat(patch_weights(w, config.sigma).reshape(-1), channels)
    hessian = (jac * weights[:, None]).T @ jac
    det = float(np.linalg.det(hessian))
    degenerate = det < config.min_hessian_det
    if check and degenerate:
        raise DegenerateHessianError(
            f"patch at ({c[0]:.2f}, {c[1]:.2f}) is too flat: det(H) = {det:.3e}"
        )
    return LKSolverContext(
        center=c,
        half_size=w,
        source_values=values.reshape(-1),
        jacobian=jac,
        weights=weights,
        hessian=hessian,
        hessian_inv=_pinv2x2_sym(hessian[None])[0],
        hessian_det=det,
        degenerate=degenerate,
    )


def lk_solve_step(ctx: LKSolverContext, target_frame: np.ndarray, d) -> np.ndarray:
    """One Gauss-Newton update for the displacement estimate `d`.

    Samples the target patch at center + d, forms the weighted residual
    against the source patch and solves the cached normal equations. The
    returned update is added to d by the caller; on an affine image a single
    step lands on the displacement component observable from the gradients.
    """
    d = np.asarray(d, dtype=np.float64)
    target = sample_bilinear(target_frame, patch_grid(ctx.center + d, ctx.half_size))
    residual = target.reshape(-1) - ctx.source_values
    rhs = ctx.jacobian.T @ (ctx.weights * residual)
    return -ctx.hessian_inv @ rhs


def lk_refine(
    source_frame: np.ndarray,
    target_frame: np.ndarray,
    center,
    config: LKConfig,
    d0=(0.0, 0.0),
) -> tuple[np.ndarray, bool, int]:
    """Iterate Gauss-Newton at a single scale from initial displacement d0.

    Returns (displacement, converged, iterations). Convergence means the last
    update norm fell below config.convergence_eps within max_iters.
    """
    ctx = compute_jacobian(source_frame, center, config)
    target_frame = _ensure_frame(target_frame)
    d = as_point(np.asarray(d0, dtype=np.float64))
    converged = False
    iters = 0
    for iters in range(1, config.max_iters + 1):
        delta = lk_solve_step(ctx, target_frame, d)
        d = d + delta
        if float(np.hypot(delta[0], delta[1])) < config.convergence_eps:
            converged = True
            break
    return d, converged, iters


def pyramidal_lk(
    source_pyramid: list[np.ndarray],
    target_pyramid: list[np.ndarray],
    point,
    config: LKConfig,
) -> tuple[np.ndarray, list[bool]]:
    """Track one point coarse-to-fine through matching pyramids.

    The displacement solved at level L (starting from the inherited guess) is
    doubled to seed level L-1; the level-0 solution is the result. Returns
    (displacement, per-level converged flags ordered coarse to fine). Raises
    DegenerateHessianError if any level lacks texture at the point.
    """
    if len(source_pyramid) != len(target_pyramid):
        raise ValueError("source and target pyramids must have equal depth")
    p = as_point(point)
    h, w = source_pyramid[0].shape[:2]
    if not (0.0 <= p[0] <= w - 1.0 and 0.0 <= p[1] <= h - 1.0):
        raise ValueError(f"point ({p[0]:.2f}, {p[1]:.2f}) is outside the frame")
    levels = len(source_pyramid) - 1
    guess = np.zeros(2)
    flags: list[bool] = []
    d = np.zeros(2)
    for level in range(levels, -1, -1):
        scale = 2.0 ** level
        d, converged, _ = lk_refine(
            source_pyramid[level],
            target_pyramid[level],
            p / scale,
            config,
            d0=guess,
        )
        flags.append(converged)
        guess = 2.0 * d
    return d, flags


def forward_backward_check(point, round_trip_point, threshold: float) -> tuple[float, bool]:
    """Round-trip tracking error and validity.

    fb_error is the Euclidean distance between the original point and the
    point recovered by tracking back from the prediction; the point is valid
    when fb_error <= threshold (boundary inclusive).
    """
    p = as_point(point)
    q = as_point(round_trip_point)
    error = float(np.hypot(q[0] - p[0], q[1] - p[1]))
    return error, error <= threshold


@dataclass
class TrackResult:
    """Outcome of tracking one point between two frames."""

    point_next: np.ndarray       # (2,) predicted position in the target frame
    fb_error: float              # round-trip error in pixels (inf if not run)
    valid: bool
    converged: bool              # level-0 convergence of the forward solve
    reason: str = ""             # empty when valid, else the failure cause
    flags: list[bool] = field(default_factory=list)


def _sample_patches(frame: np.ndarray, centers: np.ndarray, half: int) -> np.ndarray:
    """Bilinear patches around many centers at once: (n, 2h+1, 2h+1, C)."""
    offs = np.arange(-half, half + 1, dtype=np.float64)
    n = centers.shape[0]
    side = offs.size
    coords = np.empty((n, side, side, 2))
    coords[..., 0] = centers[:, 0, None, None] + offs[None, None, :]
    coords[..., 1] = centers[:, 1, None, None] + offs[None, :, None]
    return sample_bilinear(frame, coords)


def _pinv2x2_sym(h: np.ndarray) -> np.ndarray:
    """Pseudo-inverse of a batch (n, 2, 2) of symmetric PSD matrices."""
    a, b, c = h[:, 0, 0], h[:, 0, 1], h[:, 1, 1]
    det = a * c - b * b
    trace = a + c
    out = np.zeros_like(h)
    full = det > 1e-12 * np.maximum(trace * trace, 1.0)
    inv_det = np.where(full, det, 1.0)
    out[full, 0, 0] = (c / inv_det)[full]
    out[full, 1, 1] = (a / inv_det)[full]
    out[full, 0, 1] = out[full, 1, 0] = (-b / inv_det)[full]
    # rank one: H = t u u^T with |u| = 1, so pinv = H / t^2
    rank1 = (~full) & (trace > 1e-300)
    scale = np.where(rank1, trace * trace, 1.0)
    for i, j in ((0, 0), (0, 1), (1, 0), (1, 1)):
        out[rank1, i, j] = (h[:, i, j] / scale)[rank1]
    return out


class _BatchContexts:
    """Vectorised solver contexts for many points on one frame level."""

    def __init__(self, frame: np.ndarray, centers: np.ndarray, config: LKConfig):
        frame = _ensure_frame(frame)
        w = config.half_size
        big = _sample_patches(frame, centers, w + 1)
        values = big[:, 1:-1, 1:-1, :]
        grad_x = 0.5 * (big[:, 1:-1, 2:, :] - big[:, 1:-1, :-2, :])
        grad_y = 0.5 * (big[:, 2:, 1:-1, :] - big[:, :-2, 1:-1, :])
        n = centers.shape[0]
        channels = values.shape[3]
        self.centers = centers
        self.values = values.reshape(n, -1)
        jac = np.stack([grad_x, grad_y], axis=-1).reshape(n, -1, 2)
        self.weights = np.repeat(
            patch_weights(w, config.sigma).reshape(-1), channels
        )
        self.weighted_jac = jac * self.weights[None, :, None]
        hessian = np.einsum("nmi,nmj->nij", self.weighted_jac, jac)
        self.det = hessian[:, 0, 0] * hessian[:, 1, 1] - hessian[:, 0, 1] ** 2
        self.hessian_inv = _pinv2x2_sym(hessian)
        self.degenerate = self.det < config.min_hessian_det
        self.half_size = w


def _batch_refine(
    ctx: _BatchContexts,
    target_frame: np.ndarray,
    config: LKConfig,
    d0: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised lk_refine over many points; per-point iteration stops when
    that point's own update norm drops below the threshold, matching the
    scalar solver point for point."""
    target_frame = _ensure_frame(target_frame)
    d = d0.copy()
    n = d.shape[0]
    converged = np.zeros(n, dtype=bool)
    active = ~ctx.degenerate
    for _ in range(config.max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        target = _sample_patches(
            target_frame, ctx.centers[idx] + d[idx], ctx.half_size
        ).reshape(idx.size, -1)
        residual = target - ctx.values[idx]
        rhs = np.einsum("nmi,nm->ni", ctx.weighted_jac[idx], residual)
        delta = -np.einsum("nij,nj->ni", ctx.hessian_inv[idx], rhs)
        d[idx] += delta
        done = np.hypot(delta[:, 0], delta[:, 1]) < config.convergence_eps
        converged[idx[done]] = True
        active[idx[done]] = False
    return d, converged


def _batch_pyramidal(
    source_pyramid: list[np.ndarray],
    target_pyramid: list[np.ndarray],
    points: np.ndarray,
    config: LKConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coarse-to-fine displacement for many points.

    Returns (displacement, converged_at_level0, degenerate_any_level).
    Degenerate points keep a zero displacement.
    """
    levels = len(source_pyramid) - 1
    n = points.shape[0]
    guess = np.zeros((n, 2))
    degenerate = np.zeros(n, dtype=bool)
    converged = np.zeros(n, dtype=bool)
    d = np.zeros((n, 2))
    for level in range(levels, -1, -1):
        scale = 2.0 ** level
        ctx = _BatchContexts(source_pyramid[level], points / scale, config)
        degenerate |= ctx.degenerate
        d, converged = _batch_refine(ctx, target_pyramid[level], config, guess)
        guess = 2.0 * d
    d[degenerate] = 0.0
    return d, converged, degenerate


def track_points(
    source_pyramid: list[np.ndarray],
    target_pyramid: list[np.ndarray],
    points: np.ndarray,
    config: LKConfig,
) -> list[TrackResult]:
    """Vectorised track_point over a set of points (same semantics)."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    h, w = source_pyramid[0].shape[:2]
    src_ok = (
        (points[:, 0] >= 0.0) & (points[:, 0] <= w - 1.0)
        & (points[:, 1] >= 0.0) & (points[:, 1] <= h - 1.0)
    )
    d = np.zeros((n, 2))
    conv_fwd = np.zeros(n, dtype=bool)
    deg_fwd = np.zeros(n, dtype=bool)
    if np.any(src_ok):
        sub = np.flatnonzero(src_ok)
        d[sub], conv_fwd[sub], deg_fwd[sub] = _batch_pyramidal(
            source_pyramid, target_pyramid, points[sub], config
        )
    predicted = points + d
    h, w = target_pyramid[0].shape[:2]
    in_bounds = (
        (predicted[:, 0] >= 0.0) & (predicted[:, 0] <= w - 1.0)
        & (predicted[:, 1] >= 0.0) & (predicted[:, 1] <= h - 1.0)
    )
    run_back = src_ok & ~deg_fwd & in_bounds
    fb_error = np.full(n, np.inf)
    valid = np.zeros(n, dtype=bool)
    conv_bwd = np.zeros(n, dtype=bool)
    deg_bwd = np.zeros(n, dtype=bool)
    if np.any(run_back):
        idx = np.flatnonzero(run_back)
        d_back, cb, db = _batch_pyramidal(
            target_pyramid, source_pyramid, predicted[idx], config
        )
        round_trip = predicted[idx] + d_back
        err = np.hypot(*(round_trip - points[idx]).T)
        err[db] = np.inf
        fb_error[idx] = err
        valid[idx] = (err <= config.fb_threshold) & ~db
        conv_bwd[idx] = cb
        deg_bwd[idx] = db

    results = []
    for j in range(n):
        if not src_ok[j]:
            results.append(TrackResult(
                point_next=points[j].copy(), fb_error=float("inf"), valid=False,
                converged=False, reason="out-of-bounds",
            ))
        elif deg_fwd[j]:
            results.append(TrackResult(
                point_next=points[j].copy(), fb_error=float("inf"), valid=False,
                converged=False, reason="degenerate-hessian",
            ))
        elif not in_bounds[j]:
            results.append(TrackResult(
                point_next=predicted[j], fb_error=float("inf"), valid=False,
                converged=bool(conv_fwd[j]), reason="out-of-bounds",
            ))
        elif deg_bwd[j]:
            results.append(TrackResult(
                point_next=predicted[j], fb_error=float("inf"), valid=False,
                converged=bool(conv_fwd[j]), reason="degenerate-hessian",
            ))
        else:
            results.append(TrackResult(
                point_next=predicted[j],
                fb_error=float(fb_error[j]),
                valid=bool(valid[j]),
                converged=bool(conv_fwd[j] and conv_bwd[j]),
                reason="" if valid[j] else "fb-error",
            ))
    return results


def track_point(
    source_pyramid: list[np.ndarray],
    target_pyramid: list[np.ndarray],
    point,
    config: LKConfig,
) -> TrackResult:
    """Track one point forward and validate it by backward re-tracking.

    Failure modes (source point or prediction outside the frame, degenerate
    patch on either pass, round-trip error above config.fb_threshold) yield
    valid=False with `reason` set; the forward prediction is still reported
    when available.
    """
    p = as_point(point)
    h, w = source_pyramid[0].shape[:2]
    if not (0.0 <= p[0] <= w - 1.0 and 0.0 <= p[1] <= h - 1.0):
        return TrackResult(
            point_next=p.copy(), fb_error=float("inf"), valid=False,
            converged=False, reason="out-of-bounds",
        )
    try:
        d, flags = pyramidal_lk(source_pyramid, target_pyramid, p, config)
    except DegenerateHessianError:
        return TrackResult(
            point_next=p.copy(), fb_error=float("inf"), valid=False,
            converged=False, reason="degenerate-hessian",
        )
    predicted = p + d
    h, w = target_pyramid[0].shape[:2]
    if not (0.0 <= predicted[0] <= w - 1.0 and 0.0 <= predicted[1] <= h - 1.0):
        return TrackResult(
            point_next=predicted, fb_error=float("inf"), valid=False,
            converged=flags[-1], reason="out-of-bounds", flags=flags,
        )
    try:
        d_back, back_flags = pyramidal_lk(
            target_pyramid, source_pyramid, predicted, config
        )
    except DegenerateHessianError:
        return TrackResult(
            point_next=predicted, fb_error=float("inf"), valid=False,
            converged=flags[-1], reason="degenerate-hessian", flags=flags,
        )
    error, valid = forward_backward_check(p, predicted + d_back, config.fb_threshold)
    return TrackResult(
        point_next=predicted,
        fb_error=error,
        valid=valid,
        converged=flags[-1] and back_flags[-1],
        reason="" if valid else "fb-error",
        flags=flags,
    )
