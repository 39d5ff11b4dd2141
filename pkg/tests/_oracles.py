"""Independent reference implementations used as test oracles.

Everything here is deliberately written with plain loops and the most direct
formulation available, trading speed for obviousness, so that agreement with
the library is evidence of correctness rather than shared structure.
"""

from __future__ import annotations

import numpy as np


def block_mean_levels(frame: np.ndarray, levels: int) -> list[np.ndarray]:
    """Pyramid oracle: per level, plain 2x2 block means with edge rows and
    columns replicated once when a dimension is odd."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim == 2:
        frame = frame[:, :, None]
    out = [frame]
    for _ in range(levels):
        cur = out[-1]
        h, w, c = cur.shape
        if h % 2:
            cur = np.concatenate([cur, cur[-1:, :, :]], axis=0)
        if w % 2:
            cur = np.concatenate([cur, cur[:, -1:, :]], axis=1)
        hh, ww = cur.shape[0] // 2, cur.shape[1] // 2
        nxt = np.zeros((hh, ww, c))
        for i in range(hh):
            for j in range(ww):
                nxt[i, j] = cur[2 * i:2 * i + 2, 2 * j:2 * j + 2].mean(axis=(0, 1))
        out.append(nxt)
    return out


def ssd_integer_search(
    frame_a: np.ndarray,
    frame_b: np.ndarray,
    center: tuple[float, float],
    half: int,
    radius: int,
) -> tuple[int, int]:
    """Exhaustive integer-displacement search minimizing patch SSD.

    Patches are plain array slices (no interpolation), so this shares no code
    with the tracker. center must be integer-valued and far enough from the
    border that every candidate patch stays inside both frames.
    """
    a = np.asarray(frame_a, dtype=np.float64)
    b = np.asarray(frame_b, dtype=np.float64)
    cx, cy = int(round(center[0])), int(round(center[1]))
    ref = a[cy - half:cy + half + 1, cx - half:cx + half + 1]
    best = None
    best_d = (0, 0)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            y0, x0 = cy + dy - half, cx + dx - half
            cand = b[y0:y0 + 2 * half + 1, x0:x0 + 2 * half + 1]
            ssd = float(((cand - ref) ** 2).sum())
            if best is None or ssd < best:
                best = ssd
                best_d = (dx, dy)
    return best_d


def scalar_sigmoid(x: float) -> float:
    return 1.0 / (1.0 + np.exp(-x))


def scalar_gru_cell(params, x, h_prev):
    """Per-gate scalar GRU oracle: explicit loops over units."""
    k = params.b_z.size
    h = np.zeros(k)
    for i in range(k):
        z = scalar_sigmoid(
            float(x @ params.w_z[:, i]) + float(h_prev @ params.u_z[:, i])
            + float(params.b_z[i])
        )
        r_row = np.array([
            scalar_sigmoid(
                float(x @ params.w_r[:, j]) + float(h_prev @ params.u_r[:, j])
                + float(params.b_r[j])
            )
            for j in range(k)
        ])
        c = np.tanh(
            float(x @ params.w_h[:, i]) + float((r_row * h_prev) @ params.u_h[:, i])
            + float(params.b_h[i])
        )
        h[i] = (1.0 - z) * h_prev[i] + z * c
    return h


def scalar_gru_forward(params, xs):
    """Unrolled scalar GRU over a (T, n_in) sequence; returns final h."""
    h = np.zeros(params.b_z.size)
    for t in range(xs.shape[0]):
        h = scalar_gru_cell(params, xs[t], h)
    return h


def pairwise_auc(scores, labels) -> float:
    """Brute-force Mann-Whitney AUC: loop over all (positive, negative)
    pairs, counting wins as 1 and ties as 0.5."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (pos.size * neg.size)


def numeric_gradient(fn, arr: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of one array,
    evaluated element by element on a copy."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = fn()
        flat[i] = orig - eps
        lo = fn()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return grad


def weighted_ssd(source_patch, target_patch, weights) -> float:
    """Objective the tracker minimizes, computed directly."""
    diff = np.asarray(target_patch, dtype=np.float64).reshape(-1) - np.asarray(
        source_patch, dtype=np.float64
    ).reshape(-1)
    return float((np.asarray(weights).reshape(-1) * diff * diff).sum())
