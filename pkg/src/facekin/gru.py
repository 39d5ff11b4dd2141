"""Gated recurrent units with exact backpropagation through time, in numpy.

Cell equations, all gates sigmoid and the candidate tanh:

    z_t = sigmoid(x_t Wz + h_{t-1} Uz + bz)
    r_t = sigmoid(x_t Wr + h_{t-1} Ur + br)
    c_t = tanh(x_t Wh + (r_t * h_{t-1}) Uh + bh)
    h_t = (1 - z_t) * h_{t-1} + z_t * c_t

The initial hidden state is zero. A bidirectional layer runs one direction
over the sequence and an independent direction over the reversed sequence;
its readout is the concatenation of the two final hidden states.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign to stay overflow-free for large |x|.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Uniform init on +-sqrt(6 / (fan_in + fan_out)), shape (fan_in, fan_out)."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class GruParams:
    """Parameters of one GRU direction."""

    w_z: np.ndarray  # (input_dim, hidden)
    w_r: np.ndarray
    w_h: np.ndarray
    u_z: np.ndarray  # (hidden, hidden)
    u_r: np.ndarray
    u_h: np.ndarray
    b_z: np.ndarray  # (hidden,)
    b_r: np.ndarray
    b_h: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.w_z.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.w_z.shape[1]

    def named_arrays(self, prefix: str = ""):
        for f in fields(self):
            yield f"{prefix}{f.name}", getattr(self, f.name)

    def zeros_like(self) -> "GruParams":
        return GruParams(**{
            f.name: np.zeros_like(getattr(self, f.name)) for f in fields(self)
        })


def init_gru_params(rng: np.random.Generator, input_dim: int, hidden_size: int) -> GruParams:
    """Xavier-uniform weights, zero biases."""
    k = hidden_size
    return GruParams(
        w_z=xavier_uniform(rng, input_dim, k),
        w_r=xavier_uniform(rng, input_dim, k),
        w_h=xavier_uniform(rng, input_dim, k),
        u_z=xavier_uniform(rng, k, k),
        u_r=xavier_uniform(rng, k, k),
        u_h=xavier_uniform(rng, k, k),
        b_z=np.zeros(k),
        b_r=np.zeros(k),
        b_h=np.zeros(k),
    )


def gru_cell(params: GruParams, x: np.ndarray, h_prev: np.ndarray) -> np.ndarray:
    """One recurrence step. x: (N, input_dim), h_prev: (N, hidden)."""
    z = sigmoid(x @ params.w_z + h_prev @ params.u_z + params.b_z)
    r = sigmoid(x @ params.w_r + h_prev @ params.u_r + params.b_r)
    c = np.tanh(x @ params.w_h + (r * h_prev) @ params.u_h + params.b_h)
    return (1.0 - z) * h_prev + z * c


def gru_forward(params: GruParams, x: np.ndarray) -> tuple[np.ndarray, dict]:
    """Run a GRU over a batch of sequences.

    x: (N, T, input_dim). Returns (h_final, cache) where h_final is (N, k)
    and the cache holds everything the backward pass needs. Input
    projections for all timesteps are batched into single matrix products;
    only the recurrent terms loop over time.
    """
    n, t_len, d = x.shape
    k = params.hidden_size
    flat = x.reshape(n * t_len, d)
    xz = (flat @ params.w_z + params.b_z).reshape(n, t_len, k)
    xr = (flat @ params.w_r + params.b_r).reshape(n, t_len, k)
    xh = (flat @ params.w_h + params.b_h).reshape(n, t_len, k)

    h_all = np.zeros((n, t_len + 1, k))
    z_all = np.empty((n, t_len, k))
    r_all = np.empty((n, t_len, k))
    c_all = np.empty((n, t_len, k))
    h = h_all[:, 0]
    for t in range(t_len):
        z = sigmoid(xz[:, t] + h @ params.u_z)
        r = sigmoid(xr[:, t] + h @ params.u_r)
        c = np.tanh(xh[:, t] + (r * h) @ params.u_h)
        h = (1.0 - z) * h + z * c
        z_all[:, t] = z
        r_all[:, t] = r
        c_all[:, t] = c
        h_all[:, t + 1] = h
    cache = {"x": x, "z": z_all, "r": r_all, "c": c_all, "h": h_all}
    return h_all[:, -1], cache


def gru_backward(params: GruParams, cache: dict, d_h_final: np.ndarray) -> GruParams:
    """Backpropagate a gradient on the final hidden state through time.

    Returns parameter gradients shaped like `params`. Per-timestep gate
    gradients are accumulated and the weight gradients are formed with
    whole-sequence matrix products at the end.
    """
    x = cache["x"]
    z_all, r_all, c_all, h_all = cache["z"], cache["r"], cache["c"], cache["h"]
    n, t_len, _ = x.shape
    k = params.hidden_size

    da_z = np.empty((n, t_len, k))
    da_r = np.empty((n, t_len, k))
    da_h = np.empty((n, t_len, k))
    dh = d_h_final.copy()
    for t in range(t_len - 1, -1, -1):
        h_prev = h_all[:, t]
        z, r, c = z_all[:, t], r_all[:, t], c_all[:, t]
        dz = dh * (c - h_prev)
        az = dz * z * (1.0 - z)
        dc = dh * z
        ah = dc * (1.0 - c * c)
        dh_prev = dh * (1.0 - z)
        drh = ah @ params.u_h.T
        dh_prev += drh * r
        ar = (drh * h_prev) * r * (1.0 - r)
        dh_prev += az @ params.u_z.T + ar @ params.u_r.T
        da_z[:, t] = az
        da_r[:, t] = ar
        da_h[:, t] = ah
        dh = dh_prev

    flat_x = x.reshape(n * t_len, -1)
    h_prev_flat = h_all[:, :t_len].reshape(n * t_len, k)
    rh_flat = (r_all * h_all[:, :t_len]).reshape(n * t_len, k)
    az_flat = da_z.reshape(n * t_len, k)
    ar_flat = da_r.reshape(n * t_len, k)
    ah_flat = da_h.reshape(n * t_len, k)
    return GruParams(
        w_z=flat_x.T @ az_flat,
        w_r=flat_x.T @ ar_flat,
        w_h=flat_x.T @ ah_flat,
        u_z=h_prev_flat.T @ az_flat,
        u_r=h_prev_flat.T @ ar_flat,
        u_h=rh_flat.T @ ah_flat,
        b_z=az_flat.sum(axis=0),
        b_r=ar_flat.sum(axis=0),
        b_h=ah_flat.sum(axis=0),
    )


def bigru_forward(
    forward: GruParams, backward: GruParams, x: np.ndarray
) -> tuple[np.ndarray, dict]:
    """Bidirectional layer: readout (N, 2k) = [h_fwd_final, h_bwd_final]."""
    h_fwd, cache_fwd = gru_forward(forward, x)
    h_bwd, cache_bwd = gru_forward(backward, x[:, ::-1])
    return np.concatenate([h_fwd, h_bwd], axis=1), {"fwd": cache_fwd, "bwd": cache_bwd}


def bigru_backward(
    forward: GruParams, backward: GruParams, cache: dict, d_readout: np.ndarray
) -> tuple[GruParams, GruParams]:
    k = forward.hidden_size
    grad_fwd = gru_backward(forward, cache["fwd"], d_readout[:, :k])
    grad_bwd = gru_backward(backward, cache["bwd"], d_readout[:, k:])
    return grad_fwd, grad_bwd
