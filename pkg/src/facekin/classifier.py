"""Two-stream recurrent classifier over landmark clips.

One stream reads the per-frame aligned feature vectors of a clip, the other
reads their first differences. Each stream is a bidirectional GRU whose
concatenated final hidden states feed a small fully connected head ending in
a two-way softmax; the model's probability is the mean of the stream
probabilities. Training minimises cross-entropy of the fused probability
with exact backpropagation through time and Adam updates.

Everything is plain numpy and deterministic given the seed: parameter
initialisation, the train/validation split, batch order and dropout masks
all come from one generator in a fixed order.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field, fields

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .errors import SingleClassError
from .geometry import FEATURE_DIM, ClipSample
from .gru import GruParams, bigru_backward, bigru_forward, init_gru_params, xavier_uniform

logger = logging.getLogger(__name__)

HEAD_HIDDEN = 64
N_CLASSES = 2

_PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class TrainConfig:
    """Training settings; defaults are the calibrated pipeline values."""

    hidden_size: int = 64           # GRU state size per direction
    learning_rate: float = 1e-3
    batch_size: int = 1024
    max_epochs: int = 500
    patience: int = 50              # epochs without val-accuracy improvement
    split_fraction: float = 0.8     # fraction of clips used for updates
    dropout_input: float = 0.25
    dropout_hidden: float = 0.5
    logit_dropout: bool = True      # extra dropout on the logits when training
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    rng_seed: int = 0
    streams: str = "both"           # "both" | "coords" | "deltas"

    def __post_init__(self):
        if self.streams not in ("both", "coords", "deltas"):
            raise ValueError(f"streams must be both/coords/deltas, got {self.streams!r}")
        if not 0 < self.split_fraction < 1:
            raise ValueError("split_fraction must be in (0, 1)")
        if not self.learning_rate > 0.0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        for name in ("dropout_input", "dropout_hidden"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {rate}")


@dataclass
class HeadParams:
    """Fully connected head: 2k -> 64 -> 2."""

    fc1_w: np.ndarray
    fc1_b: np.ndarray
    fc2_w: np.ndarray
    fc2_b: np.ndarray

    def named_arrays(self, prefix: str = ""):
        for f in fields(self):
            yield f"{prefix}{f.name}", getattr(self, f.name)


@dataclass
class StreamParams:
    """One stream: bidirectional GRU plus head."""

    gru_fwd: GruParams
    gru_bwd: GruParams
    head: HeadParams

    def named_arrays(self, prefix: str = ""):
        yield from self.gru_fwd.named_arrays(prefix + "gru_fwd.")
        yield from self.gru_bwd.named_arrays(prefix + "gru_bwd.")
        yield from self.head.named_arrays(prefix + "head.")


STREAM_NAMES = ("coords", "deltas")


@dataclass
class TwoStreamModel:
    """Full model state plus the template it was trained against.

    stream_coords reads clip.coords (input length T), stream_deltas reads clip.deltas
    (length T-1). Either may be None when the model was trained single
    stream. template_points/template_provenance make the model file
    self-contained for inference.
    """

    k: int
    input_length: int
    streams: str = "both"
    stream_coords: StreamParams | None = None
    stream_deltas: StreamParams | None = None
    template_points: np.ndarray | None = None
    template_provenance: str = ""

    def active_streams(self) -> list[tuple[str, StreamParams]]:
        out = []
        if self.stream_coords is not None:
            out.append(("coords", self.stream_coords))
        if self.stream_deltas is not None:
            out.append(("deltas", self.stream_deltas))
        return out

    def named_arrays(self):
        for name, stream in self.active_streams():
            yield from stream.named_arrays(f"stream_{name}.")


def _init_head(rng: np.random.Generator, k: int) -> HeadParams:
    return HeadParams(
        fc1_w=xavier_uniform(rng, 2 * k, HEAD_HIDDEN),
        fc1_b=np.zeros(HEAD_HIDDEN),
        fc2_w=xavier_uniform(rng, HEAD_HIDDEN, N_CLASSES),
        fc2_b=np.zeros(N_CLASSES),
    )


def _init_stream(rng: np.random.Generator, k: int) -> StreamParams:
    return StreamParams(
        gru_fwd=init_gru_params(rng, FEATURE_DIM, k),
        gru_bwd=init_gru_params(rng, FEATURE_DIM, k),
        head=_init_head(rng, k),
    )


def init_model(
    rng: np.random.Generator,
    k: int,
    input_length: int,
    streams: str = "both",
) -> TwoStreamModel:
    """Fresh model with Xavier-uniform weights and zero biases."""
    return TwoStreamModel(
        k=k,
        input_length=input_length,
        streams=streams,
        stream_coords=_init_stream(rng, k) if streams in ("both", "coords") else None,
        stream_deltas=_init_stream(rng, k) if streams in ("both", "deltas") else None,
    )


def _zeros_like_stream(stream: StreamParams) -> StreamParams:
    return StreamParams(
        gru_fwd=stream.gru_fwd.zeros_like(),
        gru_bwd=stream.gru_bwd.zeros_like(),
        head=HeadParams(
            fc1_w=np.zeros_like(stream.head.fc1_w),
            fc1_b=np.zeros_like(stream.head.fc1_b),
            fc2_w=np.zeros_like(stream.head.fc2_w),
            fc2_b=np.zeros_like(stream.head.fc2_b),
        ),
    )


def zeros_like_model(model: TwoStreamModel) -> TwoStreamModel:
    return TwoStreamModel(
        k=model.k,
        input_length=model.input_length,
        streams=model.streams,
        stream_coords=None if model.stream_coords is None else _zeros_like_stream(model.stream_coords),
        stream_deltas=None if model.stream_deltas is None else _zeros_like_stream(model.stream_deltas),
    )


def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    """Inverted dropout mask: zeros with probability `rate`, survivors scaled
    by 1/(1-rate) so the expected pre-activation matches evaluation mode."""
    return (rng.random(shape) >= rate) / (1.0 - rate)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def fuse(stream_probs: list[np.ndarray]) -> np.ndarray:
    """Mean of the per-stream class probability rows."""
    if not stream_probs:
        raise ValueError("need at least one stream to fuse")
    return np.mean(stream_probs, axis=0)


def stream_forward(
    stream: StreamParams,
    x: np.ndarray,
    config: TrainConfig = TrainConfig(),
    rng: np.random.Generator | None = None,
    train: bool = False,
) -> tuple[np.ndarray, dict]:
    """Forward pass of one stream on a (N, T, 136) batch.

    Returns (probs, cache) with probs of shape (N, 2). In training mode,
    dropout is applied to the input sequence, the GRU readout, the first
    fully connected layer's output and (when configured) the logits; masks
    are drawn from `rng`. Evaluation mode applies no dropout.
    """
    cache: dict = {}
    if train and config.dropout_input > 0:
        mask_in = dropout_mask(rng, x.shape, config.dropout_input)
        x = x * mask_in
    readout, gru_cache = bigru_forward(stream.gru_fwd, stream.gru_bwd, x)
    cache["gru"] = gru_cache

    u0 = readout
    if train and config.dropout_hidden > 0:
        cache["mask_readout"] = dropout_mask(rng, u0.shape, config.dropout_hidden)
        u0 = u0 * cache["mask_readout"]
    a1 = u0 @ stream.head.fc1_w + stream.head.fc1_b
    h1 = np.maximum(a1, 0.0)
    if train and config.dropout_hidden > 0:
        cache["mask_hidden"] = dropout_mask(rng, h1.shape, config.dropout_hidden)
        h1d = h1 * cache["mask_hidden"]
    else:
        h1d = h1
    logits = h1d @ stream.head.fc2_w + stream.head.fc2_b
    if train and config.logit_dropout and config.dropout_hidden > 0:
        cache["mask_logits"] = dropout_mask(rng, logits.shape, config.dropout_hidden)
        logits = logits * cache["mask_logits"]
    cache.update(u0=u0, a1=a1, h1d=h1d)
    return softmax(logits), cache


def _stream_backward(
    stream: StreamParams, cache: dict, d_logits: np.ndarray
) -> StreamParams:
    """Parameter gradients of one stream given the loss gradient on logits."""
    if "mask_logits" in cache:
        d_logits = d_logits * cache["mask_logits"]
    head = stream.head
    d_fc2_w = cache["h1d"].T @ d_logits
    d_fc2_b = d_logits.sum(axis=0)
    d_h1d = d_logits @ head.fc2_w.T
    d_h1 = d_h1d * cache["mask_hidden"] if "mask_hidden" in cache else d_h1d
    d_a1 = d_h1 * (cache["a1"] > 0)
    d_fc1_w = cache["u0"].T @ d_a1
    d_fc1_b = d_a1.sum(axis=0)
    d_u0 = d_a1 @ head.fc1_w.T
    if "mask_readout" in cache:
        d_u0 = d_u0 * cache["mask_readout"]
    grad_fwd, grad_bwd = bigru_backward(stream.gru_fwd, stream.gru_bwd, cache["gru"], d_u0)
    return StreamParams(
        gru_fwd=grad_fwd,
        gru_bwd=grad_bwd,
        head=HeadParams(fc1_w=d_fc1_w, fc1_b=d_fc1_b, fc2_w=d_fc2_w, fc2_b=d_fc2_b),
    )


def stack_clips(clips: list[ClipSample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack clip samples into (A, B, labels) batch arrays."""
    if not clips:
        raise ValueError("empty clip list")
    a = np.stack([c.coords for c in clips])
    b = np.stack([c.deltas for c in clips])
    labels = np.array(
        [-1 if c.label is None else int(c.label) for c in clips], dtype=np.intp
    )
    return a, b, labels


def _fused_loss_arrays(
    model: TwoStreamModel,
    a: np.ndarray,
    b: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
    rng: np.random.Generator | None,
    train: bool,
    want_grads: bool,
) -> tuple[float, TwoStreamModel | None]:
    n = a.shape[0]
    inputs = {"coords": a, "deltas": b}
    active = model.active_streams()
    probs, caches = {}, {}
    for name, stream in active:
        probs[name], caches[name] = stream_forward(
            stream, inputs[name], config, rng, train
        )
    p_fused = fuse([probs[name] for name, _ in active])
    idx = np.arange(n)
    p_true = np.maximum(p_fused[idx, labels], _PROB_FLOOR)
    loss = float(-np.mean(np.log(p_true)))
    if not want_grads:
        return loss, None

    # d loss / d p_fused[y]; each stream contributes 1/n_streams of p_fused.
    d_coef = -1.0 / (n * p_true)
    onehot = np.zeros((n, N_CLASSES))
    onehot[idx, labels] = 1.0
    n_streams = len(active)
    grads = zeros_like_model(model)
    for name, stream in active:
        p_s = probs[name]
        d_logits = (d_coef * p_s[idx, labels] / n_streams)[:, None] * (onehot - p_s)
        stream_grad = _stream_backward(stream, caches[name], d_logits)
        if name == "coords":
            grads.stream_coords = stream_grad
        else:
            grads.stream_deltas = stream_grad
    return loss, grads


def loss_and_grads(
    model: TwoStreamModel,
    clips: list[ClipSample],
    config: TrainConfig = TrainConfig(),
    rng: np.random.Generator | None = None,
    train: bool = True,
) -> tuple[float, TwoStreamModel]:
    """Fused cross-entropy loss and exact parameter gradients on a batch.

    The loss is -mean(log p_fused[label]) where p_fused is the mean of the
    active streams' softmax outputs. Gradients flow through the fusion into
    each stream (they are not the single-softmax shortcut) and through the
    full recurrence. With train=True dropout masks are drawn from rng.
    """
    a, b, labels = stack_clips(clips)
    if np.any(labels < 0):
        raise ValueError("all clips must be labelled for loss computation")
    loss, grads = _fused_loss_arrays(
        model, a, b, labels, config, rng, train, want_grads=True
    )
    return loss, grads


@dataclass
class AdamState:
    """First/second moment accumulators keyed by parameter name."""

    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_model(cls, model: TwoStreamModel) -> "AdamState":
        state = cls()
        for name, arr in model.named_arrays():
            state.m[name] = np.zeros_like(arr)
            state.v[name] = np.zeros_like(arr)
        return state


def adam_step(
    model: TwoStreamModel,
    grads: TwoStreamModel,
    state: AdamState,
    config: TrainConfig = TrainConfig(),
) -> tuple[TwoStreamModel, AdamState]:
    """One Adam update with bias correction; parameters updated in place."""
    state.t += 1
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_eps
    lr = config.learning_rate
    corr1 = 1.0 - b1**state.t
    corr2 = 1.0 - b2**state.t
    grad_map = dict(grads.named_arrays())
    for name, param in model.named_arrays():
        g = grad_map[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        param -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)
    return model, state


def _predict_probs(
    model: TwoStreamModel, a: np.ndarray, b: np.ndarray, chunk: int = 512
) -> dict[str, np.ndarray]:
    """Per-stream and fused fake probabilities in evaluation mode."""
    inputs = {"coords": a, "deltas": b}
    active = model.active_streams()
    n = a.shape[0]
    out = {name: np.empty(n) for name, _ in active}
    fused = np.empty(n)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        chunk_probs = []
        for name, stream in active:
            p, _ = stream_forward(stream, inputs[name][start:stop], train=False)
            out[name][start:stop] = p[:, 1]
            chunk_probs.append(p)
        fused[start:stop] = fuse(chunk_probs)[:, 1]
    out["fused"] = fused
    return out


def predict_clip_probs(model: TwoStreamModel, clips: list[ClipSample]) -> dict[str, np.ndarray]:
    """Evaluate clips; returns {"fused": (N,), and one entry per stream}."""
    a, b, _ = stack_clips(clips)
    return _predict_probs(model, a, b)


@dataclass
class Prediction:
    """Video-level verdict aggregated over its clips."""

    p_fake: float
    p_fake_coords: float | None
    p_fake_deltas: float | None
    label: int            # 1 = fake; ties at 0.5 resolve to real
    n_clips: int


def predict_video(model: TwoStreamModel, clips: list[ClipSample]) -> Prediction:
    """Aggregate clip probabilities by averaging; fake iff p_fake > 0.5."""
    if not clips:
        raise ValueError("empty clip list: video has no full-length clips")
    probs = predict_clip_probs(model, clips)
    p_coords = float(np.mean(probs["coords"])) if "coords" in probs else None
    p_deltas = float(np.mean(probs["deltas"])) if "deltas" in probs else None
    p_fused = float(np.mean(probs["fused"]))
    return Prediction(
        p_fake=p_fused,
        p_fake_coords=p_coords,
        p_fake_deltas=p_deltas,
        label=int(p_fused > 0.5),
        n_clips=len(clips),
    )


@dataclass
class TrainResult:
    """Best model found plus the training trace and the split used."""

    model: TwoStreamModel
    history: list[dict]
    train_indices: np.ndarray
    val_indices: np.ndarray
    best_epoch: int
    best_val_accuracy: float


def train(clips: list[ClipSample], config: TrainConfig = TrainConfig()) -> TrainResult:
    """Train a model on labelled clips with early stopping.

    The clip list is split (seeded shuffle) into update and validation
    parts; after each epoch validation accuracy is measured in evaluation
    mode and the best-scoring epoch's parameters are kept. Training stops
    after `patience` epochs without improvement or at max_epochs.
    """
    if not clips:
        raise ValueError("empty clip list")
    labels = np.array([c.label for c in clips])
    if any(c.label not in (0, 1) for c in clips):
        raise ValueError("all clips must carry a 0/1 label for training")
    if len(set(labels.tolist())) < 2:
        raise SingleClassError("training data contains a single class")
    lengths = {c.coords.shape[0] for c in clips}
    if len(lengths) != 1:
        raise ValueError(f"clips have mixed lengths: {sorted(lengths)}")
    input_length = lengths.pop()

    rng = np.random.default_rng(config.rng_seed)
    n = len(clips)
    order = rng.permutation(n)
    n_train = int(round(config.split_fraction * n))
    n_train = min(max(n_train, 1), n - 1)
    train_idx, val_idx = order[:n_train], order[n_train:]

    model = init_model(rng, config.hidden_size, input_length, config.streams)
    state = AdamState.for_model(model)

    a_all, b_all, y_all = stack_clips(clips)
    a_tr, b_tr, y_tr = a_all[train_idx], b_all[train_idx], y_all[train_idx]
    a_val, b_val, y_val = a_all[val_idx], b_all[val_idx], y_all[val_idx]

    best_model = copy.deepcopy(model)
    best_acc = -1.0
    best_epoch = 0
    stale = 0
    history: list[dict] = []
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(n_train)
        total_loss = 0.0
        for start in range(0, n_train, config.batch_size):
            sel = perm[start:start + config.batch_size]
            loss, grads = _fused_loss_arrays(
                model, a_tr[sel], b_tr[sel], y_tr[sel],
                config, rng, train=True, want_grads=True,
            )
            adam_step(model, grads, state, config)
            total_loss += loss * sel.size
        train_loss = total_loss / n_train

        val_probs = _predict_probs(model, a_val, b_val)
        val_acc = float(np.mean((val_probs["fused"] > 0.5).astype(int) == y_val))
        history.append(
            {"epoch": epoch, "train_loss": train_loss, "val_accuracy": val_acc}
        )
        if val_acc > best_acc:
            best_acc = val_acc
            best_model = copy.deepcopy(model)
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
        if stale >= config.patience:
            logger.info("early stop at epoch %d (best %d)", epoch, best_epoch)
            break
    return TrainResult(
        model=best_model,
        history=history,
        train_indices=train_idx,
        val_indices=val_idx,
        best_epoch=best_epoch,
        best_val_accuracy=best_acc,
    )


class TwoStreamClassifier(BaseEstimator, ClassifierMixin):
    """Estimator wrapper over `train` / `predict_clip_probs`.

    X is a float array of shape (n_clips, clip_length, 136) holding aligned
    per-frame feature vectors; the difference stream is derived internally.
    y holds 0 (real) / 1 (fake) labels.
    """

    def __init__(
        self,
        hidden_size: int = 64,
        learning_rate: float = 1e-3,
        batch_size: int = 1024,
        max_epochs: int = 500,
        patience: int = 50,
        split_fraction: float = 0.8,
        dropout_input: float = 0.25,
        dropout_hidden: float = 0.5,
        logit_dropout: bool = True,
        streams: str = "both",
        random_state: int = 0,
    ):
        self.hidden_size = hidden_size
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.split_fraction = split_fraction
        self.dropout_input = dropout_input
        self.dropout_hidden = dropout_hidden
        self.logit_dropout = logit_dropout
        self.streams = streams
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            hidden_size=self.hidden_size,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            split_fraction=self.split_fraction,
            dropout_input=self.dropout_input,
            dropout_hidden=self.dropout_hidden,
            logit_dropout=self.logit_dropout,
            streams=self.streams,
            rng_seed=self.random_state,
        )

    @staticmethod
    def _as_clips(X, y=None) -> list[ClipSample]:
        arr = np.asarray(X, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != FEATURE_DIM:
            raise ValueError(
                f"X must have shape (n, clip_length, {FEATURE_DIM}), got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("X contains non-finite values")
        labels = [None] * arr.shape[0] if y is None else np.asarray(y)
        return [
            ClipSample(
                coords=arr[i],
                deltas=np.diff(arr[i], axis=0),
                label=None if labels[i] is None else int(labels[i]),
                source_id=f"clip-{i}",
            )
            for i in range(arr.shape[0])
        ]

    def fit(self, X, y):
        y = np.asarray(y)
        if set(np.unique(y).tolist()) - {0, 1}:
            raise ValueError("labels must be 0 (real) or 1 (fake)")
        clips = self._as_clips(X, y)
        self.train_result_ = train(clips, self._config())
        self.model_ = self.train_result_.model
        self.classes_ = np.array([0, 1])
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("TwoStreamClassifier must be fitted first")

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        clips = self._as_clips(X)
        p_fake = predict_clip_probs(self.model_, clips)["fused"]
        return np.column_stack([1.0 - p_fake, p_fake])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] > 0.5).astype(int)
