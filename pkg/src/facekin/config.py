"""Run configuration: flat key = value text files plus CLI overrides."""

from __future__ import annotations

from dataclasses import dataclass, fields

from .calibration import DEFAULT_PROCESS_NOISE
from .classifier import TrainConfig
from .dataio import CONFIG_KIND, read_key_value_lines
from .errors import ConfigError
from .tracking import LKConfig


@dataclass
class RunConfig:
    """Every tunable of the pipeline, with the calibrated defaults.

    Loadable from a `key = value` text file ('#' comments allowed); unknown
    keys are rejected so typos fail loudly.
    """

    # tracking
    lk_half_size: int = 10
    lk_sigma: float = 5.0
    lk_levels: int = 3
    lk_max_iters: int = 30
    lk_convergence_eps: float = 0.01
    lk_fb_threshold: float = 1.0
    lk_min_hessian_det: float = 1e-6
    # calibration
    kalman_q: float = DEFAULT_PROCESS_NOISE
    # embedding
    clip_length: int = 60
    clip_stride: int = 0          # 0 means clip_length (back-to-back clips)
    # classifier
    hidden_size: int = 64
    learning_rate: float = 1e-3
    batch_size: int = 1024
    max_epochs: int = 500
    patience: int = 50
    split_fraction: float = 0.8
    dropout_input: float = 0.25
    dropout_hidden: float = 0.5
    logit_dropout: bool = True
    streams: str = "both"
    # run
    seed: int = 0
    jobs: int = 1

    def lk_config(self) -> LKConfig:
        return LKConfig(
            half_size=self.lk_half_size,
            sigma=self.lk_sigma,
            levels=self.lk_levels,
            max_iters=self.lk_max_iters,
            convergence_eps=self.lk_convergence_eps,
            fb_threshold=self.lk_fb_threshold,
            min_hessian_det=self.lk_min_hessian_det,
        )

    def train_config(self) -> TrainConfig:
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
            rng_seed=self.seed,
        )

    @property
    def effective_stride(self) -> int:
        return self.clip_stride if self.clip_stride > 0 else self.clip_length


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind in ("int", int):
            return int(value)
        if kind in ("float", float):
            return float(value)
        if kind in ("bool", bool):
            low = value.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        return value
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from None


def read_run_config(path) -> RunConfig:
    """Parse a config file, rejecting unknown keys."""
    values = {}
    for number, key, value in read_key_value_lines(path, CONFIG_KIND):
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{number}: unknown config key {key!r}")
        values[key] = _coerce(key, value)
    return RunConfig(**values)


def write_run_config(path, config: RunConfig) -> None:
    from .dataio import format_float, version_stamp

    with open(path, "w", encoding="utf-8") as fh:
        fh.write(version_stamp(CONFIG_KIND) + "\n")
        for f in fields(RunConfig):
            value = getattr(config, f.name)
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, float):
                text = format_float(value)
            else:
                text = str(value)
            fh.write(f"{f.name} = {text}\n")
