"""Versioned plain-text file formats.

All formats share one convention: an optional first line `# facekin-<kind>
v<N>` stamps the format version (readers reject stamps newer than they
understand; an absent stamp reads as version 1), further `#` lines and blank
lines are ignored, and floats are written with 17 significant digits so a
write/read round trip is bit exact.

Formats:

* landmarks: one record per line, `frame_index x1 y1 ... x68 y68` with an
  optional trailing 68-bit validity bitmap (one 0/1 token per landmark).
* template: `provenance = <id>` then 68 `x y` lines.
* model: `key = value` metadata lines followed by `tensor <name> <dims...>`
  blocks, one row of numbers per line.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .classifier import GruParams, HeadParams, StreamParams, TwoStreamModel
from .errors import (
    FormatVersionError,
    LandmarkParseError,
    WrongPointCountError,
)
from .geometry import FEATURE_DIM, CanonicalTemplate
from .validation import N_LANDMARKS

LANDMARKS_KIND = "landmarks"
TEMPLATE_KIND = "template"
MODEL_KIND = "model"
CONFIG_KIND = "config"
FORMAT_VERSION = 1


def format_float(value: float) -> str:
    return f"{value:.17g}"


def version_stamp(kind: str) -> str:
    return f"# facekin-{kind} v{FORMAT_VERSION}"


def _read_lines(path, kind: str) -> list[tuple[int, str]]:
    """Content lines as (line_number, text); checks the version stamp."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read().splitlines()
    lines = []
    stamp_seen = False
    for number, line in enumerate(raw, start=1):
        text = line.strip()
        if not text:
            continue
        if text.startswith("#"):
            if not stamp_seen and not lines and text.startswith("# facekin-"):
                stamp_seen = True
                _check_stamp(text, kind, path)
            continue
        lines.append((number, text))
    return lines


def _check_stamp(text: str, kind: str, path) -> None:
    body = text[len("# facekin-"):].strip()
    parts = body.split()
    if len(parts) != 2 or not parts[1].startswith("v"):
        raise FormatVersionError(f"{path}: malformed version stamp {text!r}")
    file_kind, version_token = parts
    if file_kind != kind:
        raise FormatVersionError(
            f"{path}: expected a {kind} file, found {file_kind!r}"
        )
    try:
        version = int(version_token[1:])
    except ValueError:
        raise FormatVersionError(f"{path}: malformed version stamp {text!r}") from None
    if version > FORMAT_VERSION:
        raise FormatVersionError(
            f"{path}: format version {version} is newer than the supported "
            f"version {FORMAT_VERSION}"
        )


def read_key_value_lines(path, kind: str) -> list[tuple[int, str, str]]:
    """Parse a flat `key = value` file into (line_number, key, value) rows."""
    from .errors import ConfigError

    rows = []
    for number, text in _read_lines(path, kind):
        if "=" not in text:
            raise ConfigError(f"{path}:{number}: expected 'key = value', got {text!r}")
        key, _, value = text.partition("=")
        rows.append((number, key.strip(), value.strip()))
    return rows


@dataclass
class LandmarkSequence:
    """Per-frame landmark detections for one video.

    frame_indices are strictly increasing integers; validity (optional)
    flags which landmarks were confirmed by tracking.
    """

    frame_indices: np.ndarray            # (T,) int
    points: np.ndarray                   # (T, 68, 2) float
    validity: np.ndarray | None = None   # (T, 68) bool

    def __post_init__(self):
        self.frame_indices = np.asarray(self.frame_indices, dtype=np.int64)
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 3 or self.points.shape[1:] != (N_LANDMARKS, 2):
            raise ValueError(
                f"points must have shape (T, {N_LANDMARKS}, 2), got {self.points.shape}"
            )
        if self.frame_indices.shape != (self.points.shape[0],):
            raise ValueError("frame_indices length must match points")
        if self.frame_indices.size > 1 and np.any(np.diff(self.frame_indices) <= 0):
            raise ValueError("frame indices must be strictly increasing")
        if self.validity is not None:
            self.validity = np.asarray(self.validity, dtype=bool)
            if self.validity.shape != (self.points.shape[0], N_LANDMARKS):
                raise ValueError(
                    f"validity must have shape (T, {N_LANDMARKS}), "
                    f"got {self.validity.shape}"
                )

    def __len__(self) -> int:
        return self.points.shape[0]


def write_landmarks(path, sequence: LandmarkSequence) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(version_stamp(LANDMARKS_KIND) + "\n")
        for t in range(len(sequence)):
            tokens = [str(int(sequence.frame_indices[t]))]
            tokens += [format_float(v) for v in sequence.points[t].reshape(-1)]
            if sequence.validity is not None:
                tokens += [str(int(v)) for v in sequence.validity[t]]
            fh.write(" ".join(tokens) + "\n")


def read_landmarks(path) -> LandmarkSequence:
    """Parse a landmark file; empty files yield an empty sequence."""
    lines = _read_lines(path, LANDMARKS_KIND)
    indices, frames, bits = [], [], []
    has_validity = False
    for number, text in lines:
        tokens = text.split()
        if len(tokens) not in (1 + FEATURE_DIM, 1 + FEATURE_DIM + N_LANDMARKS):
            n_coords = len(tokens) - 1
            raise WrongPointCountError(
                f"{path}:{number}: expected {FEATURE_DIM} coordinates "
                f"(optionally + {N_LANDMARKS} validity bits), got {n_coords} values"
            )
        try:
            index = int(tokens[0])
            coords = np.array([float(v) for v in tokens[1:1 + FEATURE_DIM]])
        except ValueError as exc:
            raise LandmarkParseError(f"{path}:{number}: {exc}") from None
        if not np.all(np.isfinite(coords)):
            raise LandmarkParseError(f"{path}:{number}: non-finite coordinate")
        row_valid = np.ones(N_LANDMARKS, dtype=bool)
        if len(tokens) == 1 + FEATURE_DIM + N_LANDMARKS:
            has_validity = True
            tail = tokens[1 + FEATURE_DIM:]
            if any(b not in ("0", "1") for b in tail):
                raise LandmarkParseError(
                    f"{path}:{number}: validity bits must be 0 or 1"
                )
            row_valid = np.array([b == "1" for b in tail])
        indices.append(index)
        frames.append(coords.reshape(N_LANDMARKS, 2))
        bits.append(row_valid)
    if not indices:
        return LandmarkSequence(
            frame_indices=np.zeros(0, dtype=np.int64),
            points=np.zeros((0, N_LANDMARKS, 2)),
        )
    try:
        return LandmarkSequence(
            frame_indices=np.array(indices, dtype=np.int64),
            points=np.stack(frames),
            validity=np.stack(bits) if has_validity else None,
        )
    except ValueError as exc:
        raise LandmarkParseError(f"{path}: {exc}") from None


def write_template(path, template: CanonicalTemplate) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(version_stamp(TEMPLATE_KIND) + "\n")
        fh.write(f"provenance = {template.provenance}\n")
        for x, y in template.points:
            fh.write(f"{format_float(x)} {format_float(y)}\n")


def read_template(path) -> CanonicalTemplate:
    lines = _read_lines(path, TEMPLATE_KIND)
    provenance = ""
    points = []
    for number, text in lines:
        if "=" in text:
            key, _, value = text.partition("=")
            if key.strip() != "provenance":
                raise LandmarkParseError(
                    f"{path}:{number}: unknown template field {key.strip()!r}"
                )
            provenance = value.strip()
            continue
        tokens = text.split()
        if len(tokens) != 2:
            raise LandmarkParseError(
                f"{path}:{number}: expected 'x y', got {len(tokens)} values"
            )
        try:
            points.append((float(tokens[0]), float(tokens[1])))
        except ValueError as exc:
            raise LandmarkParseError(f"{path}:{number}: {exc}") from None
    if len(points) != N_LANDMARKS:
        raise WrongPointCountError(
            f"{path}: template must contain {N_LANDMARKS} points, got {len(points)}"
        )
    return CanonicalTemplate(
        points=np.asarray(points, dtype=np.float64), provenance=provenance
    )


def _write_tensor(fh, name: str, arr: np.ndarray) -> None:
    dims = " ".join(str(d) for d in arr.shape)
    fh.write(f"tensor {name} {dims}\n")
    rows = arr.reshape(1, -1) if arr.ndim == 1 else arr
    for row in rows:
        fh.write(" ".join(format_float(v) for v in row) + "\n")


def write_model(path, model: TwoStreamModel) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(version_stamp(MODEL_KIND) + "\n")
        fh.write(f"k = {model.k}\n")
        fh.write(f"input_length = {model.input_length}\n")
        fh.write(f"streams = {model.streams}\n")
        fh.write(f"template_provenance = {model.template_provenance}\n")
        if model.template_points is not None:
            _write_tensor(fh, "template", model.template_points)
        for name, arr in model.named_arrays():
            _write_tensor(fh, name, arr)


def _parse_tensor_block(path, lines, pos, shape) -> tuple[np.ndarray, int]:
    n_rows = 1 if len(shape) == 1 else shape[0]
    row_len = shape[0] if len(shape) == 1 else shape[1]
    rows = []
    for r in range(n_rows):
        if pos >= len(lines):
            raise LandmarkParseError(f"{path}: truncated tensor block")
        number, text = lines[pos]
        tokens = text.split()
        if len(tokens) != row_len:
            raise LandmarkParseError(
                f"{path}:{number}: expected {row_len} values, got {len(tokens)}"
            )
        try:
            rows.append([float(v) for v in tokens])
        except ValueError as exc:
            raise LandmarkParseError(f"{path}:{number}: {exc}") from None
        pos += 1
    arr = np.asarray(rows, dtype=np.float64)
    return arr.reshape(shape), pos


def read_model(path) -> TwoStreamModel:
    lines = _read_lines(path, MODEL_KIND)
    meta: dict[str, str] = {}
    tensors: dict[str, np.ndarray] = {}
    pos = 0
    while pos < len(lines):
        number, text = lines[pos]
        if text.startswith("tensor "):
            header = text.split()
            if len(header) < 3:
                raise LandmarkParseError(f"{path}:{number}: malformed tensor header")
            name = header[1]
            try:
                shape = tuple(int(d) for d in header[2:])
            except ValueError:
                raise LandmarkParseError(
                    f"{path}:{number}: malformed tensor dimensions"
                ) from None
            tensors[name], pos = _parse_tensor_block(path, lines, pos + 1, shape)
        elif "=" in text:
            key, _, value = text.partition("=")
            meta[key.strip()] = value.strip()
            pos += 1
        else:
            raise LandmarkParseError(f"{path}:{number}: unexpected line {text!r}")

    try:
        k = int(meta["k"])
        input_length = int(meta["input_length"])
        streams = meta["streams"]
    except KeyError as exc:
        raise LandmarkParseError(f"{path}: missing model field {exc}") from None

    def build_stream(prefix: str) -> StreamParams:
        def grab(name, shape):
            full = prefix + name
            if full not in tensors:
                raise LandmarkParseError(f"{path}: missing tensor {full}")
            if tensors[full].shape != shape:
                raise LandmarkParseError(
                    f"{path}: tensor {full} has shape {tensors[full].shape}, "
                    f"expected {shape}"
                )
            return tensors[full]

        def gru(sub):
            return GruParams(
                w_z=grab(f"{sub}.w_z", (FEATURE_DIM, k)),
                w_r=grab(f"{sub}.w_r", (FEATURE_DIM, k)),
                w_h=grab(f"{sub}.w_h", (FEATURE_DIM, k)),
                u_z=grab(f"{sub}.u_z", (k, k)),
                u_r=grab(f"{sub}.u_r", (k, k)),
                u_h=grab(f"{sub}.u_h", (k, k)),
                b_z=grab(f"{sub}.b_z", (k,)),
                b_r=grab(f"{sub}.b_r", (k,)),
                b_h=grab(f"{sub}.b_h", (k,)),
            )

        head = HeadParams(
            fc1_w=grab("head.fc1_w", (2 * k, 64)),
            fc1_b=grab("head.fc1_b", (64,)),
            fc2_w=grab("head.fc2_w", (64, 2)),
            fc2_b=grab("head.fc2_b", (2,)),
        )
        return StreamParams(gru_fwd=gru("gru_fwd"), gru_bwd=gru("gru_bwd"), head=head)

    template_points = tensors.get("template")
    if template_points is not None and template_points.shape != (N_LANDMARKS, 2):
        raise LandmarkParseError(f"{path}: template tensor has the wrong shape")
    return TwoStreamModel(
        k=k,
        input_length=input_length,
        streams=streams,
        stream_coords=build_stream("stream_coords.") if streams in ("both", "coords") else None,
        stream_deltas=build_stream("stream_deltas.") if streams in ("both", "deltas") else None,
        template_points=template_points,
        template_provenance=meta.get("template_provenance", ""),
    )


def write_csv(path, header: list[str], rows: list[list]) -> None:
    import csv

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
