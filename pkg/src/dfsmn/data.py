"""Synthetic sequence tasks and the ``FSMD`` dataset file format.

Each task isolates one architectural knob:

* ``delayed_echo(k)``: the label at ``t`` is the class shown at ``t - k``,
  so it needs look-back reach of at least ``k`` frames.
* ``future_cue(j)``: the label at ``t`` is the class shown at ``t + j``,
  so it needs ``j`` frames of lookahead.
* ``sparse_parity(w)``: the label is the parity of event flags over
  ``[t - w, t]``, so it needs accumulation over a window.

Near the sequence edges where the referenced frame does not exist, the
label falls back to the current frame's class (the model can tell it is
at an edge from the zero padding).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError
from .lfr import FrameDataset

TASKS = ("delayed_echo", "future_cue", "sparse_parity")

MAGIC = b"FSMD"
VERSION = 1
EVENT_RATE = 0.25


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    lag: int  # k for delayed_echo, j for future_cue, window for sparse_parity
    num_sequences: int = 16
    frames_per_sequence: int = 200
    feature_dim: int = 8
    num_classes: int = 4
    noise_std: float = 0.0
    seed: int = 0

    def validate(self) -> "TaskSpec":
        if self.kind not in TASKS:
            raise ConfigError(f"unknown task {self.kind!r}, expected one of {', '.join(TASKS)}")
        if self.lag < 0 or self.lag >= self.frames_per_sequence:
            raise ConfigError(f"lag {self.lag} must lie in [0, frames_per_sequence)")
        if self.num_sequences < 0 or self.frames_per_sequence < 1:
            raise ConfigError("need a nonnegative sequence count and at least one frame per sequence")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be nonnegative")
        if self.kind == "sparse_parity":
            if self.num_classes != 2 or self.feature_dim < 1:
                raise ConfigError("sparse_parity needs num_classes=2 and feature_dim>=1")
        elif self.num_classes < 2 or self.feature_dim < self.num_classes:
            raise ConfigError("need num_classes >= 2 and feature_dim >= num_classes")
        return self


def _one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((labels.size, k), dtype=np.float32)
    out[np.arange(labels.size), labels] = 1.0
    return out


def _sequence(task: TaskSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    T, D, K, lag = task.frames_per_sequence, task.feature_dim, task.num_classes, task.lag
    feats = np.zeros((T, D))
    if task.kind == "sparse_parity":
        events = (rng.random(T) < EVENT_RATE).astype(np.int64)
        feats[:, 0] = events
        csum = np.concatenate([[0], np.cumsum(events)])
        lo = np.maximum(np.arange(T) - lag, 0)
        labels = (csum[np.arange(T) + 1] - csum[lo]) % 2
    else:
        shown = rng.integers(0, K, size=T)
        feats[np.arange(T), shown] = 1.0
        labels = shown.copy()
        if task.kind == "delayed_echo":
            labels[lag:] = shown[: T - lag]
        else:
            labels[: T - lag] = shown[lag:]
    if task.noise_std > 0:
        feats += rng.normal(0.0, task.noise_std, size=feats.shape)
    return feats.astype(np.float32), _one_hot(labels, K)


def generate(task: TaskSpec) -> FrameDataset:
    task.validate()
    children = np.random.SeedSequence(task.seed).spawn(task.num_sequences)
    seqs = [_sequence(task, np.random.Generator(np.random.PCG64(s))) for s in children]
    return FrameDataset(seqs, frame_period_ms=10.0)


# ------------------------------------------------------------ file format

_HEADER = struct.Struct("<4sHI")
_SEQ = struct.Struct("<III")


def dumps_dataset(ds: FrameDataset) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, len(ds.sequences))]
    for feats, targets in ds.sequences:
        parts.append(_SEQ.pack(feats.shape[0], feats.shape[1], targets.shape[1]))
        parts.append(np.ascontiguousarray(feats, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(targets, dtype="<f4").tobytes())
    return b"".join(parts)


def loads_dataset(buf: bytes) -> FrameDataset:
    if len(buf) < _HEADER.size:
        raise FormatError("truncated dataset header", len(buf))
    magic, version, count = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported dataset version {version}", 4)
    off = _HEADER.size
    seqs = []
    for n in range(count):
        if off + _SEQ.size > len(buf):
            raise FormatError(f"truncated header of sequence {n}", off)
        T, D, K = _SEQ.unpack_from(buf, off)
        off += _SEQ.size
        blocks = []
        for rows, cols in ((T, D), (T, K)):
            nbytes = rows * cols * 4
            if off + nbytes > len(buf):
                raise FormatError(f"truncated data of sequence {n}", off)
            blocks.append(np.frombuffer(buf, dtype="<f4", count=rows * cols, offset=off).reshape(rows, cols).astype(np.float32))
            off += nbytes
        seqs.append((blocks[0], blocks[1]))
    if off != len(buf):
        raise FormatError(f"{len(buf) - off} trailing bytes after last sequence", off)
    return FrameDataset(seqs)


def save_dataset(ds: FrameDataset, path) -> None:
    Path(path).write_bytes(dumps_dataset(ds))


def load_dataset(path) -> FrameDataset:
    return loads_dataset(Path(path).read_bytes())
