"""Lower-frame-rate preprocessing and the in-memory dataset type."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, ShapeError


@dataclass
class FrameDataset:
    sequences: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    frame_period_ms: float = 10.0

    def __post_init__(self):
        for n, (feats, targets) in enumerate(self.sequences):
            if feats.ndim != 2 or targets.ndim != 2:
                raise DataError(f"sequence {n}: features and targets must be 2-D")
            if feats.shape[0] != targets.shape[0]:
                raise DataError(f"sequence {n}: {feats.shape[0]} feature frames but {targets.shape[0]} targets")

    def __len__(self) -> int:
        return len(self.sequences)

    @property
    def num_frames(self) -> int:
        return sum(f.shape[0] for f, _ in self.sequences)


def stack_context(features: np.ndarray, left: int, right: int) -> np.ndarray:
    """Splice each frame with ``left`` past and ``right`` future neighbours.

    Frames beyond either end are replicated from the nearest edge frame.
    """
    if left < 0 or right < 0:
        raise ConfigError("context sizes must be nonnegative")
    T = features.shape[0]
    if T == 0:
        return np.zeros((0, (left + 1 + right) * features.shape[1]), dtype=features.dtype)
    idx = np.clip(np.arange(T)[:, None] + np.arange(-left, right + 1)[None, :], 0, T - 1)
    return features[idx].reshape(T, -1)


def decimate(features: np.ndarray, factor: int) -> np.ndarray:
    if factor < 1:
        raise ConfigError(f"decimation factor must be >= 1, got {factor}")
    return features[::factor]


def _check_one_hot(hard: np.ndarray) -> None:
    ok = np.all((hard == 0) | (hard == 1)) and np.all(hard.sum(axis=1) == 1)
    if not ok:
        raise DataError("soft_targets needs one-hot target rows")


def soft_targets(hard: np.ndarray, factor: int) -> np.ndarray:
    """Average each run of ``factor`` one-hot rows into one soft target row.

    A short trailing group is averaged over the rows it actually has.
    """
    if factor < 1:
        raise ConfigError(f"decimation factor must be >= 1, got {factor}")
    _check_one_hot(hard)
    T, K = hard.shape
    groups = -(-T // factor)
    sums = np.zeros((groups, K), dtype=np.float64)
    np.add.at(sums, np.arange(T) // factor, hard)
    sizes = np.minimum(factor, T - np.arange(groups) * factor)
    return (sums / sizes[:, None]).astype(hard.dtype, copy=False)


def prepare_sequence(features: np.ndarray, targets: np.ndarray | None, spec, factor: int = 1, dtype=None):
    """Stack then decimate one raw sequence so it can be fed to ``forward``."""
    if features.shape[1] != spec.input_dim:
        raise ShapeError(f"features of width {features.shape[1]} do not match input dim {spec.input_dim}")
    x = decimate(stack_context(features, spec.context_left, spec.context_right), factor)
    if dtype is not None:
        x = x.astype(dtype, copy=False)
    if targets is None:
        return x
    if targets.shape[1] != spec.output_dim:
        raise DataError(f"targets have {targets.shape[1]} classes, model outputs {spec.output_dim}")
    y = targets if factor == 1 else soft_targets(targets, factor)
    return x, y


def prepare(dataset: FrameDataset, spec, factor: int = 1, dtype=None) -> list[tuple[np.ndarray, np.ndarray]]:
    try:
        return [prepare_sequence(f, t, spec, factor, dtype) for f, t in dataset.sequences]
    except ShapeError as exc:
        raise DataError(str(exc)) from None
