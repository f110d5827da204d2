"""Backward passes, frame-level cross entropy, and SGD training."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from . import lfr
from .errors import ConfigError, DataError
from .layers import MemoryBlockParams, Model, forward, strided_taps_backward
from .tensor import make_rng, relu_grad_mask

log = logging.getLogger(__name__)

Gradients = dict  # name -> array, same keys and shapes as Model.params

LOG_FLOOR = 1e-12


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    momentum: float = 0.9
    minibatch_frames: int = 4096
    epochs: int = 1
    seed: int = 0
    lfr_factor: int = 1
    halve_on_plateau: bool = False

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ConfigError(f"learning rate must be nonnegative, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.minibatch_frames < 1:
            raise ConfigError("minibatch must hold at least one frame")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")


def cross_entropy(posteriors: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean per-frame cross entropy and its gradient w.r.t. the logits."""
    if posteriors.shape != targets.shape:
        raise DataError(f"posterior shape {posteriors.shape} does not match targets {targets.shape}")
    sums = targets.sum(axis=1)
    if not np.allclose(sums, 1.0, rtol=0, atol=1e-6):
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise DataError(f"target row {bad} sums to {sums[bad]:.6g}, not 1")
    T = posteriors.shape[0]
    loss = -float(np.sum(targets * np.log(np.maximum(posteriors, LOG_FLOOR)))) / T
    return loss, (posteriors - targets) / T


def affine_backward(dy: np.ndarray, x: np.ndarray, W: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of ``y = x @ W + b``: returns ``(dx, dW, db)``."""
    return dy @ W.T, x.T @ dy, dy.sum(axis=0, keepdims=True)


def dense_backward(dy: np.ndarray, x: np.ndarray, z: np.ndarray, W: np.ndarray):
    """Gradients of ``y = relu(z)``, ``z = x @ W + b``."""
    return affine_backward(dy * relu_grad_mask(z), x, W)


def memory_block_backward(dout: np.ndarray, p: np.ndarray, mem: MemoryBlockParams, identity_term: bool, has_skip: bool):
    """Gradients of a memory block: returns ``(dp, da, dc, dskip)``.

    ``identity_term`` marks the cFSMN/DFSMN form that adds ``p_t`` itself;
    with an identity skip the output gradient also flows unchanged to the
    block below.
    """
    dp, da, dc = strided_taps_backward(dout, p, mem)
    if identity_term:
        dp += dout
    return dp, da, dc, (dout if has_skip else None)


def backward(model: Model, cache: list[dict], dlogits: np.ndarray) -> Gradients:
    spec, P = model.spec, model.params
    n_blocks = len(spec.blocks)
    if len(cache) != n_blocks + spec.dense_layers + 2:
        raise RuntimeError("activation record does not belong to this model")
    g: Gradients = {}

    dx, g["out.W"], g["out.b"] = affine_backward(dlogits, cache[-1]["x"], P["out.W"])
    dx, g["proj.W"], g["proj.b"] = affine_backward(dx, cache[-2]["x"], P["proj.W"])
    for j in reversed(range(spec.dense_layers)):
        rec = cache[n_blocks + j]
        dx, g[f"dense{j}.W"], g[f"dense{j}.b"] = dense_backward(dx, rec["x"], rec["z"], P[f"dense{j}.W"])

    for i in reversed(range(n_blocks)):
        rec, pre = cache[i], f"block{i}."
        mem = model.memory_params(i)
        if rec["kind"] == "fsmn":
            dzo = dx * relu_grad_mask(rec["zo"])
            dh_tilde, g[pre + "Wm"], g[pre + "bo"] = affine_backward(dzo, rec["h_tilde"], P[pre + "Wm"])
            dh_direct, g[pre + "Wo"], _ = affine_backward(dzo, rec["h"], P[pre + "Wo"])
            dh, g[pre + "a"], g[pre + "c"], skip_grad = memory_block_backward(dh_tilde, rec["h"], mem, False, False)
            dh += dh_direct
        else:
            dp, g[pre + "a"], g[pre + "c"], skip_grad = memory_block_backward(dx, rec["p"], mem, True, model.has_skip(i))
            dh, g[pre + "V"], g[pre + "bv"] = affine_backward(dp, rec["h"], P[pre + "V"])
        dx, g[pre + "W"], g[pre + "b"] = dense_backward(dh, rec["x"], rec["z"], P[pre + "W"])
        if skip_grad is not None:
            dx = dx + skip_grad

    return {name: g[name].astype(model.dtype, copy=False) for name in P}


def zero_gradients(model: Model) -> Gradients:
    return {k: np.zeros_like(v) for k, v in model.params.items()}


def sgd_step(model: Model, grads: Gradients, velocity: Gradients, cfg: TrainConfig) -> tuple[Model, Gradients]:
    """Classical momentum: ``v <- mu*v - lr*g``, ``theta <- theta + v``."""
    new_params, new_velocity = {}, {}
    for name, theta in model.params.items():
        v = cfg.momentum * velocity[name] - cfg.learning_rate * grads[name]
        new_velocity[name] = v.astype(model.dtype, copy=False)
        new_params[name] = (theta + v).astype(model.dtype, copy=False)
    return Model(model.spec, new_params, model.dtype), new_velocity


# --------------------------------------------------------------- training


def sequence_loss_and_grads(model: Model, x: np.ndarray, targets: np.ndarray) -> tuple[float, Gradients, np.ndarray]:
    _, post, cache = forward(model, x)
    loss, dlogits = cross_entropy(post, targets.astype(model.dtype, copy=False))
    return loss, backward(model, cache, dlogits), post


def evaluate(model: Model, sequences: Iterable[tuple[np.ndarray, np.ndarray]]) -> tuple[float, float, int]:
    """Frame-weighted cross entropy and argmax accuracy over prepared sequences."""
    total_loss, correct, frames = 0.0, 0, 0
    for x, y in sequences:
        _, post, _ = forward(model, x)
        loss, _ = cross_entropy(post, y.astype(model.dtype, copy=False))
        T = x.shape[0]
        total_loss += loss * T
        correct += int(np.sum(post.argmax(axis=1) == y.argmax(axis=1)))
        frames += T
    if frames == 0:
        raise ConfigError("cannot evaluate on an empty dataset")
    return total_loss / frames, correct / frames, frames


def minibatches(lengths: list[int], minibatch_frames: int, rng) -> list[list[int]]:
    """Group whole sequences into minibatches of roughly ``minibatch_frames`` frames."""
    order = rng.permutation(len(lengths))
    batches, current, size = [], [], 0
    for idx in order:
        current.append(int(idx))
        size += lengths[idx]
        if size >= minibatch_frames:
            batches.append(current)
            current, size = [], 0
    if current:
        batches.append(current)
    return batches


def train(
    model: Model,
    dataset,
    cfg: TrainConfig,
    on_epoch: Callable[[dict], None] | None = None,
) -> tuple[Model, list[dict]]:
    """Minibatch SGD with momentum on frame-level cross entropy.

    ``dataset`` is a :class:`dfsmn.lfr.FrameDataset` of raw frames; input
    stacking (and LFR decimation when ``cfg.lfr_factor > 1``) is applied
    here. The trace holds one record per epoch, epoch 0 being the model
    before any update.
    """
    prepared = lfr.prepare(dataset, model.spec, cfg.lfr_factor, dtype=model.dtype)
    if not prepared or sum(x.shape[0] for x, _ in prepared) == 0:
        raise ConfigError("training dataset is empty")
    rng = make_rng(cfg.seed)
    velocity = zero_gradients(model)
    lengths = [x.shape[0] for x, _ in prepared]
    lr = cfg.learning_rate
    trace = []

    def record(epoch: int) -> dict:
        loss, acc, frames = evaluate(model, prepared)
        entry = {"epoch": epoch, "loss": loss, "accuracy": acc, "frames": frames, "lr": lr}
        trace.append(entry)
        if on_epoch is not None:
            on_epoch(entry)
        return entry

    record(0)
    for epoch in range(1, cfg.epochs + 1):
        step_cfg = TrainConfig(lr, cfg.momentum, cfg.minibatch_frames, cfg.epochs, cfg.seed)
        for batch in minibatches(lengths, cfg.minibatch_frames, rng):
            batch_frames = sum(lengths[i] for i in batch)
            total = zero_gradients(model)
            for i in batch:
                x, y = prepared[i]
                _, grads, _ = sequence_loss_and_grads(model, x, y)
                # per-sequence gradients are means over T; rescale to the minibatch mean
                w = lengths[i] / batch_frames
                for name in total:
                    total[name] += w * grads[name]
            model, velocity = sgd_step(model, total, velocity, step_cfg)
        entry = record(epoch)
        if cfg.halve_on_plateau and epoch > 1 and entry["loss"] >= trace[-2]["loss"]:
            lr /= 2
            log.info("loss plateaued at epoch %d, learning rate now %g", epoch, lr)
    return model, trace


# ------------------------------------------------------ gradient checking


def numerical_gradient(f: Callable[[], float], array: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of ``f`` w.r.t. every entry of ``array`` (mutated in place, then restored)."""
    grad = np.zeros_like(array)
    flat, gflat = array.reshape(-1), grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        up = f()
        flat[k] = orig - step
        down = f()
        flat[k] = orig
        gflat[k] = (up - down) / (2 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_model_gradients(model: Model, x: np.ndarray, targets: np.ndarray, step: float = 1e-5) -> dict[str, float]:
    """Max relative error between backprop and central differences, per parameter tensor."""
    model = model.astype(np.float64)
    x = np.asarray(x, dtype=np.float64)

    def loss() -> float:
        _, post, _ = forward(model, x)
        return cross_entropy(post, targets)[0]

    _, grads, _ = sequence_loss_and_grads(model, x, targets)
    return {name: relative_error(grads[name], numerical_gradient(loss, model.params[name], step)) for name in model.params}
