"""Whole-sequence forward computation for FSMN, cFSMN and DFSMN stacks.

Sequences are ``(T, d)`` matrices. Memory blocks treat frames outside
``[0, T)`` as zeros, which is also what a stream sees before its first
frame and after its last one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor
from .errors import ConfigError, ShapeError
from .tensor import Matrix, matmul, relu
from .topology import TopologySpec, param_shapes, validate


@dataclass
class MemoryBlockParams:
    """Tap coefficients of one memory block.

    ``a`` has one row per look-back tap ``0..N1`` (tap 0 is the current
    frame), ``c`` one row per lookahead tap ``1..N2``. Rows are either
    ``d`` wide or a single tied scalar.
    """

    a: np.ndarray
    c: np.ndarray
    s1: int = 1
    s2: int = 1
    skip: str = "none"

    @property
    def n1(self) -> int:
        return self.a.shape[0] - 1

    @property
    def n2(self) -> int:
        return self.c.shape[0]


@dataclass
class LayerParams:
    """Affine weights feeding or leaving a memory block."""

    W: Matrix
    b: Matrix
    V: Matrix | None = None
    bv: Matrix | None = None
    W_tilde: Matrix | None = None
    U: Matrix | None = None


@dataclass
class Model:
    spec: TopologySpec
    params: dict[str, np.ndarray]
    dtype: np.dtype = field(default_factory=lambda: np.dtype(np.float32))

    def __post_init__(self):
        self.spec = validate(self.spec)
        self.dtype = np.dtype(self.dtype)
        expected = param_shapes(self.spec)
        if list(self.params) != [name for name, _ in expected]:
            raise ConfigError("parameter names do not match the topology")
        for name, shape in expected:
            if self.params[name].shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {self.params[name].shape}")

    def memory_params(self, i: int) -> MemoryBlockParams:
        b = self.spec.blocks[i]
        return MemoryBlockParams(self.params[f"block{i}.a"], self.params[f"block{i}.c"], b.s1, b.s2, b.skip)

    def has_skip(self, i: int) -> bool:
        return self.spec.variant == "dfsmn" and self.spec.blocks[i].skip == "identity" and i > 0

    def astype(self, dtype) -> "Model":
        dtype = np.dtype(dtype)
        return Model(self.spec, {k: v.astype(dtype) for k, v in self.params.items()}, dtype)

    def copy(self) -> "Model":
        return Model(self.spec, {k: v.copy() for k, v in self.params.items()}, self.dtype)


def init_model(spec: TopologySpec, seed: int = 0, dtype=np.float32, coeff_std: float = 0.1) -> Model:
    """Random model: He-scaled weights, zero biases, small memory coefficients."""
    rng = tensor.make_rng(seed)
    params = {}
    for name, (rows, cols) in param_shapes(spec):
        kind = name.split(".")[1]
        if kind in ("b", "bv", "bo"):
            params[name] = np.zeros((rows, cols), dtype=np.float64)
        elif kind in ("a", "c"):
            params[name] = tensor.rand_init(rng, rows, cols, ("gaussian", 0.0, coeff_std))
        else:
            # ReLU inputs get He scaling, linear ones Glorot-like 1/fan_in.
            gain = 1.0 if kind in ("V", "Wo", "Wm") or name.startswith(("proj", "out")) else 2.0
            params[name] = tensor.rand_init(rng, rows, cols, ("gaussian", 0.0, np.sqrt(gain / rows)))
    return Model(spec, {k: v.astype(dtype) for k, v in params.items()}, dtype)


# ------------------------------------------------------------ memory taps


def _check_coeffs(x: Matrix, p: MemoryBlockParams) -> None:
    for name, coef in (("a", p.a), ("c", p.c)):
        if coef.ndim != 2 or coef.shape[1] not in (1, x.shape[1]):
            raise ShapeError(f"coefficients {name} of shape {coef.shape} do not fit rows of width {x.shape[1]}")
    if p.s1 < 1 or p.s2 < 1:
        raise ConfigError("strides must be >= 1")


def strided_taps(x: Matrix, p: MemoryBlockParams) -> Matrix:
    """``sum_i a_i * x[t - s1*i] + sum_j c_j * x[t + s2*j]`` with zero padding."""
    T = x.shape[0]
    out = p.a[0] * x
    for i in range(1, p.n1 + 1):
        k = p.s1 * i
        if k < T:
            out[k:] += p.a[i] * x[: T - k]
    for j in range(1, p.n2 + 1):
        k = p.s2 * j
        if k < T:
            out[: T - k] += p.c[j - 1] * x[k:]
    return out


def strided_taps_backward(dout: Matrix, x: Matrix, p: MemoryBlockParams) -> tuple[Matrix, np.ndarray, np.ndarray]:
    T = x.shape[0]
    scalar = p.a.shape[1] == 1 and x.shape[1] != 1
    da = np.zeros((p.n1 + 1, x.shape[1]), dtype=x.dtype)
    dc = np.zeros((p.n2, x.shape[1]), dtype=x.dtype)
    dx = p.a[0] * dout
    da[0] = (dout * x).sum(axis=0)
    for i in range(1, p.n1 + 1):
        k = p.s1 * i
        if k < T:
            dx[: T - k] += p.a[i] * dout[k:]
            da[i] = (dout[k:] * x[: T - k]).sum(axis=0)
    for j in range(1, p.n2 + 1):
        k = p.s2 * j
        if k < T:
            dx[k:] += p.c[j - 1] * dout[: T - k]
            dc[j - 1] = (dout[: T - k] * x[k:]).sum(axis=0)
    if scalar:
        da = da.sum(axis=1, keepdims=True)
        dc = dc.sum(axis=1, keepdims=True)
    return dx, da, dc


def memory_block_vfsmn(h: Matrix, params: MemoryBlockParams) -> Matrix:
    _check_coeffs(h, params)
    if params.s1 != 1 or params.s2 != 1:
        raise ConfigError("vectorized FSMN memory blocks take no strides")
    return strided_taps(h, params)


def memory_block_cfsmn(p: Matrix, params: MemoryBlockParams) -> Matrix:
    _check_coeffs(p, params)
    if params.s1 != 1 or params.s2 != 1 or params.skip != "none":
        raise ConfigError("compact FSMN memory blocks take no strides or skips")
    return p + strided_taps(p, params)


def memory_block_dfsmn(p: Matrix, skip_in: Matrix | None, params: MemoryBlockParams) -> Matrix:
    _check_coeffs(p, params)
    out = p + strided_taps(p, params)
    if skip_in is not None:
        if params.skip != "identity":
            raise ConfigError("skip input given to a block without a skip connection")
        if skip_in.shape != p.shape:
            raise ShapeError(f"identity skip needs equal shapes, got {skip_in.shape} and {p.shape}")
        out = out + skip_in
    return out


def fsmn_next_hidden(h: Matrix, h_tilde: Matrix, params: LayerParams) -> Matrix:
    if params.W_tilde is None:
        raise ConfigError("FSMN layer needs memory-output weights")
    return relu(matmul(h, params.W) + matmul(h_tilde, params.W_tilde) + params.b)


# ---------------------------------------------------------------- forward


def _affine(x: Matrix, W: Matrix, b: Matrix) -> Matrix:
    return matmul(x, W) + b


def forward(model: Model, x: Matrix) -> tuple[Matrix, Matrix, list[dict]]:
    """Run the whole stack over one stacked input sequence.

    Returns logits, posteriors and a per-layer activation record used by
    :func:`dfsmn.grad.backward`.
    """
    spec, P = model.spec, model.params
    x = np.asarray(x, dtype=model.dtype)
    if x.ndim != 2 or x.shape[1] != spec.stacked_dim:
        raise ShapeError(f"input of shape {x.shape} does not match stacked width {spec.stacked_dim}")
    cache: list[dict] = []
    for i in range(len(spec.blocks)):
        pre = f"block{i}."
        z = _affine(x, P[pre + "W"], P[pre + "b"])
        h = relu(z)
        mem = model.memory_params(i)
        if spec.variant == "fsmn":
            h_tilde = memory_block_vfsmn(h, mem)
            zo = matmul(h, P[pre + "Wo"]) + matmul(h_tilde, P[pre + "Wm"]) + P[pre + "bo"]
            y = relu(zo)
            cache.append({"kind": "fsmn", "x": x, "z": z, "h": h, "h_tilde": h_tilde, "zo": zo})
        else:
            proj = _affine(h, P[pre + "V"], P[pre + "bv"])
            if spec.variant == "cfsmn":
                y = memory_block_cfsmn(proj, mem)
            else:
                y = memory_block_dfsmn(proj, x if model.has_skip(i) else None, mem)
            cache.append({"kind": "memory", "x": x, "z": z, "h": h, "p": proj})
        x = y
    for j in range(spec.dense_layers):
        z = _affine(x, P[f"dense{j}.W"], P[f"dense{j}.b"])
        cache.append({"kind": "dense", "x": x, "z": z})
        x = relu(z)
    cache.append({"kind": "proj", "x": x})
    x = _affine(x, P["proj.W"], P["proj.b"])
    cache.append({"kind": "out", "x": x})
    logits = _affine(x, P["out.W"], P["out.b"])
    return logits, tensor.softmax_rows(logits), cache


def posteriors(model: Model, x: Matrix) -> Matrix:
    return forward(model, x)[1]
