"""Dense 2-D array helpers.

Matrices are plain ``numpy.ndarray`` objects with frames as rows and
feature dimensions as columns. The helpers here add shape checking and a
few numerically careful primitives on top of numpy.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ShapeError

Matrix = np.ndarray
Rng = np.random.Generator

DTYPES = {"f32": np.float32, "f64": np.float64}


def make_rng(seed: int) -> Rng:
    # PCG64 streams are specified bit-for-bit, so draws match across platforms.
    return np.random.Generator(np.random.PCG64(seed))


def resolve_dtype(precision) -> np.dtype:
    if isinstance(precision, str):
        try:
            return np.dtype(DTYPES[precision])
        except KeyError:
            raise ConfigError(f"unknown precision {precision!r}, expected f32 or f64") from None
    dt = np.dtype(precision)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ConfigError(f"unsupported dtype {dt}")
    return dt


def as_matrix(x, dtype=None) -> Matrix:
    m = np.asarray(x, dtype=dtype)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def relu(x: Matrix) -> Matrix:
    return np.maximum(x, 0)


def relu_grad_mask(x: Matrix) -> Matrix:
    # Subgradient at exactly 0 is taken as 0.
    return (x > 0).astype(x.dtype)


_BINARY = {"add": np.add, "mul": np.multiply}
_UNARY = {"relu": relu, "relu_grad_mask": relu_grad_mask}


def elementwise(op: str, a: Matrix, b: Matrix | None = None) -> Matrix:
    a = np.asarray(a)
    if op in _BINARY:
        if b is None:
            raise ShapeError(f"{op} needs two operands")
        b = np.asarray(b)
        if a.shape != b.shape:
            raise ShapeError(f"shape mismatch for {op}: {a.shape} vs {b.shape}")
        return _BINARY[op](a, b)
    if op in _UNARY:
        return _UNARY[op](a)
    raise ConfigError(f"unknown elementwise op {op!r}")


def softmax_rows(a: Matrix) -> Matrix:
    z = a - a.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def rand_init(rng: Rng, rows: int, cols: int, scheme: tuple, dtype=np.float64) -> Matrix:
    """Draw a ``rows x cols`` matrix.

    ``scheme`` is ``("uniform", lo, hi)`` or ``("gaussian", mean, std)``.
    A degenerate ``uniform(c, c)`` yields a constant matrix.
    """
    kind, p0, p1 = scheme
    if kind == "uniform":
        if p0 > p1:
            raise ConfigError(f"uniform bounds out of order: lo={p0} hi={p1}")
        if p0 == p1:
            return np.full((rows, cols), p0, dtype=dtype)
        out = rng.uniform(p0, p1, size=(rows, cols))
    elif kind == "gaussian":
        if not p1 > 0:
            raise ConfigError(f"gaussian std must be positive, got {p1}")
        out = rng.normal(p0, p1, size=(rows, cols))
    else:
        raise ConfigError(f"unknown init scheme {kind!r}")
    return out.astype(dtype, copy=False)
