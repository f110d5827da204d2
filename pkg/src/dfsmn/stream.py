"""Frame-by-frame inference with bounded memory.

The model is split into a chain of stages. Input splicing and every
memory block hold a small ring buffer and release a row as soon as all of
its lookahead has arrived; the dense tail is pointwise. The output for
frame ``t`` therefore appears exactly when frame ``t + latency.total``
has been pushed, and the rows equal those of the batch ``forward``.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, StreamStateError
from .layers import Model
from .tensor import relu, softmax_rows
from .topology import Latency, latency_frames


class RingBuffer:
    """Fixed-capacity row store addressed by absolute frame index."""

    def __init__(self, capacity: int, width: int, dtype):
        self.capacity = capacity
        self.data = np.zeros((capacity, width), dtype=dtype)
        self.newest = -1

    def put(self, index: int, row: np.ndarray) -> None:
        self.data[index % self.capacity] = row
        self.newest = index

    def get(self, index: int) -> np.ndarray:
        if index > self.newest or index <= self.newest - self.capacity:
            raise IndexError(f"frame {index} not held (newest {self.newest}, capacity {self.capacity})")
        return self.data[index % self.capacity]


class _Splicer:
    """Online version of :func:`dfsmn.lfr.stack_context` with edge replication."""

    def __init__(self, left: int, right: int, width: int, dtype):
        self.left, self.right = left, right
        self.buf = RingBuffer(left + right + 1, width, dtype)
        self.n_in = 0

    def _row(self, t: int, last: int) -> np.ndarray:
        idx = np.clip(np.arange(t - self.left, t + self.right + 1), 0, last)
        return np.concatenate([self.buf.get(int(i)) for i in idx])

    def push(self, frame: np.ndarray) -> list[np.ndarray]:
        self.buf.put(self.n_in, frame)
        self.n_in += 1
        t = self.n_in - 1 - self.right
        return [self._row(t, self.n_in - 1)] if t >= 0 else []

    def flush(self) -> list[np.ndarray]:
        return [self._row(t, self.n_in - 1) for t in range(max(0, self.n_in - self.right), self.n_in)]


class _MemoryStage:
    """One FSMN-family block: affine front end, strided taps, block output."""

    def __init__(self, model: Model, i: int):
        spec, P, pre = model.spec, model.params, f"block{i}."
        b = spec.blocks[i]
        self.variant = spec.variant
        self.W, self.b = P[pre + "W"], P[pre + "b"]
        if self.variant == "fsmn":
            self.Wo, self.Wm, self.bo = P[pre + "Wo"], P[pre + "Wm"], P[pre + "bo"]
        else:
            self.V, self.bv = P[pre + "V"], P[pre + "bv"]
        self.a, self.c = P[pre + "a"], P[pre + "c"]
        self.n1, self.n2, self.s1, self.s2 = b.n1, b.n2, b.s1, b.s2
        self.ahead = b.n2 * b.s2
        self.has_skip = model.has_skip(i)
        self.taps = RingBuffer(b.n1 * b.s1 + 1 + self.ahead, spec.memory_width(i), model.dtype)
        # the skip input is this block's own input row, kept until its output is due
        self.skips = RingBuffer(self.ahead + 1, b.proj_width, model.dtype) if self.has_skip else None
        self.n_in = 0
        self.n_out = 0

    def _front(self, x: np.ndarray) -> np.ndarray:
        h = relu(x[None, :] @ self.W + self.b)
        if self.variant == "fsmn":
            return h[0]
        return (h @ self.V + self.bv)[0]

    def _emit(self, t: int) -> np.ndarray:
        cur = self.taps.get(t)
        acc = self.a[0] * cur
        for i in range(1, self.n1 + 1):
            k = t - self.s1 * i
            if k >= 0:
                acc = acc + self.a[i] * self.taps.get(k)
        for j in range(1, self.n2 + 1):
            k = t + self.s2 * j
            if k < self.n_in:
                acc = acc + self.c[j - 1] * self.taps.get(k)
        if self.variant == "fsmn":
            out = relu(cur[None, :] @ self.Wo + acc[None, :] @ self.Wm + self.bo)[0]
        else:
            out = cur + acc
            if self.has_skip:
                out = out + self.skips.get(t)
        self.n_out += 1
        return out

    def push(self, x: np.ndarray) -> list[np.ndarray]:
        self.taps.put(self.n_in, self._front(x))
        if self.skips is not None:
            self.skips.put(self.n_in, x)
        self.n_in += 1
        out = []
        while self.n_out + self.ahead < self.n_in:
            out.append(self._emit(self.n_out))
        return out

    def flush(self) -> list[np.ndarray]:
        return [self._emit(t) for t in range(self.n_out, self.n_in)]


class StreamState:
    def __init__(self, model: Model):
        spec = model.spec
        self.model = model
        self.latency: Latency = latency_frames(spec)
        self.splicer = _Splicer(spec.context_left, spec.context_right, spec.input_dim, model.dtype)
        self.stages = [_MemoryStage(model, i) for i in range(len(spec.blocks))]
        self.frames_in = 0
        self.frames_out = 0
        self.closed = False

    def buffer_capacities(self) -> list[int]:
        caps = [self.splicer.buf.capacity]
        for st in self.stages:
            caps.append(st.taps.capacity + (st.skips.capacity if st.skips is not None else 0))
        return caps

    def _tail(self, row: np.ndarray) -> np.ndarray:
        spec, P = self.model.spec, self.model.params
        x = row[None, :]
        for j in range(spec.dense_layers):
            x = relu(x @ P[f"dense{j}.W"] + P[f"dense{j}.b"])
        x = x @ P["proj.W"] + P["proj.b"]
        return softmax_rows(x @ P["out.W"] + P["out.b"])[0]

    def _run(self, rows: list[np.ndarray], start: int, flushing: bool) -> list[tuple[int, np.ndarray]]:
        for k in range(start, len(self.stages)):
            stage = self.stages[k]
            nxt = []
            for r in rows:
                nxt.extend(stage.push(r))
            if flushing:
                nxt.extend(stage.flush())
            rows = nxt
        out = []
        for r in rows:
            out.append((self.frames_out, self._tail(r)))
            self.frames_out += 1
        return out

    def push(self, frame) -> list[tuple[int, np.ndarray]]:
        if self.closed:
            raise StreamStateError("stream already flushed")
        frame = np.asarray(frame, dtype=self.model.dtype).reshape(-1)
        if frame.shape[0] != self.model.spec.input_dim:
            raise ShapeError(f"frame of width {frame.shape[0]}, model expects {self.model.spec.input_dim}")
        self.frames_in += 1
        return self._run(self.splicer.push(frame), 0, flushing=False)

    def flush(self) -> list[tuple[int, np.ndarray]]:
        if self.closed:
            raise StreamStateError("stream already flushed")
        self.closed = True
        if self.frames_in == 0:
            return []
        return self._run(self.splicer.flush(), 0, flushing=True)


def stream_open(model: Model) -> StreamState:
    return StreamState(model)


def stream_push(state: StreamState, frame) -> list[tuple[int, np.ndarray]]:
    return state.push(frame)


def stream_flush(state: StreamState) -> list[tuple[int, np.ndarray]]:
    return state.flush()


def stream_sequence(model: Model, frames: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Stream a whole raw sequence; returns posteriors and, per output row, the push count at emission."""
    state = stream_open(model)
    rows, emitted_after = [], []
    for n, f in enumerate(frames, start=1):
        for _, row in state.push(f):
            rows.append(row)
            emitted_after.append(n)
    for _, row in state.flush():
        rows.append(row)
        emitted_after.append(len(frames))
    out = np.array(rows) if rows else np.zeros((0, model.spec.output_dim), dtype=model.dtype)
    return out, emitted_after
