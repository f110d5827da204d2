"""``DFSM`` checkpoint files.

Layout (little-endian): magic ``DFSM``, u16 version, u32 length + UTF-8
topology string, u8 precision (0 = binary32, 1 = binary64), u32 blob
count, then per parameter tensor a u64 byte length followed by the raw
row-major values. Blob order and shapes follow
:func:`dfsmn.topology.param_shapes`.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, ParseError
from .layers import Model
from .topology import format_topology, param_shapes, parse_topology

MAGIC = b"DFSM"
VERSION = 1
_PRECISION = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def dumps_checkpoint(model: Model) -> bytes:
    topo = format_topology(model.spec).encode("utf-8")
    flag = 0 if model.dtype == np.float32 else 1
    dt = _PRECISION[flag]
    parts = [MAGIC, struct.pack("<HI", VERSION, len(topo)), topo, struct.pack("<BI", flag, len(model.params))]
    for arr in model.params.values():
        raw = np.ascontiguousarray(arr, dtype=dt).tobytes()
        parts.append(struct.pack("<Q", len(raw)))
        parts.append(raw)
    return b"".join(parts)


def _need(buf: bytes, off: int, n: int, what: str) -> None:
    if off + n > len(buf):
        raise FormatError(f"truncated {what}", off)


def loads_checkpoint(buf: bytes) -> Model:
    _need(buf, 0, 10, "checkpoint header")
    if buf[:4] != MAGIC:
        raise FormatError(f"bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}", 0)
    version, tlen = struct.unpack_from("<HI", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    off = 10
    _need(buf, off, tlen, "topology string")
    try:
        spec = parse_topology(bytes(buf[off : off + tlen]).decode("utf-8"))
    except (UnicodeDecodeError, ParseError, ConfigError) as exc:
        raise FormatError(f"invalid topology string: {exc}", off) from None
    off += tlen
    _need(buf, off, 5, "precision flag")
    flag, count = struct.unpack_from("<BI", buf, off)
    if flag not in _PRECISION:
        raise FormatError(f"unknown precision flag {flag}", off)
    off += 5
    dt = _PRECISION[flag]
    shapes = param_shapes(spec)
    if count != len(shapes):
        raise FormatError(f"topology needs {len(shapes)} parameter blobs, file has {count}", off - 4)
    params = {}
    for name, shape in shapes:
        _need(buf, off, 8, f"length of {name}")
        (nbytes,) = struct.unpack_from("<Q", buf, off)
        expected = shape[0] * shape[1] * dt.itemsize
        if nbytes != expected:
            raise FormatError(f"{name}: blob of {nbytes} bytes, shape {shape} needs {expected}", off)
        off += 8
        _need(buf, off, nbytes, f"data of {name}")
        params[name] = np.frombuffer(buf, dtype=dt, count=shape[0] * shape[1], offset=off).reshape(shape).astype(dt.newbyteorder("="))
        off += nbytes
    if off != len(buf):
        raise FormatError(f"{len(buf) - off} trailing bytes", off)
    return Model(spec, params, dt.newbyteorder("="))


def save_checkpoint(model: Model, path) -> None:
    Path(path).write_bytes(dumps_checkpoint(model))


def load_checkpoint(path) -> Model:
    return loads_checkpoint(Path(path).read_bytes())
