"""Architecture strings and static analysis of FSMN-family models.

Accepted notation (whitespace ignored, ``x`` and ``×`` interchangeable)::

    [variant[/scalar]:] C*D - G - ... - Nd x W - P - K

where every block group ``G`` is ``N x [H-P(N1,N2)]`` or
``N x [H-P(N1;N2;S1;S2)]``. A group may hold several ``|``-separated
blocks, which are repeated ``N`` times as a pattern, and the 4-argument
form takes an optional fifth ``id``/``none`` skip flag. For example::

    3*72-4x[2048-512(20,20)]-3x2048-512-9004
    11*80-5x[2048-512(5;1;2;1)|2048-512(5;0;2;1)]-2x2048-512-9841
    cfsmn:3*72-4x[2048-512(20;20;1;1)]-3x2048-512-9004

Without a prefix the variant is ``dfsmn`` with vector coefficients and
identity skips.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import NamedTuple

from .errors import ConfigError, ParseError

VARIANTS = ("fsmn", "cfsmn", "dfsmn")
COEFF_MODES = ("vector", "scalar")
SKIPS = ("none", "identity")


@dataclass(frozen=True)
class BlockSpec:
    hidden_width: int
    proj_width: int
    n1: int
    n2: int
    s1: int = 1
    s2: int = 1
    skip: str = "none"


@dataclass(frozen=True)
class TopologySpec:
    input_dim: int
    context_left: int
    context_right: int
    blocks: tuple[BlockSpec, ...]
    dense_layers: int
    dense_width: int
    pre_output_proj: int
    output_dim: int
    variant: str = "dfsmn"
    coeff_mode: str = "vector"

    @property
    def context(self) -> int:
        return self.context_left + 1 + self.context_right

    @property
    def stacked_dim(self) -> int:
        return self.context * self.input_dim

    def block_input_dims(self) -> list[int]:
        dims = [self.stacked_dim]
        for b in self.blocks[:-1]:
            dims.append(b.proj_width)
        return dims

    def memory_width(self, i: int) -> int:
        """Width of the rows the i-th memory block filters."""
        b = self.blocks[i]
        return b.hidden_width if self.variant == "fsmn" else b.proj_width

    def block_output_dim(self) -> int:
        return self.blocks[-1].proj_width

    def with_skip(self, skip: str) -> "TopologySpec":
        return replace(self, blocks=tuple(replace(b, skip=skip) for b in self.blocks))


def default_skip(variant: str) -> str:
    return "identity" if variant == "dfsmn" else "none"


def validate(spec: TopologySpec) -> TopologySpec:
    if spec.variant not in VARIANTS:
        raise ConfigError(f"unknown variant {spec.variant!r}")
    if spec.coeff_mode not in COEFF_MODES:
        raise ConfigError(f"unknown coefficient mode {spec.coeff_mode!r}")
    if spec.input_dim < 1 or spec.output_dim < 1 or spec.pre_output_proj < 1:
        raise ConfigError("input, projection and output widths must be positive")
    if spec.context_left < 0 or spec.context_right < 0:
        raise ConfigError("context counts must be nonnegative")
    if not spec.blocks:
        raise ConfigError("at least one memory block is required")
    if spec.dense_layers < 0 or (spec.dense_layers > 0 and spec.dense_width < 1):
        raise ConfigError("dense layers need a positive width")
    for i, b in enumerate(spec.blocks):
        if b.hidden_width < 1 or b.proj_width < 1:
            raise ConfigError(f"block {i}: widths must be positive")
        if b.n1 < 0 or b.n2 < 0:
            raise ConfigError(f"block {i}: filter orders must be nonnegative")
        if b.s1 < 1 or b.s2 < 1:
            raise ConfigError(f"block {i}: strides must be >= 1")
        if b.skip not in SKIPS:
            raise ConfigError(f"block {i}: unknown skip {b.skip!r}")
        if spec.variant != "dfsmn":
            if b.s1 != 1 or b.s2 != 1:
                raise ConfigError(f"block {i}: strides other than 1 need the dfsmn variant")
            if b.skip != "none":
                raise ConfigError(f"block {i}: skip connections need the dfsmn variant")
    if spec.variant == "dfsmn" and any(b.skip == "identity" for b in spec.blocks):
        widths = {b.proj_width for b in spec.blocks}
        if len(widths) != 1:
            raise ConfigError(f"identity skips need equal projection widths, got {sorted(widths)}")
    return spec


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(r"\d+|[A-Za-z_/]+|×|[*\-\[\]();,|:]")


class _Tokens:
    def __init__(self, text: str):
        self.text = text
        self.toks: list[tuple[str, int]] = []
        pos = 0
        while pos < len(text):
            ch = text[pos]
            if ch.isspace():
                pos += 1
                continue
            m = _TOKEN.match(text, pos)
            if m is None:
                raise ParseError(f"unexpected character {ch!r}", self._byte(pos), text)
            self.toks.append((m.group(), pos))
            pos = m.end()
        self.i = 0

    def _byte(self, pos: int) -> int:
        return len(self.text[:pos].encode("utf-8"))

    def offset(self) -> int:
        if self.i < len(self.toks):
            return self._byte(self.toks[self.i][1])
        return len(self.text.encode("utf-8"))

    def peek(self, k: int = 0) -> str | None:
        j = self.i + k
        return self.toks[j][0] if j < len(self.toks) else None

    def fail(self, expected: str):
        got = self.peek()
        found = "end of input" if got is None else repr(got)
        raise ParseError(f"expected {expected}, found {found}", self.offset(), self.text)

    def take(self, tok: str, expected: str | None = None) -> None:
        if self.peek() != tok:
            self.fail(expected or repr(tok))
        self.i += 1

    def take_times(self) -> None:
        if self.peek() not in ("x", "X", "×"):
            self.fail("'x'")
        self.i += 1

    def int(self, what: str, positive: bool = False) -> int:
        tok = self.peek()
        if tok is None or not tok.isdigit():
            self.fail(what)
        off = self.offset()
        self.i += 1
        value = int(tok)
        if positive and value == 0:
            raise ParseError(f"{what} must be positive", off, self.text)
        return value


def _parse_block(toks: _Tokens, variant: str) -> BlockSpec:
    hidden = toks.int("hidden width", positive=True)
    toks.take("-")
    proj = toks.int("projection width", positive=True)
    toks.take("(")
    n1 = toks.int("look-back order")
    sep = toks.peek()
    if sep == ",":
        toks.take(",")
        n2 = toks.int("lookahead order")
        toks.take(")", "')'")
        return BlockSpec(hidden, proj, n1, n2, 1, 1, default_skip(variant))
    if sep != ";":
        toks.fail("',' or ';'")
    toks.take(";")
    n2 = toks.int("lookahead order")
    toks.take(";")
    s1 = toks.int("look-back stride", positive=True)
    toks.take(";")
    s2 = toks.int("lookahead stride", positive=True)
    skip = default_skip(variant)
    if toks.peek() == ";":
        toks.take(";")
        flag = toks.peek()
        if flag not in ("id", "none"):
            toks.fail("skip flag 'id' or 'none'")
        toks.i += 1
        skip = "identity" if flag == "id" else "none"
    toks.take(")", "')'")
    return BlockSpec(hidden, proj, n1, n2, s1, s2, skip)


def parse_topology(text: str) -> TopologySpec:
    toks = _Tokens(text)
    variant, coeff_mode = "dfsmn", "vector"
    if toks.peek() is not None and not toks.peek().isdigit():
        name = toks.peek() or ""
        off = toks.offset()
        parts = name.split("/")
        if parts[0] not in VARIANTS or len(parts) > 2 or (len(parts) == 2 and parts[1] not in COEFF_MODES):
            raise ParseError(f"unknown variant prefix {name!r}", off, text)
        variant = parts[0]
        if len(parts) == 2:
            coeff_mode = parts[1]
        toks.i += 1
        toks.take(":", "':' after variant")

    ctx_off = toks.offset()
    ctx = toks.int("context count", positive=True)
    if ctx % 2 == 0:
        raise ParseError(f"context count {ctx} must be odd", ctx_off, text)
    toks.take("*", "'*'")
    dim = toks.int("input dimension", positive=True)

    blocks: list[BlockSpec] = []
    while True:
        toks.take("-", "'-'")
        if toks.peek(1) not in ("x", "X", "×") or toks.peek(2) != "[":
            break
        count = toks.int("block count", positive=True)
        toks.take_times()
        toks.take("[", "'['")
        pattern = [_parse_block(toks, variant)]
        while toks.peek() == "|":
            toks.take("|")
            pattern.append(_parse_block(toks, variant))
        toks.take("]", "']'")
        blocks.extend(pattern * count)
    if not blocks:
        toks.fail("block group '<N>x[...]'")

    dense_layers, dense_width = 0, 0
    if toks.peek(1) in ("x", "X", "×"):
        dense_layers = toks.int("dense layer count")
        toks.take_times()
        dense_width = toks.int("dense width", positive=True) if dense_layers else toks.int("dense width")
        if dense_layers == 0:
            dense_width = 0
        toks.take("-", "'-'")
    proj = toks.int("projection width", positive=True)
    toks.take("-", "'-'")
    out = toks.int("output width", positive=True)
    if toks.peek() is not None:
        toks.fail("end of input")
    spec = TopologySpec(
        input_dim=dim,
        context_left=(ctx - 1) // 2,
        context_right=(ctx - 1) // 2,
        blocks=tuple(blocks),
        dense_layers=dense_layers,
        dense_width=dense_width,
        pre_output_proj=proj,
        output_dim=out,
        variant=variant,
        coeff_mode=coeff_mode,
    )
    return validate(spec)


def _smallest_period(items: list) -> int:
    n = len(items)
    for p in range(1, n + 1):
        if n % p == 0 and items[:p] * (n // p) == items:
            return p
    return n


def _format_block(b: BlockSpec, variant: str) -> str:
    args = f"{b.n1};{b.n2};{b.s1};{b.s2}"
    if b.skip != default_skip(variant):
        args += ";id" if b.skip == "identity" else ";none"
    return f"{b.hidden_width}-{b.proj_width}({args})"


def format_topology(spec: TopologySpec) -> str:
    if spec.context_left != spec.context_right:
        raise ConfigError("only symmetric input context can be written in topology notation")
    parts = []
    prefix = ""
    if spec.variant != "dfsmn" or spec.coeff_mode != "vector":
        prefix = spec.variant + ("/scalar" if spec.coeff_mode == "scalar" else "") + ":"
    parts.append(f"{prefix}{spec.context}*{spec.input_dim}")
    blocks = list(spec.blocks)
    period = _smallest_period(blocks)
    if period > 1 and period < len(blocks):
        body = "|".join(_format_block(b, spec.variant) for b in blocks[:period])
        parts.append(f"{len(blocks) // period}x[{body}]")
    else:
        i = 0
        while i < len(blocks):
            j = i
            while j < len(blocks) and blocks[j] == blocks[i]:
                j += 1
            parts.append(f"{j - i}x[{_format_block(blocks[i], spec.variant)}]")
            i = j
    if spec.dense_layers:
        parts.append(f"{spec.dense_layers}x{spec.dense_width}")
    parts.append(str(spec.pre_output_proj))
    parts.append(str(spec.output_dim))
    return "-".join(parts)


# --------------------------------------------------------------- analysis


class Latency(NamedTuple):
    blocks: int  # sum of lookahead order x lookahead stride over memory blocks
    stacking: int  # future frames added by input context stacking
    total: int


def latency_frames(spec: TopologySpec) -> Latency:
    blocks = sum(b.n2 * b.s2 for b in spec.blocks)
    return Latency(blocks, spec.context_right, blocks + spec.context_right)


def latency_ms(spec: TopologySpec, frame_period_ms: float) -> float:
    if not frame_period_ms > 0:
        raise ConfigError(f"frame period must be positive, got {frame_period_ms}")
    return latency_frames(spec).blocks * frame_period_ms


def receptive_field(spec: TopologySpec) -> tuple[int, int]:
    past = spec.context_left + sum(b.n1 * b.s1 for b in spec.blocks)
    future = spec.context_right + sum(b.n2 * b.s2 for b in spec.blocks)
    return past, future


def param_shapes(spec: TopologySpec) -> list[tuple[str, tuple[int, int]]]:
    """Every learnable tensor in deterministic order, with its shape."""
    shapes: list[tuple[str, tuple[int, int]]] = []
    d_in = spec.stacked_dim
    for i, b in enumerate(spec.blocks):
        width = spec.memory_width(i)
        coeff = 1 if spec.coeff_mode == "scalar" else width
        shapes.append((f"block{i}.W", (d_in, b.hidden_width)))
        shapes.append((f"block{i}.b", (1, b.hidden_width)))
        if spec.variant == "fsmn":
            shapes.append((f"block{i}.a", (b.n1 + 1, coeff)))
            shapes.append((f"block{i}.c", (b.n2, coeff)))
            shapes.append((f"block{i}.Wo", (b.hidden_width, b.proj_width)))
            shapes.append((f"block{i}.Wm", (b.hidden_width, b.proj_width)))
            shapes.append((f"block{i}.bo", (1, b.proj_width)))
        else:
            shapes.append((f"block{i}.V", (b.hidden_width, b.proj_width)))
            shapes.append((f"block{i}.bv", (1, b.proj_width)))
            shapes.append((f"block{i}.a", (b.n1 + 1, coeff)))
            shapes.append((f"block{i}.c", (b.n2, coeff)))
        d_in = b.proj_width
    for j in range(spec.dense_layers):
        shapes.append((f"dense{j}.W", (d_in, spec.dense_width)))
        shapes.append((f"dense{j}.b", (1, spec.dense_width)))
        d_in = spec.dense_width
    shapes.append(("proj.W", (d_in, spec.pre_output_proj)))
    shapes.append(("proj.b", (1, spec.pre_output_proj)))
    shapes.append(("out.W", (spec.pre_output_proj, spec.output_dim)))
    shapes.append(("out.b", (1, spec.output_dim)))
    return shapes


def param_count(spec: TopologySpec) -> int:
    return sum(r * c for _, (r, c) in param_shapes(spec))


def size_mib(spec: TopologySpec, bytes_per_param: int = 4) -> float:
    return param_count(spec) * bytes_per_param / 2**20


def layer_macs(spec: TopologySpec) -> list[tuple[str, int]]:
    """Multiply-accumulates per output frame, layer by layer.

    A memory block costs ``width * (N1 + 1 + N2)`` per frame no matter the
    strides: strides spread the taps out without adding any.
    """
    macs = []
    d_in = spec.stacked_dim
    for i, b in enumerate(spec.blocks):
        width = spec.memory_width(i)
        macs.append((f"block{i}.hidden", d_in * b.hidden_width))
        if spec.variant == "fsmn":
            macs.append((f"block{i}.memory", width * (b.n1 + 1 + b.n2)))
            macs.append((f"block{i}.output", 2 * b.hidden_width * b.proj_width))
        else:
            macs.append((f"block{i}.proj", b.hidden_width * b.proj_width))
            macs.append((f"block{i}.memory", width * (b.n1 + 1 + b.n2)))
        d_in = b.proj_width
    for j in range(spec.dense_layers):
        macs.append((f"dense{j}", d_in * spec.dense_width))
        d_in = spec.dense_width
    macs.append(("proj", d_in * spec.pre_output_proj))
    macs.append(("out", spec.pre_output_proj * spec.output_dim))
    return macs
