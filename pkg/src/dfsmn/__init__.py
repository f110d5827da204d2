"""Feedforward sequential memory networks (FSMN, cFSMN, DFSMN) in numpy."""

from .errors import ConfigError, DataError, FormatError, FSMNError, ParseError, ShapeError, StreamStateError
from .layers import Model, forward, init_model
from .topology import (
    BlockSpec,
    TopologySpec,
    format_topology,
    latency_frames,
    latency_ms,
    param_count,
    parse_topology,
    receptive_field,
)

__all__ = [
    "BlockSpec",
    "ConfigError",
    "DataError",
    "FSMNError",
    "FormatError",
    "Model",
    "ParseError",
    "ShapeError",
    "StreamStateError",
    "TopologySpec",
    "format_topology",
    "forward",
    "init_model",
    "latency_frames",
    "latency_ms",
    "param_count",
    "parse_topology",
    "receptive_field",
]
