# core/weights_io.py
"""
Binary weights file:

    b"RHWT" | u32 version | u32 layer count | per parametric layer, in
    declaration order: biases then weights as little-endian float64

Shapes are not stored; the reader takes them from the network being loaded.
"""

import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from .errors import DecodeError
from .model_zoo import Network

logger = logging.getLogger(__name__)

MAGIC = b"RHWT"
VERSION = 1
_HEADER = struct.Struct("<4sII")
_WIRE_DTYPE = np.dtype("<f8")


def weights_to_bytes(net: Network) -> bytes:
    layers = net.parametric_layers()
    chunks = [_HEADER.pack(MAGIC, VERSION, len(layers))]
    for layer in layers:
        for param in layer.params():
            chunks.append(np.ascontiguousarray(param.value, dtype=_WIRE_DTYPE).tobytes())
    return b"".join(chunks)


def weights_from_bytes(net: Network, data: bytes) -> Network:
    """Overwrite net's parameter values in place from a serialized blob"""
    if len(data) < _HEADER.size:
        raise DecodeError("weights blob shorter than its header")
    magic, version, layer_count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DecodeError(f"bad weights magic {magic!r}")
    if version != VERSION:
        raise DecodeError(f"unsupported weights version {version}")
    layers = net.parametric_layers()
    if layer_count != len(layers):
        raise DecodeError(f"weights file has {layer_count} layers, network has {len(layers)}")

    expected = _HEADER.size + sum(p.size for p in net.params()) * _WIRE_DTYPE.itemsize
    if len(data) != expected:
        raise DecodeError(f"weights blob is {len(data)} bytes, network needs {expected}")

    offset = _HEADER.size
    for layer in layers:
        for param in layer.params():
            values = np.frombuffer(data, dtype=_WIRE_DTYPE, count=param.size, offset=offset)
            param.value[...] = values.reshape(param.value.shape)
            offset += param.size * _WIRE_DTYPE.itemsize
    return net


def save_weights(net: Network, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(weights_to_bytes(net))
    logger.debug("weights written to %s", path)
    return path


def load_weights(net: Network, path: Union[str, Path]) -> Network:
    path = Path(path)
    if not path.exists():
        raise DecodeError(f"weights file not found: {path}")
    return weights_from_bytes(net, path.read_bytes())
