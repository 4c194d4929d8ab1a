"""Binary format for parameter messages and checkpoints.

Layout, all little-endian:

    magic  "FAVG" | version u16 | round u32 | client id u32 | n_k u64
    | tensor count u16 | per tensor: dim count u8, dims u32 each
    | payload: float32 values, row-major, tensors concatenated in order

Checkpoint files reuse the message layout with the client id set to
0xFFFFFFFF.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import WireFormatError
from .nn.network import LayerParams, ParameterSet
from .nn.spec import Conv, Dense, ModelSpec, infer_shapes

MAGIC = b"FAVG"
VERSION = 1
CHECKPOINT_CLIENT_ID = 0xFFFFFFFF

_HEAD = struct.Struct("<4sHIIQH")


@dataclass
class ParameterMessage:
    round_index: int
    client_id: int
    n_k: int
    tensors: list[np.ndarray]


def encode_parameter_message(msg: ParameterMessage) -> bytes:
    if not 0 <= msg.round_index <= 0xFFFFFFFF:
        raise WireFormatError(f"round {msg.round_index} does not fit in u32")
    if not 0 <= msg.client_id <= 0xFFFFFFFF:
        raise WireFormatError(f"client id {msg.client_id} does not fit in u32")
    if not 0 <= msg.n_k <= 0xFFFFFFFFFFFFFFFF:
        raise WireFormatError(f"n_k {msg.n_k} does not fit in u64")
    if len(msg.tensors) > 0xFFFF:
        raise WireFormatError("too many tensors for a u16 count")
    parts = [_HEAD.pack(MAGIC, VERSION, msg.round_index, msg.client_id, msg.n_k, len(msg.tensors))]
    for t in msg.tensors:
        if t.ndim > 0xFF:
            raise WireFormatError(f"tensor rank {t.ndim} does not fit in u8")
        parts.append(struct.pack("<B", t.ndim))
        parts.append(struct.pack(f"<{t.ndim}I", *t.shape))
    for t in msg.tensors:
        parts.append(np.ascontiguousarray(t, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_parameter_message(buf: bytes) -> ParameterMessage:
    if len(buf) < _HEAD.size:
        raise WireFormatError(f"truncated header: {len(buf)} bytes, need {_HEAD.size}")
    magic, version, round_index, client_id, n_k, count = _HEAD.unpack_from(buf, 0)
    if magic != MAGIC:
        raise WireFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise WireFormatError(f"unsupported version {version}, expected {VERSION}")
    offset = _HEAD.size
    shapes: list[tuple[int, ...]] = []
    for i in range(count):
        if offset + 1 > len(buf):
            raise WireFormatError(f"truncated shape table at tensor {i}")
        (ndim,) = struct.unpack_from("<B", buf, offset)
        offset += 1
        if offset + 4 * ndim > len(buf):
            raise WireFormatError(f"truncated dims for tensor {i}")
        dims = struct.unpack_from(f"<{ndim}I", buf, offset)
        offset += 4 * ndim
        shapes.append(tuple(dims))

    scalars = sum(int(np.prod(s, dtype=np.int64)) if s else 1 for s in shapes)
    expected = scalars * 4
    got = len(buf) - offset
    if got < expected:
        raise WireFormatError(f"truncated payload: {got} bytes, declared shapes need {expected}")
    if got > expected:
        raise WireFormatError(f"payload length mismatch: {got} bytes for {expected} declared")

    tensors: list[np.ndarray] = []
    for s in shapes:
        size = int(np.prod(s, dtype=np.int64)) if s else 1
        arr = np.frombuffer(buf, dtype="<f4", count=size, offset=offset).reshape(s).copy()
        offset += size * 4
        tensors.append(arr)
    return ParameterMessage(round_index, client_id, n_k, tensors)


def message_from_params(params: ParameterSet, round_index: int, client_id: int, n_k: int) -> ParameterMessage:
    tensors: list[np.ndarray] = []
    for e in params.entries:
        tensors.append(e.weights)
        tensors.append(e.biases)
    return ParameterMessage(round_index, client_id, n_k, tensors)


def params_from_message(msg: ParameterMessage, spec: ModelSpec) -> ParameterSet:
    """Rebind a message's tensors to the model's parameterized layers,
    validating every tensor shape against what the layer layout requires."""
    shapes = infer_shapes(spec)
    expected: list[tuple[int, tuple[int, ...], tuple[int, ...]]] = []
    shape: tuple[int, ...] = spec.input_shape
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv):
            expected.append((i, (3, 3, shape[2], layer.filters), (layer.filters,)))
        elif isinstance(layer, Dense):
            expected.append((i, (shape[0], layer.units), (layer.units,)))
        shape = shapes[i]
    if len(msg.tensors) != 2 * len(expected):
        raise WireFormatError(
            f"message holds {len(msg.tensors)} tensors, model needs {2 * len(expected)}"
        )
    entries: list[LayerParams] = []
    for j, (layer_id, w_shape, b_shape) in enumerate(expected):
        w, b = msg.tensors[2 * j], msg.tensors[2 * j + 1]
        if w.shape != w_shape or b.shape != b_shape:
            raise WireFormatError(
                f"tensor shapes {w.shape}/{b.shape} do not match layer {layer_id} "
                f"expectation {w_shape}/{b_shape}"
            )
        entries.append(LayerParams(layer_id, w, b))
    return ParameterSet(entries)


def save_checkpoint(path, params: ParameterSet, round_index: int, n: int) -> None:
    msg = message_from_params(params, round_index, CHECKPOINT_CLIENT_ID, n)
    with open(path, "wb") as f:
        f.write(encode_parameter_message(msg))


def load_checkpoint(path, spec: ModelSpec):
    """Returns (ParameterSet, ParameterMessage) decoded from a checkpoint file."""
    with open(path, "rb") as f:
        msg = decode_parameter_message(f.read())
    return params_from_message(msg, spec), msg
