"""
Checkpoint Container

Versioned little-endian binary format for named float32 tensors:

    magic      4 bytes   b"NPHM"
    version    u32
    count      u32       number of records
    record*    u32 name length, UTF-8 name, u32 rank, u32 dims[rank],
               float32 payload (C order)

Metadata (configuration, training stage) lives in a JSON sidecar next to the
binary file, written by the model classes that use this container.
"""

import struct
from collections import OrderedDict
from pathlib import Path
from typing import Dict, Mapping, Union

import numpy as np

from ..errors import CheckpointError

MAGIC = b"NPHM"
FORMAT_VERSION = 1

_U32 = struct.Struct("<I")


def encode_tensors(tensors: Mapping[str, np.ndarray]) -> bytes:
    """
    Serialise tensors in insertion order.

    Args:
        tensors: Mapping of name to array (any real dtype; stored as float32)

    Returns:
        bytes: The encoded container
    """
    parts = [MAGIC, _U32.pack(FORMAT_VERSION), _U32.pack(len(tensors))]
    for name, value in tensors.items():
        array = np.ascontiguousarray(np.asarray(value), dtype="<f4")
        encoded_name = name.encode("utf-8")
        parts.append(_U32.pack(len(encoded_name)))
        parts.append(encoded_name)
        parts.append(_U32.pack(array.ndim))
        parts.extend(_U32.pack(dim) for dim in array.shape)
        parts.append(array.tobytes(order="C"))
    return b"".join(parts)


def decode_tensors(data: bytes) -> "OrderedDict[str, np.ndarray]":
    """
    Parse an encoded container.

    Returns:
        OrderedDict[str, np.ndarray]: float32 arrays in stored order

    Raises:
        CheckpointError: On a bad magic number, unknown version or truncation
    """
    view = memoryview(data)
    if len(view) < 12 or bytes(view[:4]) != MAGIC:
        raise CheckpointError("Not a checkpoint: bad magic number")
    offset = 4

    def read_u32() -> int:
        nonlocal offset
        if offset + 4 > len(view):
            raise CheckpointError(f"Truncated checkpoint at byte {offset}")
        (value,) = _U32.unpack_from(view, offset)
        offset += 4
        return value

    version = read_u32()
    if version != FORMAT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
    count = read_u32()
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for _ in range(count):
        name_length = read_u32()
        if offset + name_length > len(view):
            raise CheckpointError("Truncated tensor name")
        try:
            name = bytes(view[offset:offset + name_length]).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"Tensor name at byte {offset} is not valid UTF-8") from exc
        offset += name_length
        rank = read_u32()
        shape = tuple(read_u32() for _ in range(rank))
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(view):
            raise CheckpointError(f"Truncated payload for tensor '{name}'")
        tensors[name] = np.frombuffer(view[offset:offset + nbytes], dtype="<f4").reshape(shape).copy()
        offset += nbytes
    if offset != len(view):
        raise CheckpointError(f"{len(view) - offset} trailing bytes after the last record")
    return tensors


def save_tensors(path: Union[str, Path], tensors: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensors(tensors))
    return path


def load_tensors(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    return decode_tensors(Path(path).read_bytes())
