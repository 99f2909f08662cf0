"""Binary checkpoint format for named 2-D float64 tensors.

Layout: magic "SAILCKPT", version u32, then for each tensor: name length u32,
UTF-8 name bytes, rows u32, cols u32, row-major little-endian f64 payload.
All integers are little-endian. Tensors are read until end of file.
"""

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SAILCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_tensors(path, tensors: dict) -> None:
    path = Path(path)
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", VERSION)
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        if arr.ndim != 2:
            raise CheckpointError(f"tensor {name!r} must be 2-D, got shape {arr.shape}")
        encoded = name.encode("utf-8")
        blob += struct.pack("<I", len(encoded))
        blob += encoded
        blob += struct.pack("<II", arr.shape[0], arr.shape[1])
        blob += arr.astype("<f8").tobytes()
    path.write_bytes(bytes(blob))


def load_tensors(path) -> dict:
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 4 or data[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a SAILCKPT file (bad magic)")
    (version,) = struct.unpack_from("<I", data, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    offset = len(MAGIC) + 4
    tensors = {}
    while offset < len(data):
        try:
            (name_len,) = struct.unpack_from("<I", data, offset)
            offset += 4
            name = data[offset:offset + name_len].decode("utf-8")
            if len(data[offset:offset + name_len]) != name_len:
                raise struct.error("truncated name")
            offset += name_len
            rows, cols = struct.unpack_from("<II", data, offset)
            offset += 8
            nbytes = rows * cols * 8
            payload = data[offset:offset + nbytes]
            if len(payload) != nbytes:
                raise struct.error("truncated payload")
            offset += nbytes
        except struct.error as exc:
            raise CheckpointError(f"{path}: truncated checkpoint ({exc})") from exc
        tensors[name] = np.frombuffer(payload, dtype="<f8").astype(
            np.float64).reshape(rows, cols)
    return tensors


def save_scalar(value) -> np.ndarray:
    """Encode a scalar counter as a 1x1 tensor for checkpointing."""
    return np.array([[float(value)]], dtype=np.float64)


def load_scalar(arr: np.ndarray) -> float:
    if arr.shape != (1, 1):
        raise CheckpointError(f"expected 1x1 scalar tensor, got {arr.shape}")
    return float(arr[0, 0])
