"""Versioned binary checkpoint container.

Layout (all integers little-endian):

    magic    8 bytes  b"FRSTCKPT"
    version  1 byte   currently 1
    meta     u32 length + UTF-8 JSON object
    count    u32 number of named arrays
    entries  repeated: u16 name length, name UTF-8, u8 dtype code,
             u8 ndim, ndim * u32 dims, raw little-endian array bytes

Dtype codes: 0 = float32, 1 = float64. Loading a file whose magic or version
does not match fails loudly.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"FRSTCKPT"
VERSION = 1

_DTYPE_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None):
    """Write named float arrays plus a JSON meta block."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<B", VERSION))
        f.write(struct.pack("<I", len(meta_bytes)))
        f.write(meta_bytes)
        f.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            arr = np.asarray(arr)
            if arr.dtype not in _DTYPE_CODES:
                raise CheckpointError(f"unsupported dtype {arr.dtype} for entry '{name}'")
            name_b = name.encode("utf-8")
            f.write(struct.pack("<H", len(name_b)))
            f.write(name_b)
            f.write(struct.pack("<B", _DTYPE_CODES[arr.dtype]))
            f.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<I", d))
            code = _DTYPE_CODES[arr.dtype]
            f.write(np.ascontiguousarray(arr, dtype=_CODE_DTYPES[code]).tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read back (arrays, meta); raises CheckpointError on bad magic/version."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) + 1 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"not a checkpoint file (bad magic): {path}")
    off = len(MAGIC)
    version = raw[off]
    off += 1
    if version != VERSION:
        raise CheckpointError(
            f"checkpoint version {version} not supported (expected {VERSION}): {path}"
        )
    (meta_len,) = struct.unpack_from("<I", raw, off)
    off += 4
    meta = json.loads(raw[off:off + meta_len].decode("utf-8"))
    off += meta_len
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off:off + name_len].decode("utf-8")
        off += name_len
        code = raw[off]
        off += 1
        ndim = raw[off]
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", raw, off) if ndim else ()
        off += 4 * ndim
        dtype = _CODE_DTYPES.get(code)
        if dtype is None:
            raise CheckpointError(f"unknown dtype code {code} for entry '{name}'")
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if ndim else dtype.itemsize
        arr = np.frombuffer(raw[off:off + nbytes], dtype=dtype).reshape(shape).copy()
        off += nbytes
        arrays[name] = arr
    return arrays, meta


def params_sha256(arrays: dict[str, np.ndarray]) -> str:
    """Order-independent content hash of named parameter arrays."""
    h = hashlib.sha256()
    for name in sorted(arrays):
        h.update(name.encode("utf-8"))
        h.update(np.ascontiguousarray(arrays[name]).tobytes())
    return h.hexdigest()
