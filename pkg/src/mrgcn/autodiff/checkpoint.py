"""Named-tensor archive.

Layout (all integers little-endian)::

    magic      8 bytes  b"MRGCNTA\\0"
    version    uint32
    meta_len   uint32, followed by meta_len bytes of UTF-8 JSON
    count      uint32
    count x {
        name_len uint16, name (UTF-8)
        ndim     uint8, dims uint32[ndim]
        values   float32 little-endian, C order
    }
"""

import json
import struct

import numpy as np

MAGIC = b"MRGCNTA\0"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_tensors(path, tensors, meta=None):
    """Write ``{name: array}`` (insertion order kept) plus a JSON ``meta`` dict."""
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr)
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_tensors(path):
    """Return ``(tensors, meta)``; tensors come back as float32 arrays."""
    with open(path, "rb") as fh:
        blob = fh.read()
    try:
        return _unpack(path, blob)
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"{path}: corrupt tensor archive ({exc})") from None


def _unpack(path, blob):
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a tensor archive")
    pos = 8
    version, meta_len = struct.unpack_from("<II", blob, pos)
    pos += 8
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported archive version {version}")
    meta = json.loads(blob[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        size = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(blob, dtype="<f4", count=size, offset=pos).reshape(shape).copy()
        pos += 4 * size
    if pos != len(blob):
        raise CheckpointError(f"{path}: trailing bytes after last tensor")
    return tensors, meta
