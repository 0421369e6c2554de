"""Binary tensor container ("SPKT") for checkpoints and debug dumps.

Layout: magic "SPKT", format version u32, tensor count u32, then per
tensor: name length u32 + UTF-8 name, rank u32, dims u64 each, dtype tag
(f32=1, f64=2), raw little-endian data.

JSON metadata (e.g. a network spec) rides along as a reserved entry named
"__meta_json__" holding the UTF-8 bytes as an f32 vector.
"""

import json
import struct

import numpy as np

from .errors import ParseError

MAGIC = b"SPKT"
VERSION = 1
META_KEY = "__meta_json__"

_DTYPE_TAGS = {1: np.dtype("<f4"), 2: np.dtype("<f8")}


def save_tensors(path, tensors, meta=None):
    """Write a dict of name -> ndarray; `meta` is an optional JSON-able blob."""
    entries = dict(tensors)
    if meta is not None:
        raw = json.dumps(meta).encode("utf-8")
        entries[META_KEY] = np.frombuffer(raw, dtype=np.uint8).astype(np.float32)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(entries)))
        for name, arr in entries.items():
            arr = np.asarray(arr)
            tag = 1 if arr.dtype == np.float32 else 2
            arr = arr.astype(_DTYPE_TAGS[tag], copy=False)
            raw_name = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw_name)))
            fh.write(raw_name)
            fh.write(struct.pack("<I", arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<Q", d))
            fh.write(struct.pack("<B", tag))
            fh.write(arr.tobytes())


def load_tensors(path):
    """Read a container; returns (tensors dict, meta or None)."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ParseError(f"{path}: not an SPKT container")
        version, count = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise ParseError(f"{path}: unsupported container version {version}")
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", fh.read(4))
            dims = [struct.unpack("<Q", fh.read(8))[0] for _ in range(rank)]
            (tag,) = struct.unpack("<B", fh.read(1))
            if tag not in _DTYPE_TAGS:
                raise ParseError(f"{path}: unknown dtype tag {tag}")
            dtype = _DTYPE_TAGS[tag]
            n = int(np.prod(dims)) if dims else 1
            raw = fh.read(n * dtype.itemsize)
            if len(raw) != n * dtype.itemsize:
                raise ParseError(f"{path}: truncated tensor data for '{name}'")
            tensors[name] = np.frombuffer(raw, dtype=dtype).reshape(dims).copy()
    meta = None
    if META_KEY in tensors:
        raw = tensors.pop(META_KEY).astype(np.uint8).tobytes()
        meta = json.loads(raw.decode("utf-8"))
    return tensors, meta
