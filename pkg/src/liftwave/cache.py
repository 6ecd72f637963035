"""Self-describing binary container for preprocessing caches and checkpoints.

One file holds named sections of float64/int64 arrays or raw bytes, all
little-endian with length-prefixed headers, so reload reproduces every array
bit-exactly without depending on an external serialization schema. Writes go
through a temp file and an atomic rename.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

MAGIC = b"LWCACHE\x01"
FORMAT_VERSION = 1

_KIND_F64 = 0
_KIND_I64 = 1
_KIND_BYTES = 2


class CacheFormatError(RuntimeError):
    pass


def write_container(path, sections: dict):
    """Write named sections (ndarray or bytes) atomically to ``path``."""
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(sections))]
    for name, payload in sections.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        if isinstance(payload, (bytes, bytearray)):
            chunks.append(struct.pack("<BB", _KIND_BYTES, 1))
            chunks.append(struct.pack("<Q", len(payload)))
            chunks.append(bytes(payload))
            continue
        arr = np.asarray(payload)
        if arr.dtype.kind == "f":
            arr = arr.astype("<f8", copy=False)
            kind = _KIND_F64
        elif arr.dtype.kind in "iub":
            arr = arr.astype("<i8", copy=False)
            kind = _KIND_I64
        else:
            raise CacheFormatError(f"unsupported dtype {arr.dtype} in section {name}")
        chunks.append(struct.pack("<BB", kind, arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())

    dirname = os.path.dirname(os.path.abspath(path))
    os.makedirs(dirname, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=dirname, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            for chunk in chunks:
                fh.write(chunk)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_container(path) -> dict:
    """Read a container back into a dict of arrays / bytes."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise CacheFormatError(f"{path}: bad magic bytes")
    off = len(MAGIC)
    version, n_sections = struct.unpack_from("<II", blob, off)
    off += 8
    if version != FORMAT_VERSION:
        raise CacheFormatError(f"{path}: unsupported container version {version}")
    out = {}
    for _ in range(n_sections):
        (name_len,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        kind, ndim = struct.unpack_from("<BB", blob, off)
        off += 2
        if kind == _KIND_BYTES:
            (size,) = struct.unpack_from("<Q", blob, off)
            off += 8
            out[name] = blob[off : off + size]
            off += size
            continue
        shape = struct.unpack_from(f"<{ndim}Q", blob, off)
        off += 8 * ndim
        count = int(np.prod(shape)) if ndim else 1
        dtype = "<f8" if kind == _KIND_F64 else "<i8"
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=off).reshape(shape)
        out[name] = arr.copy()
        off += count * 8
    return out


def pack_meta(meta: dict) -> bytes:
    """Canonical JSON encoding for fingerprint sections."""
    return json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")


def unpack_meta(payload: bytes) -> dict:
    return json.loads(payload.decode("utf-8"))
