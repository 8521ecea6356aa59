"""BGT1 tensor files.

Layout: the 4 magic bytes ``BGT1``, then for each tensor until EOF:
u32 name length, UTF-8 name, u32 ndim, ndim x u32 dims, float64 data.
All integers and floats are little-endian; data is row-major.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"BGT1"


class FormatError(ValueError):
    pass


def encode(tensors):
    chunks = [MAGIC]
    for name, arr in tensors.items():
        arr = np.array(arr, dtype="<f8", order="C")  # keeps 0-d shapes, unlike ascontiguousarray
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    return b"".join(chunks)


def decode(blob):
    if blob[:4] != MAGIC:
        raise FormatError(f"not a BGT1 file (magic {blob[:4]!r})")
    out, pos = {}, 4
    try:
        while pos < len(blob):
            (nlen,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            dims = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            count = int(np.prod(dims, dtype=np.int64))
            if pos + 8 * count > len(blob):
                raise FormatError(f"truncated data for tensor {name!r}")
            out[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).astype(np.float64).reshape(dims)
            pos += 8 * count
    except struct.error as exc:
        raise FormatError(f"truncated BGT1 header at byte {pos}") from exc
    return out


def save(path, tensors):
    with open(path, "wb") as fh:
        fh.write(encode(tensors))


def load(path):
    with open(path, "rb") as fh:
        return decode(fh.read())
