"""Flat binary container for named parameter tensors.

Layout (documented here and in the README):

* magic line ``TSRM1\\n`` (ASCII)
* header: ``key = value\\n`` lines, values JSON-encoded, terminated by
  a single ``---\\n`` line
* one record per parameter, in sorted name order:
  ``[u32 name_len][name utf-8][u32 ndim][u64 dim]*ndim [f64 data]*prod(dims)``
  all integers and floats little-endian; data row-major float64
* end of file after the last record

Loaders must treat any truncation or unknown magic as a format error.
"""

import json
import os
import struct

import numpy as np

from .errors import FormatError

MAGIC = b"TSRM1\n"
_HEADER_END = b"---\n"


def save_params(path, header, params):
    """Write header dict + {name: Tensor-or-ndarray} atomically."""
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        for key in sorted(header):
            fh.write(f"{key} = {json.dumps(header[key])}\n".encode())
        fh.write(_HEADER_END)
        for name in sorted(params):
            data = getattr(params[name], "data", params[name])
            arr = np.asarray(data, dtype=np.float64)
            enc = name.encode()
            fh.write(struct.pack("<I", len(enc)))
            fh.write(enc)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes(order="C"))
    os.replace(tmp, path)


def _read_exact(fh, n, path):
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"{path}: truncated record (wanted {n} bytes, got {len(buf)})")
    return buf


def load_params(path):
    """Read back (header, {name: float64 ndarray}). Raises FormatError."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise FormatError(f"{path}: not a parameter container (bad magic)")
        header = {}
        while True:
            line = fh.readline()
            if not line:
                raise FormatError(f"{path}: header not terminated")
            if line == _HEADER_END:
                break
            key, sep, value = line.decode().partition(" = ")
            if not sep:
                raise FormatError(f"{path}: malformed header line {line!r}")
            header[key] = json.loads(value)
        params = {}
        while True:
            head = fh.read(4)
            if not head:
                break
            if len(head) != 4:
                raise FormatError(f"{path}: truncated record header")
            (name_len,) = struct.unpack("<I", head)
            name = _read_exact(fh, name_len, path).decode()
            (ndim,) = struct.unpack("<I", _read_exact(fh, 4, path))
            dims = struct.unpack(f"<{ndim}Q", _read_exact(fh, 8 * ndim, path))
            count = int(np.prod(dims)) if dims else 1
            raw = _read_exact(fh, 8 * count, path)
            params[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).copy()
    return header, params
