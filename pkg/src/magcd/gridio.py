"""Self-describing grid files: one JSON header line, then a little-endian payload.

Layout::

    MAGCDGRID1\\n
    {"dims": [...], "ranges": {...}, "dtype": "<c16", "components": [...], ...}\\n
    <row-major little-endian bytes>

The header is a single line of UTF-8 JSON; the payload size must equal
prod(dims) * itemsize.  Complex arrays are stored as interleaved (re, im).
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

MAGIC = b"MAGCDGRID1\n"


class GridFormatError(ValueError):
    pass


def write_grid(path, data, ranges: Optional[dict] = None, components: Optional[Sequence[str]] = None,
               meta: Optional[dict] = None) -> Path:
    arr = np.asarray(data)
    if arr.dtype.kind == "c":
        dt = np.dtype("<c16")
    elif arr.dtype.kind in "fiub":
        dt = np.dtype("<f8")
    else:
        raise GridFormatError("unsupported dtype %s" % arr.dtype)
    arr = np.ascontiguousarray(arr, dtype=dt)
    header = dict(dims=list(arr.shape), dtype=dt.str, order="C",
                  ranges={k: [float(v[0]), float(v[1])] for k, v in (ranges or {}).items()},
                  components=list(components or []), meta=meta or {})
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(arr.tobytes(order="C"))
    return path


def read_grid(path):
    """Return (array, header dict)."""
    with open(path, "rb") as fh:
        if fh.readline() != MAGIC:
            raise GridFormatError("%s: not a grid file" % path)
        try:
            header = json.loads(fh.readline().decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise GridFormatError("%s: bad header (%s)" % (path, exc)) from exc
        payload = fh.read()
    dt = np.dtype(header["dtype"])
    dims = tuple(int(d) for d in header["dims"])
    if len(payload) != int(np.prod(dims, dtype=np.int64)) * dt.itemsize:
        raise GridFormatError("%s: payload size does not match header" % path)
    return np.frombuffer(payload, dtype=dt).reshape(dims).copy(), header
