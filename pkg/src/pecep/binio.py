"""Raw little-endian float64 matrices with a JSON sidecar.

``write_matrix("x.bin", m, meta)`` produces ``x.bin`` (row-major ``<f8``) and
``x.json`` holding ``rows``, ``cols`` and the caller's metadata.
"""

import json
from pathlib import Path

import numpy as np

from .errors import InvalidInputError

DTYPE = np.dtype("<f8")


def sidecar_path(path):
    return Path(path).with_suffix(".json")


def write_matrix(path, matrix, meta=None):
    path = Path(path)
    m = np.ascontiguousarray(matrix, dtype=DTYPE)
    if m.ndim != 2:
        raise InvalidInputError(f"expected a 2-D matrix, got shape {m.shape}")
    path.parent.mkdir(parents=True, exist_ok=True)
    m.tofile(path)
    header = {"rows": int(m.shape[0]), "cols": int(m.shape[1]), "dtype": "<f8"}
    header.update(meta or {})
    sidecar_path(path).write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return path


def read_matrix(path):
    """Return ``(matrix, meta)`` for a file written by :func:`write_matrix`."""
    path = Path(path)
    meta = json.loads(sidecar_path(path).read_text())
    data = np.fromfile(path, dtype=DTYPE)
    rows, cols = meta["rows"], meta["cols"]
    if data.size != rows * cols:
        raise InvalidInputError(
            f"{path}: {data.size} values on disk, sidecar says {rows}x{cols}"
        )
    return data.reshape(rows, cols), meta
