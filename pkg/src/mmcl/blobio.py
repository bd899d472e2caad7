"""Flat binary blob + JSON manifest storage for named arrays.

Arrays are written back-to-back, little-endian, in the order given. The
manifest records name, dtype, shape and byte offset so a round trip is
bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

import numpy as np


def save_arrays(
    blob_path: str | Path,
    manifest_path: str | Path,
    arrays: Mapping[str, np.ndarray],
    extra: Mapping[str, Any] | None = None,
) -> None:
    entries = []
    offset = 0
    with open(blob_path, "wb") as fh:
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr)
            le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
            raw = le.tobytes(order="C")
            fh.write(raw)
            entries.append(
                {
                    "name": name,
                    "dtype": le.dtype.str,
                    "shape": list(arr.shape),
                    "offset": offset,
                    "nbytes": len(raw),
                }
            )
            offset += len(raw)
    manifest = {"arrays": entries, "extra": dict(extra or {})}
    Path(manifest_path).write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_arrays(
    blob_path: str | Path, manifest_path: str | Path
) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    manifest = json.loads(Path(manifest_path).read_text())
    raw = Path(blob_path).read_bytes()
    out: dict[str, np.ndarray] = {}
    for e in manifest["arrays"]:
        chunk = raw[e["offset"] : e["offset"] + e["nbytes"]]
        if len(chunk) != e["nbytes"]:
            raise ValueError(f"blob truncated while reading array {e['name']!r}")
        arr = np.frombuffer(chunk, dtype=np.dtype(e["dtype"])).reshape(e["shape"])
        out[e["name"]] = arr.astype(arr.dtype.newbyteorder("="), copy=True)
    return out, manifest.get("extra", {})
