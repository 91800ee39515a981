"""Minimal NNW1 writer.

File layout: 8-byte little-endian manifest length, UTF-8 JSON manifest
{"format": "NNW1", "layers": [{rows, cols, kind, bias_embedded}],
"checksum": "sha256:<payload hex>", "meta": {...}}, then the binary payload.
Dense layers are row-major little-endian float64.
"""
from __future__ import annotations

import hashlib
import json
import struct

import numpy as np


def write_dense_network(matrices: list[np.ndarray], path, meta: dict | None = None) -> None:
    payload = b"".join(np.ascontiguousarray(m, dtype="<f8").tobytes() for m in matrices)
    manifest = {
        "format": "NNW1",
        "layers": [
            {"rows": int(m.shape[0]), "cols": int(m.shape[1]),
             "kind": "dense", "bias_embedded": True}
            for m in matrices
        ],
        "checksum": "sha256:" + hashlib.sha256(payload).hexdigest(),
    }
    if meta is not None:
        manifest["meta"] = meta
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(payload)
