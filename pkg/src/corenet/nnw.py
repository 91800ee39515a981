"""NNW1 single-file weight container.

Layout: 8-byte little-endian manifest length, UTF-8 JSON manifest, binary
payload. The manifest is {"format": "NNW1", "layers": [{rows, cols, kind,
bias_embedded}, ...], "checksum": "sha256:<hex of payload>"} plus an optional
deterministic "meta" object. Payload holds one section per layer: dense
layers are row-major little-endian float64; sparse layers store, per row, a
uint64 entry count followed by (uint64 column, float64 value) pairs.
"""
from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .errors import ChecksumError, FormatError
from .linalg import DenseMatrix, SparseRowMatrix
from .network import Network

_PAIR_DTYPE = np.dtype([("col", "<u8"), ("val", "<f8")])


def _layer_bytes(w) -> bytes:
    if isinstance(w, DenseMatrix):
        return w.data.astype("<f8").tobytes()
    parts = []
    for i in range(w.rows):
        cols, vals = w.row(i)
        parts.append(struct.pack("<Q", len(cols)))
        rec = np.empty(len(cols), dtype=_PAIR_DTYPE)
        rec["col"] = cols
        rec["val"] = vals
        parts.append(rec.tobytes())
    return b"".join(parts)


def save_network(net: Network, path, meta: dict | None = None) -> None:
    payload = b"".join(_layer_bytes(w) for w in net.weights)
    manifest = {
        "format": "NNW1",
        "layers": [
            {
                "rows": w.rows,
                "cols": w.cols,
                "kind": "dense" if isinstance(w, DenseMatrix) else "sparse",
                "bias_embedded": net.bias_embedded,
            }
            for w in net.weights
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


def _read_exact(buf: bytes, offset: int, count: int, what: str) -> tuple[bytes, int]:
    end = offset + count
    if end > len(buf):
        raise FormatError(f"truncated file while reading {what}")
    return buf[offset:end], end


def load_network(path) -> Network:
    with open(path, "rb") as fh:
        blob = fh.read()
    raw, off = _read_exact(blob, 0, 8, "manifest length")
    (mlen,) = struct.unpack("<Q", raw)
    raw, off = _read_exact(blob, off, mlen, "manifest")
    try:
        manifest = json.loads(raw.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"malformed manifest: {exc}") from None
    if manifest.get("format") != "NNW1":
        raise FormatError(f"not an NNW1 file (format={manifest.get('format')!r})")
    layers = manifest.get("layers")
    if not isinstance(layers, list) or not layers:
        raise FormatError("manifest has no layers")

    payload = blob[off:]
    checksum = manifest.get("checksum", "")
    if checksum != "sha256:" + hashlib.sha256(payload).hexdigest():
        raise ChecksumError("payload checksum mismatch")

    bias_flags = {bool(spec.get("bias_embedded", False)) for spec in layers}
    if len(bias_flags) != 1:
        raise FormatError("inconsistent bias_embedded flags across layers")

    weights = []
    pos = 0
    for li, spec in enumerate(layers):
        try:
            rows, cols, kind = int(spec["rows"]), int(spec["cols"]), spec["kind"]
        except (KeyError, TypeError, ValueError):
            raise FormatError(f"layer {li}: bad descriptor") from None
        if rows < 1 or cols < 1:
            raise FormatError(f"layer {li}: non-positive shape")
        if kind == "dense":
            raw, pos = _read_exact(payload, pos, rows * cols * 8, f"layer {li} data")
            data = np.frombuffer(raw, dtype="<f8").reshape(rows, cols)
            weights.append(DenseMatrix(data))
        elif kind == "sparse":
            rows_data = []
            for r in range(rows):
                raw, pos = _read_exact(payload, pos, 8, f"layer {li} row {r} count")
                (count,) = struct.unpack("<Q", raw)
                raw, pos = _read_exact(payload, pos, count * 16, f"layer {li} row {r} entries")
                rec = np.frombuffer(raw, dtype=_PAIR_DTYPE)
                rows_data.append((rec["col"].astype(np.int64), rec["val"].astype(np.float64)))
            try:
                weights.append(SparseRowMatrix.from_rows(rows_data, cols))
            except ValueError as exc:
                raise FormatError(f"layer {li}: {exc}") from None
        else:
            raise FormatError(f"layer {li}: unknown kind {kind!r}")
    if pos != len(payload):
        raise FormatError(f"{len(payload) - pos} trailing payload bytes")

    try:
        return Network(tuple(weights), bias_embedded=bias_flags.pop())
    except Exception as exc:
        raise FormatError(f"inconsistent layer shapes: {exc}") from None


def load_meta(path) -> dict:
    """Manifest meta block without materializing weights."""
    with open(path, "rb") as fh:
        raw = fh.read(8)
        if len(raw) < 8:
            raise FormatError("truncated file while reading manifest length")
        (mlen,) = struct.unpack("<Q", raw)
        blob = fh.read(mlen)
    if len(blob) < mlen:
        raise FormatError("truncated manifest")
    try:
        return json.loads(blob.decode()).get("meta", {})
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"malformed manifest: {exc}") from None
