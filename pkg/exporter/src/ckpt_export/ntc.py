"""Writer for the NTC tensor container.

An NTC artifact is a pair of files: a JSON manifest (UTF-8) and a raw
binary blob next to it (same stem, ``.bin`` suffix). The manifest records
``format`` ("ntc"), ``version`` (1), the blob's file name, free-form
``meta``, and one entry per tensor with its dtype ("f32"), shape,
``byte_offset`` and ``byte_length``. Values sit in the blob as
little-endian float32, each tensor starting on an 8-byte boundary with
zero padding in between. Writing is fully deterministic: identical
tensors and meta produce byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

NTC_FORMAT = "ntc"
NTC_VERSION = 1
NTC_ALIGN = 8


def blob_path(manifest_path: Path) -> Path:
    return manifest_path.with_suffix(".bin")


def write_ntc(tensors: dict[str, np.ndarray], path, meta: dict | None = None) -> Path:
    """Write tensors as manifest + float32 blob; returns the manifest path."""
    path = Path(path)
    entries = []
    chunks: list[bytes] = []
    cursor = 0
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f4")
        pad = (-cursor) % NTC_ALIGN
        if pad:
            chunks.append(b"\x00" * pad)
            cursor += pad
        entries.append(
            {
                "name": name,
                "dtype": "f32",
                "shape": list(data.shape),
                "byte_offset": cursor,
                "byte_length": data.nbytes,
            }
        )
        chunks.append(data.tobytes())
        cursor += data.nbytes
    manifest = {
        "format": NTC_FORMAT,
        "version": NTC_VERSION,
        "blob": blob_path(path).name,
        "meta": meta or {},
        "tensors": entries,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    blob_path(path).write_bytes(b"".join(chunks))
    return path
