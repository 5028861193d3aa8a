"""Writers and readers for the formats shared with the deepdim analyzer.

The ACTV layout is the analyzer's normative contract (fixed little-endian
header, then a dense float payload in (sample, channel, row, column)
order); it is reimplemented here so the exporter stays a standalone
bridge.  The writer streams batches, because a full-size capture of the
early convolutional layers does not fit in memory.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

ACTV_MAGIC = b"ACTV"
ACTV_VERSION = 1
DTYPE_FLOAT32 = 1
_HEADER = struct.Struct("<4sHBBQQQQH")

MANIFEST_FORMAT = "deepdim-manifest"
MANIFEST_VERSION = 1


class ActvWriter:
    """Streams one layer's activation batches into an ACTV container.

    The header promises ``n`` samples up front; ``close`` fails if the
    appended batches do not add up to exactly that.
    """

    def __init__(self, path, layer_name: str, n: int, c: int, h: int, w: int):
        self.path = Path(path)
        self.layer_name = layer_name
        self.dims = (n, c, h, w)
        self._written = 0
        name_bytes = layer_name.encode("utf-8")
        self._fh = open(self.path, "wb")
        self._fh.write(_HEADER.pack(ACTV_MAGIC, ACTV_VERSION, DTYPE_FLOAT32, 4,
                                    n, c, h, w, len(name_bytes)))
        self._fh.write(name_bytes)

    def append(self, batch: np.ndarray) -> None:
        n, c, h, w = self.dims
        arr = np.ascontiguousarray(batch, dtype="<f4")
        if arr.ndim != 4 or arr.shape[1:] != (c, h, w):
            raise ValueError(
                f"{self.layer_name}: batch shape {arr.shape} does not match dims {self.dims}"
            )
        if self._written + arr.shape[0] > n:
            raise ValueError(f"{self.layer_name}: more samples appended than promised ({n})")
        self._fh.write(arr.tobytes())
        self._written += arr.shape[0]

    def close(self) -> None:
        self._fh.close()
        if self._written != self.dims[0]:
            raise ValueError(
                f"{self.layer_name}: wrote {self._written} samples, header promises {self.dims[0]}"
            )

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self._fh.close()
        return False


def read_ppm(path) -> np.ndarray:
    """Binary PPM (P6, maxval 255) to a float32 (H, W, 3) image in [0, 1]."""
    blob = Path(path).read_bytes()
    if blob[:2] != b"P6":
        raise ValueError(f"{path}: not a binary PPM (P6) file")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        if pos >= len(blob):
            raise ValueError(f"{path}: truncated PPM header")
        byte = blob[pos]
        if byte in b" \t\r\n\x0b\x0c":
            pos += 1
        elif byte == ord("#"):
            while pos < len(blob) and blob[pos] != ord("\n"):
                pos += 1
        elif ord("0") <= byte <= ord("9"):
            start = pos
            while pos < len(blob) and ord("0") <= blob[pos] <= ord("9"):
                pos += 1
            fields.append(int(blob[start:pos]))
        else:
            raise ValueError(f"{path}: malformed PPM header")
    w, h, maxval = fields
    if maxval != 255:
        raise ValueError(f"{path}: unsupported PPM maxval {maxval}")
    pos += 1  # single whitespace after maxval
    pixels = np.frombuffer(blob, dtype=np.uint8, count=w * h * 3, offset=pos)
    if pixels.size != w * h * 3:
        raise ValueError(f"{path}: truncated pixel data")
    return pixels.reshape(h, w, 3).astype(np.float32) / 255.0


def write_manifest(
    path,
    *,
    network: str,
    augmentation: dict | None,
    cluster_size: int,
    confidence_threshold: float,
    class_index: int,
    activations: list[tuple[str, str]],
    excluded_indices: list[int],
    preprocessing: dict,
) -> None:
    doc = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "network": network,
        "augmentation": augmentation,
        "cluster_size": cluster_size,
        "confidence_threshold": confidence_threshold,
        "class_index": class_index,
        "activations": [{"layer": layer, "path": rel} for layer, rel in activations],
        "excluded_indices": excluded_indices,
        "preprocessing": preprocessing,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
