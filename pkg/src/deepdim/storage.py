"""Bit-exact file formats: activation tensors, PPM images, reports, manifests.

ACTV activation container (all multi-byte integers little-endian)::

    offset  size  field
    0       4     magic "ACTV"
    4       2     format version, u16 (currently 1)
    6       1     dtype code, u8: 1 = float32, 2 = float64
    7       1     tensor rank, u8 (always 4)
    8       32    dims, four u64: [n, C, H, W]
    40      2     layer-name byte length, u16
    42      var   layer name, UTF-8
    then          payload: n*C*H*W values, little-endian, C-order over
                  (sample, channel, row, column)

Images use binary PPM (P6, maxval 255); pixel bytes map to [0, 1] by
value / 255.  Reports and run manifests are JSON documents (reports can
also be rendered as CSV, which is write-only).  These formats are the
normative cross-process contract with the activation exporter.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .activations import DimensionSummary, LayerActivations
from .augment import check_image

__all__ = [
    "StorageError",
    "BadMagicError",
    "VersionMismatchError",
    "UnknownDtypeError",
    "TruncatedPayloadError",
    "FormatError",
    "DimensionReport",
    "RunManifest",
    "write_activations",
    "read_activations",
    "peek_activations",
    "write_image",
    "read_image",
    "write_report",
    "read_report",
    "render_report",
    "parse_report",
    "write_manifest",
    "read_manifest",
]

ACTV_MAGIC = b"ACTV"
ACTV_VERSION = 1
DTYPE_CODES = {"float32": 1, "float64": 2}
_CODE_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_HEADER = struct.Struct("<4sHBBQQQQH")

REPORT_FORMAT = "deepdim-report"
REPORT_VERSION = 1
MANIFEST_FORMAT = "deepdim-manifest"
MANIFEST_VERSION = 1


class StorageError(Exception):
    """Base class for all file-format errors."""


class BadMagicError(StorageError):
    pass


class VersionMismatchError(StorageError):
    pass


class UnknownDtypeError(StorageError):
    pass


class TruncatedPayloadError(StorageError):
    pass


class FormatError(StorageError):
    """Malformed content beyond the specifically named failure modes."""


# ---------------------------------------------------------------------------
# ACTV activation tensors


def write_activations(acts: LayerActivations, path, *, dtype: str = "float32") -> None:
    """Serialize a layer tensor; ``dtype`` chooses the payload precision.

    The default float32 payload halves file size; a float64 tensor written
    as float32 is down-converted lossily, so pass ``dtype="float64"`` when
    bit-exact 64-bit round-trips matter.
    """
    code = DTYPE_CODES.get(dtype)
    if code is None:
        raise UnknownDtypeError(f"unsupported payload dtype {dtype!r}")
    name_bytes = acts.layer_name.encode("utf-8")
    if len(name_bytes) > 0xFFFF:
        raise FormatError("layer name exceeds 65535 UTF-8 bytes")
    n, c, h, w = acts.data.shape
    header = _HEADER.pack(ACTV_MAGIC, ACTV_VERSION, code, 4, n, c, h, w, len(name_bytes))
    payload = np.ascontiguousarray(acts.data.astype(_CODE_DTYPES[code], copy=False))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(name_bytes)
        fh.write(payload.tobytes())


def read_activations(path) -> LayerActivations:
    """Parse an ACTV file back into a LayerActivations tensor."""
    blob = Path(path).read_bytes()
    name, dims, dtype, payload_start = _parse_actv_header(blob)
    n, c, h, w = dims
    expected = n * c * h * w * dtype.itemsize
    payload = blob[payload_start:]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"payload holds {len(payload)} bytes, header promises {expected}"
        )
    if len(payload) > expected:
        raise FormatError(f"{len(payload) - expected} trailing bytes after payload")
    native = np.dtype(dtype.str[1:])  # strip the byte-order prefix
    values = np.frombuffer(payload, dtype=dtype).astype(native).reshape(n, c, h, w)
    try:
        return LayerActivations(name, values)
    except ValueError as err:
        raise FormatError(str(err)) from err


def peek_activations(path) -> tuple[str, tuple[int, int, int, int], str]:
    """Read only the header: (layer name, dims [n, C, H, W], dtype name)."""
    with open(path, "rb") as fh:
        blob = fh.read(_HEADER.size + 0xFFFF)
    name, dims, dtype, _ = _parse_actv_header(blob, payload_expected=False)
    return name, dims, str(np.dtype(dtype.str[1:]))


def _parse_actv_header(blob: bytes, payload_expected: bool = True):
    if blob[:4] != ACTV_MAGIC:
        raise BadMagicError(f"bad magic {blob[:4]!r}, expected {ACTV_MAGIC!r}")
    if len(blob) < _HEADER.size:
        raise TruncatedPayloadError("file ends inside the fixed header")
    magic, version, dtype_code, rank, n, c, h, w, name_len = _HEADER.unpack_from(blob)
    if version != ACTV_VERSION:
        raise VersionMismatchError(f"format version {version}, expected {ACTV_VERSION}")
    if dtype_code not in _CODE_DTYPES:
        raise UnknownDtypeError(f"unknown dtype code {dtype_code}")
    if rank != 4:
        raise FormatError(f"tensor rank {rank}, expected 4")
    if min(n, c, h, w) < 1:
        raise FormatError(f"all dims must be >= 1, got {(n, c, h, w)}")
    name_end = _HEADER.size + name_len
    if len(blob) < name_end:
        raise TruncatedPayloadError("file ends inside the layer name")
    try:
        name = blob[_HEADER.size : name_end].decode("utf-8")
    except UnicodeDecodeError as err:
        raise FormatError(f"layer name is not valid UTF-8: {err}") from err
    if not name:
        raise FormatError("layer name is empty")
    return name, (n, c, h, w), _CODE_DTYPES[dtype_code], name_end


# ---------------------------------------------------------------------------
# PPM images (binary P6, maxval 255)


def write_image(img, path) -> None:
    """Write an [0, 1] float image as binary PPM with round-to-nearest pixels."""
    a = check_image(img)
    h, w = a.shape[:2]
    pixels = np.rint(a * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())


def read_image(path) -> np.ndarray:
    """Read a binary PPM (P6, maxval 255) into an (H, W, 3) float image in [0, 1]."""
    blob = Path(path).read_bytes()
    if blob[:2] != b"P6":
        raise FormatError("unsupported image format (expected binary PPM 'P6')")
    fields, pos = _ppm_fields(blob, 2, 3)
    w, h, maxval = fields
    if maxval != 255:
        raise FormatError(f"unsupported PPM maxval {maxval} (only 255)")
    if w < 1 or h < 1:
        raise FormatError(f"invalid PPM dimensions {w}x{h}")
    expected = w * h * 3
    payload = blob[pos:]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"pixel data holds {len(payload)} bytes, header promises {expected}"
        )
    if len(payload) > expected:
        raise FormatError(f"{len(payload) - expected} trailing bytes after pixel data")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
    return pixels.astype(np.float64) / 255.0


def _ppm_fields(blob: bytes, pos: int, count: int) -> tuple[list[int], int]:
    """Parse ``count`` whitespace/comment-separated integers, then one raster delimiter."""
    fields: list[int] = []
    length = len(blob)
    while len(fields) < count:
        if pos >= length:
            raise TruncatedPayloadError("file ends inside the PPM header")
        byte = blob[pos]
        if byte in b" \t\r\n\x0b\x0c":
            pos += 1
        elif byte == ord("#"):
            while pos < length and blob[pos] != ord("\n"):
                pos += 1
        elif ord("0") <= byte <= ord("9"):
            start = pos
            while pos < length and ord("0") <= blob[pos] <= ord("9"):
                pos += 1
            fields.append(int(blob[start:pos]))
        else:
            raise FormatError(f"unexpected byte {bytes([byte])!r} in PPM header")
    if pos >= length or blob[pos] not in b" \t\r\n\x0b\x0c":
        raise FormatError("PPM header must end with a single whitespace byte")
    return fields, pos + 1


# ---------------------------------------------------------------------------
# Dimension reports


@dataclass(frozen=True)
class DimensionReport:
    """Per-layer dimension summaries plus optional log10 spectra.

    ``log_spectra`` maps layer name to {spectrum label: log10 values};
    labels are ``"map:<index>"``, ``"concatenated"`` or ``"original"``.
    """

    summaries: tuple[DimensionSummary, ...]
    log_spectra: dict[str, dict[str, list[float]]] = field(default_factory=dict)


_CSV_COLUMNS = [
    "layer",
    "cluster_size",
    "theta",
    "k",
    "map_indices",
    "per_map_dimensions",
    "estimated",
    "concatenated",
    "original",
]


def render_report(report: DimensionReport, fmt: str = "json") -> str:
    """Render a report as a JSON document or a CSV table (CSV drops spectra)."""
    if fmt == "json":
        return json.dumps(_report_to_dict(report), indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_CSV_COLUMNS)
        for s in report.summaries:
            writer.writerow(
                [
                    s.layer_name,
                    s.cluster_size,
                    repr(s.theta),
                    len(s.map_indices),
                    ";".join(str(i) for i in s.map_indices),
                    ";".join(str(d) for d in s.per_map_dimensions),
                    s.estimated,
                    "" if s.concatenated is None else s.concatenated,
                    "" if s.original is None else s.original,
                ]
            )
        return buf.getvalue()
    raise ValueError(f"unknown report format {fmt!r} (use 'json' or 'csv')")


def write_report(report, fmt: str = "json", path=None) -> None:
    """Write summaries (a DimensionReport or a list of DimensionSummary) to ``path``."""
    if not isinstance(report, DimensionReport):
        report = DimensionReport(summaries=tuple(report))
    if path is None:
        raise ValueError("write_report needs a destination path")
    Path(path).write_text(render_report(report, fmt), encoding="utf-8")


def parse_report(text: str) -> DimensionReport:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise FormatError(f"report is not valid JSON: {err}") from err
    if doc.get("format") != REPORT_FORMAT:
        raise FormatError(f"not a report document (format={doc.get('format')!r})")
    if doc.get("version") != REPORT_VERSION:
        raise VersionMismatchError(f"unsupported report version {doc.get('version')!r}")
    summaries = []
    log_spectra: dict[str, dict[str, list[float]]] = {}
    for row in doc.get("layers", []):
        summaries.append(
            DimensionSummary(
                layer_name=row["layer"],
                map_indices=tuple(int(i) for i in row["map_indices"]),
                per_map_dimensions=tuple(int(d) for d in row["per_map_dimensions"]),
                estimated=int(row["estimated"]),
                concatenated=None if row["concatenated"] is None else int(row["concatenated"]),
                original=None if row["original"] is None else int(row["original"]),
                theta=float(row["theta"]),
                cluster_size=int(row["cluster_size"]),
            )
        )
        if row.get("log_spectra"):
            log_spectra[row["layer"]] = {
                label: [float(v) for v in values]
                for label, values in row["log_spectra"].items()
            }
    return DimensionReport(summaries=tuple(summaries), log_spectra=log_spectra)


def read_report(path) -> DimensionReport:
    """Parse a JSON report; CSV reports are write-only renderings."""
    return parse_report(Path(path).read_text(encoding="utf-8"))


def _report_to_dict(report: DimensionReport) -> dict:
    layers = []
    for s in report.summaries:
        row = {
            "layer": s.layer_name,
            "cluster_size": s.cluster_size,
            "theta": s.theta,
            "map_indices": list(s.map_indices),
            "per_map_dimensions": list(s.per_map_dimensions),
            "estimated": s.estimated,
            "concatenated": s.concatenated,
            "original": s.original,
        }
        spectra = report.log_spectra.get(s.layer_name)
        if spectra:
            row["log_spectra"] = {label: list(values) for label, values in spectra.items()}
        layers.append(row)
    return {"format": REPORT_FORMAT, "version": REPORT_VERSION, "layers": layers}


# ---------------------------------------------------------------------------
# Run manifests


@dataclass(frozen=True)
class RunManifest:
    """What produced a set of activation files, with enough detail to redo it.

    ``activations`` pairs layer names with file paths relative to the
    manifest's directory.  ``augmentation`` carries the full augmentation
    config including its seed; it is None when the producer did not know
    it (e.g. images supplied from elsewhere).
    """

    network: str
    augmentation: dict | None
    cluster_size: int
    confidence_threshold: float
    class_index: int
    activations: tuple[tuple[str, str], ...]
    excluded_indices: tuple[int, ...] = ()
    preprocessing: dict | None = None


def write_manifest(manifest: RunManifest, path) -> None:
    doc = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "network": manifest.network,
        "augmentation": manifest.augmentation,
        "cluster_size": manifest.cluster_size,
        "confidence_threshold": manifest.confidence_threshold,
        "class_index": manifest.class_index,
        "activations": [
            {"layer": layer, "path": rel} for layer, rel in manifest.activations
        ],
        "excluded_indices": list(manifest.excluded_indices),
        "preprocessing": manifest.preprocessing,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_manifest(path, *, validate_files: bool = True) -> RunManifest:
    """Load a manifest; by default verify every referenced file exists and parses."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise FormatError(f"manifest is not valid JSON: {err}") from err
    if doc.get("format") != MANIFEST_FORMAT:
        raise FormatError(f"not a manifest document (format={doc.get('format')!r})")
    if doc.get("version") != MANIFEST_VERSION:
        raise VersionMismatchError(f"unsupported manifest version {doc.get('version')!r}")
    entries = tuple(
        (str(e["layer"]), str(e["path"])) for e in doc.get("activations", [])
    )
    manifest = RunManifest(
        network=str(doc.get("network", "")),
        augmentation=doc.get("augmentation"),
        cluster_size=int(doc["cluster_size"]),
        confidence_threshold=float(doc["confidence_threshold"]),
        class_index=int(doc["class_index"]),
        activations=entries,
        excluded_indices=tuple(int(i) for i in doc.get("excluded_indices", [])),
        preprocessing=doc.get("preprocessing"),
    )
    if validate_files:
        base = path.parent
        for layer, rel in manifest.activations:
            file_path = base / rel
            if not file_path.is_file():
                raise FormatError(f"manifest references missing file {rel!r}")
            name, _, _ = peek_activations(file_path)
            if name != layer:
                raise FormatError(
                    f"file {rel!r} stores layer {name!r}, manifest says {layer!r}"
                )
    return manifest


def manifest_activation_paths(manifest: RunManifest, manifest_path) -> list[Path]:
    """Absolute paths of the manifest's activation files, in manifest order."""
    base = Path(manifest_path).parent
    return [base / rel for _, rel in manifest.activations]
