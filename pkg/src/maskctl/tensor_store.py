"""Bit-exact I/O for activation tensors, label masks, and dataset manifests.

Tensor container (little-endian):

    magic "FGBG" | version u32=1 | dtype u8=0 (float32) | rank u8 |
    reserved u16=0 | dims: rank x u64 | payload: row-major float32

Label masks are 8-bit single-channel PNGs following the PASCAL convention
(0 = background, 255 = ignore). Manifests are JSON files listing per-image
inputs; see :class:`DatasetManifest`.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

MAGIC = b"FGBG"
FORMAT_VERSION = 1
DTYPE_FLOAT32 = 0
IGNORE_LABEL = 255

_HEADER = struct.Struct("<4sIBBH")


class TensorStoreError(Exception):
    """Base class for tensor/mask/manifest I/O failures."""


class BadMagicError(TensorStoreError):
    """File does not start with the expected container header."""


class DtypeUnsupportedError(TensorStoreError):
    """Container declares a dtype other than float32."""


class TruncatedPayloadError(TensorStoreError):
    """File size does not match the declared dims."""


class NonFiniteValueError(TensorStoreError):
    """Payload contains NaN or Inf."""


class InvalidShapeError(TensorStoreError):
    """Tensor shape is empty or has a zero dimension."""


class IoFailureError(TensorStoreError):
    """Underlying filesystem operation failed."""


class LabelOutOfRangeError(TensorStoreError):
    """Mask pixel is neither a valid class id nor the ignore value."""


class DecodeFailureError(TensorStoreError):
    """Mask file could not be decoded as an 8-bit single-channel image."""


class ManifestError(TensorStoreError):
    """Manifest JSON is malformed or references missing files."""


def _check_shape(shape: tuple[int, ...]) -> None:
    if len(shape) == 0:
        raise InvalidShapeError("rank-0 tensors are not supported")
    if len(shape) > 255:
        raise InvalidShapeError(f"rank {len(shape)} exceeds the container limit of 255")
    if any(d <= 0 for d in shape):
        raise InvalidShapeError(f"all dims must be positive, got {shape}")


def write_tensor(path, t) -> None:
    """Write a float32 tensor so that :func:`read_tensor` round-trips bit-exactly."""
    if np.asarray(t).ndim == 0:
        raise InvalidShapeError("rank-0 tensors are not supported")
    arr = np.ascontiguousarray(t, dtype=np.float32)
    _check_shape(arr.shape)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValueError(f"refusing to write non-finite values to {path}")
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, DTYPE_FLOAT32, arr.ndim, 0)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    payload = arr.tobytes(order="C")
    if not np.little_endian:
        payload = arr.byteswap().tobytes(order="C")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(dims)
            fh.write(payload)
    except OSError as exc:
        raise IoFailureError(f"cannot write tensor to {path}: {exc}") from exc


def read_tensor(path) -> np.ndarray:
    """Read a tensor container; returns a float32 array with the stored dims."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailureError(f"cannot read tensor from {path}: {exc}") from exc

    if len(blob) < _HEADER.size:
        raise BadMagicError(f"{path}: file shorter than the container header")
    magic, version, dtype, rank, _reserved = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise BadMagicError(f"{path}: unsupported container version {version}")
    if dtype != DTYPE_FLOAT32:
        raise DtypeUnsupportedError(f"{path}: dtype code {dtype} not supported")
    if rank == 0:
        raise InvalidShapeError(f"{path}: rank-0 tensor")

    dims_end = _HEADER.size + 8 * rank
    if len(blob) < dims_end:
        raise TruncatedPayloadError(f"{path}: truncated dims block")
    shape = struct.unpack_from(f"<{rank}Q", blob, _HEADER.size)
    _check_shape(shape)

    count = 1
    for d in shape:
        count *= d
    expected = dims_end + 4 * count
    if len(blob) != expected:
        raise TruncatedPayloadError(
            f"{path}: payload is {len(blob) - dims_end} bytes, expected {4 * count}"
        )
    arr = np.frombuffer(blob, dtype="<f4", count=count, offset=dims_end).reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValueError(f"{path}: payload contains NaN or Inf")
    return arr.astype(np.float32, copy=True)


def read_label_mask(path, num_classes: int) -> np.ndarray:
    """Load an 8-bit single-channel PNG as an (H, W) uint8 label array.

    Pixel value 255 maps to IGNORE_LABEL; any other value >= num_classes
    raises LabelOutOfRangeError.
    """
    try:
        with Image.open(path) as img:
            if img.mode not in ("L", "P"):
                raise DecodeFailureError(
                    f"{path}: expected 8-bit single-channel image, got mode {img.mode}"
                )
            labels = np.asarray(img.convert("L") if img.mode == "P" else img, dtype=np.uint8)
    except DecodeFailureError:
        raise
    except Exception as exc:
        raise DecodeFailureError(f"{path}: cannot decode image: {exc}") from exc

    bad = (labels >= num_classes) & (labels != IGNORE_LABEL)
    if np.any(bad):
        value = int(labels[bad][0])
        raise LabelOutOfRangeError(
            f"{path}: pixel value {value} out of range for {num_classes} classes"
        )
    return labels


def write_label_mask(path, labels) -> None:
    """Write an (H, W) uint8 label array as an 8-bit grayscale PNG."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise InvalidShapeError(f"label mask must be 2-D, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise LabelOutOfRangeError("label values must fit in uint8")
    try:
        Image.fromarray(arr.astype(np.uint8), mode="L").save(path, format="PNG")
    except OSError as exc:
        raise IoFailureError(f"cannot write mask to {path}: {exc}") from exc


def write_binary_mask(path, mask) -> None:
    """Write a 0/1 foreground mask as a 0/255 PNG."""
    arr = np.asarray(mask)
    write_label_mask(path, np.where(arr > 0, 255, 0).astype(np.uint8))


def read_binary_mask(path) -> np.ndarray:
    """Read a 0/255 (or 0/1) PNG as a 0/1 foreground mask."""
    try:
        with Image.open(path) as img:
            if img.mode not in ("L", "P", "1"):
                raise DecodeFailureError(
                    f"{path}: expected single-channel mask, got mode {img.mode}"
                )
            arr = np.asarray(img.convert("L"), dtype=np.uint8)
    except DecodeFailureError:
        raise
    except Exception as exc:
        raise DecodeFailureError(f"{path}: cannot decode mask: {exc}") from exc
    return (arr > 0).astype(np.uint8)


@dataclass
class ManifestEntry:
    image_id: str
    image_path: str
    activation_paths: dict[str, str] = field(default_factory=dict)
    score_path: str | None = None
    tags_present: list[int] = field(default_factory=list)
    tags_absent: list[int] = field(default_factory=list)
    ground_truth_path: str | None = None


@dataclass
class DatasetManifest:
    num_classes: int
    entries: list[ManifestEntry]
    root: Path = field(default_factory=Path)

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p

    def ids(self) -> list[str]:
        return [e.image_id for e in self.entries]


def _entry_paths(entry: ManifestEntry):
    yield entry.image_path
    yield from entry.activation_paths.values()
    if entry.score_path:
        yield entry.score_path
    if entry.ground_truth_path:
        yield entry.ground_truth_path


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    """Load and validate a dataset manifest.

    Relative paths are resolved against the manifest's directory. Validates
    unique image ids, tag partitions, and (optionally) file existence.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise IoFailureError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from exc

    if not isinstance(raw, dict) or "entries" not in raw:
        raise ManifestError(f"{path}: manifest must be an object with an 'entries' list")
    num_classes = int(raw.get("num_classes", 21))
    if num_classes < 1:
        raise ManifestError(f"{path}: num_classes must be >= 1")

    entries = []
    seen = set()
    for i, item in enumerate(raw["entries"]):
        try:
            tags = item.get("tags", {})
            entry = ManifestEntry(
                image_id=str(item["image_id"]),
                image_path=str(item["image_path"]),
                activation_paths={str(k): str(v) for k, v in item.get("activation_paths", {}).items()},
                score_path=item.get("score_path"),
                tags_present=[int(k) for k in tags.get("present", [])],
                tags_absent=[int(k) for k in tags.get("absent", [])],
                ground_truth_path=item.get("ground_truth_path"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"{path}: entry {i} is malformed: {exc}") from exc
        if entry.image_id in seen:
            raise ManifestError(f"{path}: duplicate image_id {entry.image_id!r}")
        seen.add(entry.image_id)
        present, absent = set(entry.tags_present), set(entry.tags_absent)
        if present or absent:
            if present & absent:
                raise ManifestError(f"{path}: {entry.image_id}: tags overlap")
            if (present | absent) != set(range(num_classes)):
                raise ManifestError(
                    f"{path}: {entry.image_id}: present+absent tags must cover 0..{num_classes - 1}"
                )
        entries.append(entry)

    manifest = DatasetManifest(num_classes=num_classes, entries=entries, root=path.parent)
    if check_files:
        for entry in entries:
            for rel in _entry_paths(entry):
                p = manifest.resolve(rel)
                if not p.exists():
                    raise ManifestError(f"{path}: {entry.image_id}: missing file {p}")
    return manifest


def save_manifest(manifest: DatasetManifest, path) -> None:
    doc = {
        "num_classes": manifest.num_classes,
        "entries": [
            {
                "image_id": e.image_id,
                "image_path": e.image_path,
                "activation_paths": e.activation_paths,
                **({"score_path": e.score_path} if e.score_path else {}),
                "tags": {"present": e.tags_present, "absent": e.tags_absent},
                **({"ground_truth_path": e.ground_truth_path} if e.ground_truth_path else {}),
            }
            for e in manifest.entries
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
