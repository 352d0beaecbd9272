"""Bit-exact binary codecs for scan and label files.

Scan files are flat little-endian float32 records, 4 floats per point
(x, y, z, intensity); a 5-float variant (fifth field discarded) covers
sensors that append a ring index. Label files are little-endian uint32
records: low 16 bits semantic raw id, high 16 bits instance id (discarded).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .cloud import PointCloud
from .errors import FormatError
from .labels import LabelMap

SCAN_RECORD_FLOATS = 4


def read_scan_bin(data: bytes, floats_per_point: int = SCAN_RECORD_FLOATS) -> PointCloud:
    """Decode a scan payload into an unlabeled cloud, preserving point order."""
    if floats_per_point < 4:
        raise ValueError("a scan record holds at least x, y, z, intensity")
    stride = 4 * floats_per_point
    if len(data) % stride != 0:
        raise FormatError(
            f"scan payload of {len(data)} bytes is not a multiple of the "
            f"{stride}-byte record size"
        )
    flat = np.frombuffer(data, dtype="<f4")
    records = flat.reshape(-1, floats_per_point)
    bad = ~np.isfinite(records[:, :4])
    if bad.any():
        idx = int(np.nonzero(bad.any(axis=1))[0][0])
        raise FormatError(f"non-finite value in record {idx}")
    return PointCloud(records[:, :3], records[:, 3])


def write_scan_bin(cloud: PointCloud) -> bytes:
    """Inverse of read_scan_bin for the 4-float layout.

    Values are rounded to float32 (the record format); clouds that came
    from scan files or float32 sources round-trip bit-exactly.
    """
    records = np.empty((cloud.n, 4), dtype="<f4")
    records[:, :3] = cloud.coords
    records[:, 3] = cloud.intensity
    return records.tobytes()


def read_labels_bin(data: bytes, label_map: LabelMap) -> np.ndarray:
    """Decode a label payload into an array of class ids."""
    if len(data) % 4 != 0:
        raise FormatError(f"label payload of {len(data)} bytes is not a multiple of 4")
    raw = np.frombuffer(data, dtype="<u4")
    semantic = (raw & 0xFFFF).astype(np.int64)
    return label_map.map_raw(semantic).astype(np.int32)


def write_labels_bin(labels: np.ndarray) -> bytes:
    """Encode class ids as uint32 records with zero instance bits.

    read_labels_bin inverts this whenever the label map sends each id to
    itself (true for every map this package writes).
    """
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() > 0xFFFF):
        raise ValueError("class ids must fit in 16 bits")
    return labels.astype("<u4").tobytes()


def load_scan(path: str | Path, floats_per_point: int = SCAN_RECORD_FLOATS) -> PointCloud:
    return read_scan_bin(Path(path).read_bytes(), floats_per_point)


def save_scan(path: str | Path, cloud: PointCloud) -> None:
    Path(path).write_bytes(write_scan_bin(cloud))


def load_labels(path: str | Path, label_map: LabelMap) -> np.ndarray:
    return read_labels_bin(Path(path).read_bytes(), label_map)


def save_labels(path: str | Path, labels: np.ndarray) -> None:
    Path(path).write_bytes(write_labels_bin(labels))
