"""Point-cloud container and structural operations.

A cloud is a fixed-order collection of points: coordinates in meters,
a unitless intensity per point, and optionally one class label per point.
Point order is significant and every operation here is order-stable, so
downstream runs are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _locked(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class PointCloud:
    """Immutable container for one LiDAR scan.

    coords: (N, 3) float64, sensor-frame x/y/z in meters.
    intensity: (N,) float64 in [0, 1].
    labels: optional (N,) int32 class ids.

    Coordinates are kept at full precision in memory; the binary scan
    format is float32, so the file writer (not this container) rounds.
    """

    coords: np.ndarray
    intensity: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        coords = _locked(self.coords, np.float64)
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise ValueError(f"coords must be (N, 3), got {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coords contain non-finite values")
        intensity = _locked(self.intensity, np.float64)
        if intensity.shape != (coords.shape[0],):
            raise ValueError(
                f"intensity length {intensity.shape} does not match {coords.shape[0]} points"
            )
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "intensity", intensity)
        if self.labels is not None:
            labels = _locked(self.labels, np.int32)
            if labels.shape != (coords.shape[0],):
                raise ValueError(
                    f"labels length {labels.shape} does not match {coords.shape[0]} points"
                )
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def has_labels(self) -> bool:
        return self.labels is not None


def empty_cloud(labeled: bool = False) -> PointCloud:
    labels = np.zeros(0, np.int32) if labeled else None
    return PointCloud(np.zeros((0, 3), np.float32), np.zeros(0, np.float32), labels)


def attach_labels(cloud: PointCloud, labels: np.ndarray) -> PointCloud:
    """Return a copy of `cloud` carrying `labels` (length must match)."""
    labels = np.asarray(labels, np.int32)
    if labels.shape != (cloud.n,):
        raise ValueError(f"labels length {labels.shape[0] if labels.ndim else '?'} != {cloud.n}")
    return PointCloud(cloud.coords, cloud.intensity, labels)


def strip_labels(cloud: PointCloud) -> PointCloud:
    return PointCloud(cloud.coords, cloud.intensity, None)


def subset(cloud: PointCloud, indices) -> PointCloud:
    """Select points by index, in the order given.

    Composition law: subset(subset(c, i), j) == subset(c, i[j]).
    Negative indices are rejected so off-by-one bugs fail loudly.
    """
    idx = np.asarray(indices, np.int64)
    if idx.ndim != 1:
        raise ValueError("indices must be one-dimensional")
    if idx.size and (idx.min() < 0 or idx.max() >= cloud.n):
        raise ValueError(f"index out of range for cloud of {cloud.n} points")
    labels = cloud.labels[idx] if cloud.has_labels else None
    return PointCloud(cloud.coords[idx], cloud.intensity[idx], labels)


def concat(a: PointCloud, b: PointCloud) -> PointCloud:
    """Concatenate two clouds, a's points first. Both labeled or neither."""
    if a.has_labels != b.has_labels:
        raise ValueError("cannot concat a labeled cloud with an unlabeled one")
    labels = None
    if a.has_labels:
        labels = np.concatenate([a.labels, b.labels])
    return PointCloud(
        np.concatenate([a.coords, b.coords]),
        np.concatenate([a.intensity, b.intensity]),
        labels,
    )
