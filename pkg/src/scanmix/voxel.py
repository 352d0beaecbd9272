"""Cylindrical voxelization with majority-vote labels.

Points are binned in (rho, azimuth, z) coordinates; out-of-bounds points
clamp into edge voxels so no point is lost. Each voxel's label is the
majority class of its members, ties broken by the smallest class id; the
ignored class only wins when it is the sole label present.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .partition import azimuth, radius


@dataclass(frozen=True)
class CylinderBounds:
    rho: tuple[float, float]
    az: tuple[float, float] = (-180.0, 180.0)
    z: tuple[float, float] = (-3.0, 5.0)

    def __post_init__(self):
        for lo, hi in (self.rho, self.az, self.z):
            if not lo < hi:
                raise ValueError(f"degenerate bound [{lo}, {hi}]")


@dataclass(frozen=True)
class VoxelGrid:
    labels: np.ndarray  # (n_rho, n_az, n_z) int32
    counts: np.ndarray  # (n_rho, n_az, n_z) int64
    bounds: CylinderBounds
    ignored_id: int

    @property
    def resolution(self) -> tuple[int, int, int]:
        return self.labels.shape


def _axis_bins(values: np.ndarray, lo: float, hi: float, n: int) -> np.ndarray:
    idx = np.floor((values - lo) / (hi - lo) * n).astype(np.int64)
    return np.clip(idx, 0, n - 1)


def cylindrical_voxelize(
    cloud: PointCloud,
    resolution: tuple[int, int, int],
    bounds: CylinderBounds,
    ignored_id: int = 0,
) -> VoxelGrid:
    n_rho, n_az, n_z = resolution
    if min(resolution) < 1:
        raise ValueError("resolution must be positive")
    labels_in = cloud.labels if cloud.has_labels else np.full(cloud.n, ignored_id, np.int32)
    k = int(max(labels_in.max() + 1, ignored_id + 1)) if cloud.n else ignored_id + 1

    i_rho = _axis_bins(radius(cloud.coords), *bounds.rho, n_rho) if cloud.n else np.zeros(0, np.int64)
    i_az = _axis_bins(azimuth(cloud.coords), *bounds.az, n_az) if cloud.n else np.zeros(0, np.int64)
    i_z = _axis_bins(cloud.coords[:, 2].astype(np.float64), *bounds.z, n_z) if cloud.n else np.zeros(0, np.int64)
    flat = (i_rho * n_az + i_az) * n_z + i_z

    n_vox = n_rho * n_az * n_z
    counts = np.bincount(flat, minlength=n_vox).astype(np.int64)
    per_class = np.bincount(flat * k + labels_in, minlength=n_vox * k).reshape(n_vox, k)

    votable = per_class.copy()
    votable[:, ignored_id] = 0
    winner = np.argmax(votable, axis=1).astype(np.int32)  # first max = smallest id
    only_ignored = votable.sum(axis=1) == 0
    winner[only_ignored] = ignored_id
    winner[counts == 0] = ignored_id

    labels = winner.reshape(resolution)
    counts = counts.reshape(resolution)
    labels.setflags(write=False)
    counts.setflags(write=False)
    return VoxelGrid(labels, counts, bounds, ignored_id)


def voxel_csv(grid: VoxelGrid) -> str:
    """CSV of occupied voxels: i_rho, i_az, i_z, label, count."""
    lines = ["i_rho,i_az,i_z,label,count"]
    occupied = np.argwhere(grid.counts > 0)
    for i_rho, i_az, i_z in occupied:
        lines.append(
            f"{i_rho},{i_az},{i_z},{grid.labels[i_rho, i_az, i_z]},{grid.counts[i_rho, i_az, i_z]}"
        )
    return "\n".join(lines) + "\n"
