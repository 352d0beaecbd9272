"""Range-view projection: dense 2D images indexed by (beam row, azimuth column).

Grid coordinates for a point (x, y, z) at 3D range r:

    u = 1/2 * (1 - atan2(y, x) / pi) * w
    v = (1 - (asin(z / r) + fov_down) / fov) * h

with fov = fov_up + fov_down (both magnitudes, degrees). Indices are
floored then clamped. Pixel collisions keep the nearest point (ties by
lower point index); points at the exact origin have no direction and are
dropped into a tally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud, subset
from .sensor import SensorConfig


@dataclass(frozen=True)
class RangeImage:
    """Dense projection of one scan.

    Per-pixel channels: 3D range in meters (-1 where empty), intensity,
    class label (ignored_id where empty or unlabeled), and the index of
    the surviving source point (-1 where empty). The source cloud is kept
    so unprojection returns exact coordinates.
    """

    ranges: np.ndarray
    intensity: np.ndarray
    labels: np.ndarray
    point_index: np.ndarray
    ignored_id: int
    dropped: int
    shadowed: int
    source: PointCloud

    @property
    def h(self) -> int:
        return self.ranges.shape[0]

    @property
    def w(self) -> int:
        return self.ranges.shape[1]

    @property
    def occupied(self) -> int:
        return int((self.point_index >= 0).sum())


def point_pixels(cloud: PointCloud, config: SensorConfig, h: int, w: int):
    """Pixel (row, col) per point plus a validity mask (False at r=0)."""
    xyz = cloud.coords.astype(np.float64)
    r = np.sqrt((xyz**2).sum(axis=1))
    valid = r > 0.0
    safe_r = np.where(valid, r, 1.0)
    az = np.arctan2(xyz[:, 1], xyz[:, 0])
    incl = np.degrees(np.arcsin(np.clip(xyz[:, 2] / safe_r, -1.0, 1.0)))
    u = 0.5 * (1.0 - az / np.pi) * w
    v = (1.0 - (incl + config.incl_down) / config.fov) * h
    cols = np.clip(np.floor(u).astype(np.int64), 0, w - 1)
    rows = np.clip(np.floor(v).astype(np.int64), 0, h - 1)
    return rows, cols, valid, r


def range_project(
    cloud: PointCloud,
    config: SensorConfig,
    h: int | None = None,
    w: int | None = None,
    ignored_id: int = 0,
) -> RangeImage:
    """Project a scan onto an h x w grid (defaults: beam count x width)."""
    h = config.num_beams if h is None else h
    w = config.width if w is None else w
    if h < 1 or w < 1:
        raise ValueError("image dimensions must be >= 1")
    rows, cols, valid, r = point_pixels(cloud, config, h, w)
    dropped = int((~valid).sum())

    ranges = np.full((h, w), -1.0, np.float32)
    intensity = np.zeros((h, w), np.float32)
    labels = np.full((h, w), ignored_id, np.int32)
    point_index = np.full((h, w), -1, np.int64)

    idx = np.nonzero(valid)[0]
    if idx.size:
        flat = rows[idx] * w + cols[idx]
        # Nearest point wins per pixel, ties by lower index: sort candidates
        # by (pixel, range, index) and keep the first of each pixel run.
        order = np.lexsort((idx, r[idx], flat))
        flat_sorted = flat[order]
        first = np.ones(order.size, bool)
        first[1:] = flat_sorted[1:] != flat_sorted[:-1]
        winners = idx[order[first]]
        wflat = flat_sorted[first]
        ranges.reshape(-1)[wflat] = r[winners]
        intensity.reshape(-1)[wflat] = cloud.intensity[winners]
        if cloud.has_labels:
            labels.reshape(-1)[wflat] = cloud.labels[winners]
        point_index.reshape(-1)[wflat] = winners
    occupied = int(first.sum()) if idx.size else 0
    shadowed = idx.size - occupied

    for arr in (ranges, intensity, labels, point_index):
        arr.setflags(write=False)
    return RangeImage(ranges, intensity, labels, point_index, ignored_id, dropped, shadowed, cloud)


def range_unproject(img: RangeImage) -> PointCloud:
    """Recover the collision-surviving subset of the projected cloud, exactly."""
    surviving = np.sort(img.point_index[img.point_index >= 0])
    return subset(img.source, surviving)


def point_labels_from_image(
    cloud: PointCloud, label_image: np.ndarray, config: SensorConfig, ignored_id: int = 0
) -> np.ndarray:
    """Read one label per point from a per-pixel label image."""
    h, w = label_image.shape
    rows, cols, valid, _ = point_pixels(cloud, config, h, w)
    out = np.full(cloud.n, ignored_id, np.int32)
    out[valid] = label_image[rows[valid], cols[valid]]
    return out


def label_image(img: RangeImage, point_labels: np.ndarray, ignored_id: int = 0) -> np.ndarray:
    """Rasterize per-point labels: each pixel takes its surviving point's label."""
    flat = img.point_index
    out = np.full(flat.shape, ignored_id, np.int32)
    occ = flat >= 0
    out[occ] = np.asarray(point_labels)[flat[occ]]
    return out


def range_features(img: RangeImage, config: SensorConfig) -> np.ndarray:
    """Model input channels (3, h, w): scaled range, intensity, occupancy."""
    occ = (img.point_index >= 0).astype(np.float64)
    rng_ch = np.where(occ > 0, img.ranges / config.max_range, 0.0)
    return np.stack([rng_ch, img.intensity.astype(np.float64), occ])
