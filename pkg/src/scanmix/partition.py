"""Per-point spherical geometry and area-partition schemes.

A partition splits a scan into m areas indexed 1..m. Deterministic kinds
bin a per-point scalar (inclination, azimuth, or planar radius) into
evenly spaced intervals; the random kinds assign areas per point or via
random rectangles in the (azimuth, radius) plane.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud

KIND_INCLINATION = "inclination"
KIND_AZIMUTH = "azimuth"
KIND_RADIUS = "radius"
KIND_RANDOM_POINT = "random_point"
KIND_RANDOM_AREA = "random_area"

KINDS = (KIND_INCLINATION, KIND_AZIMUTH, KIND_RADIUS, KIND_RANDOM_POINT, KIND_RANDOM_AREA)
_BINNED_KINDS = (KIND_INCLINATION, KIND_AZIMUTH, KIND_RADIUS)


def inclination(points) -> np.ndarray:
    """Elevation angle above the sensor's horizontal plane, in degrees.

    Total on finite inputs: a point on the vertical axis maps to +/-90 by
    the sign of z (and the origin itself to 0).
    """
    pts = np.atleast_2d(np.asarray(points, np.float64))
    horiz = np.hypot(pts[:, 0], pts[:, 1])
    out = np.degrees(np.arctan2(pts[:, 2], horiz))
    return out if np.asarray(points).ndim == 2 else float(out[0])


def azimuth(points) -> np.ndarray:
    """Horizontal bearing in degrees, half-open in [-180, 180)."""
    pts = np.atleast_2d(np.asarray(points, np.float64))
    out = np.degrees(np.arctan2(pts[:, 1], pts[:, 0]))
    out[out >= 180.0] = -180.0
    return out if np.asarray(points).ndim == 2 else float(out[0])


def radius(points) -> np.ndarray:
    """Distance to the origin in the X-Y plane, in meters."""
    pts = np.atleast_2d(np.asarray(points, np.float64))
    out = np.hypot(pts[:, 0], pts[:, 1])
    return out if np.asarray(points).ndim == 2 else float(out[0])


def make_boundaries(lo: float, hi: float, m: int) -> np.ndarray:
    """m+1 evenly spaced boundaries over [lo, hi]; endpoints are exact."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    bounds = lo + np.arange(m + 1, dtype=np.float64) * ((hi - lo) / m)
    bounds[0] = lo
    bounds[-1] = hi
    return bounds


@dataclass(frozen=True)
class PartitionSpec:
    """How to split a scan into m areas.

    boundaries carries the m+1 bin edges for the binned kinds; for the
    random kinds it carries the (lo, hi) sampling range (radius range for
    random_area; unused for random_point but kept for serialization).
    """

    kind: str
    m: int
    boundaries: np.ndarray
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown partition kind {self.kind!r}")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        bounds = np.asarray(self.boundaries, np.float64)
        if self.kind in _BINNED_KINDS:
            if bounds.shape != (self.m + 1,):
                raise ValueError(f"need m+1 boundaries, got {bounds.shape}")
            if not np.all(np.diff(bounds) > 0):
                raise ValueError("boundaries must be strictly increasing")
        bounds.setflags(write=False)
        object.__setattr__(self, "boundaries", bounds)

    @property
    def lo(self) -> float:
        return float(self.boundaries[0])

    @property
    def hi(self) -> float:
        return float(self.boundaries[-1])


def partition_spec(kind: str, m: int, lo: float, hi: float, seed: int = 0) -> PartitionSpec:
    """Build a spec from a value range (even boundaries for binned kinds)."""
    if kind in _BINNED_KINDS:
        return PartitionSpec(kind, m, make_boundaries(lo, hi, m), seed)
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    return PartitionSpec(kind, m, np.array([lo, hi], np.float64), seed)


def spec_from_json(text: str) -> PartitionSpec:
    doc = json.loads(text)
    return partition_spec(
        doc["kind"], int(doc["m"]), float(doc["lo"]), float(doc["hi"]), int(doc.get("seed", 0))
    )


def spec_to_json(spec: PartitionSpec) -> str:
    return json.dumps(
        {"kind": spec.kind, "m": spec.m, "lo": spec.lo, "hi": spec.hi, "seed": spec.seed}
    )


@dataclass(frozen=True)
class AreaAssignment:
    """Area index per point, 1..m; every point gets exactly one area."""

    area_of: np.ndarray
    m: int

    def __post_init__(self):
        areas = np.asarray(self.area_of, np.int32)
        if areas.size and (areas.min() < 1 or areas.max() > self.m):
            raise ValueError("area indices must lie in [1, m]")
        areas.setflags(write=False)
        object.__setattr__(self, "area_of", areas)


def _bin_values(values: np.ndarray, boundaries: np.ndarray, m: int) -> np.ndarray:
    # Half-open bins [b_{i-1}, b_i); the top bin also takes its upper edge.
    # Out-of-range values clamp into the edge areas so assignment is total.
    idx = np.searchsorted(boundaries, values, side="right")
    return np.clip(idx, 1, m).astype(np.int32)


def assign_areas(cloud: PointCloud, spec: PartitionSpec) -> AreaAssignment:
    """Assign every point of `cloud` to exactly one area."""
    if spec.kind == KIND_INCLINATION:
        areas = _bin_values(inclination(cloud.coords), spec.boundaries, spec.m)
    elif spec.kind == KIND_AZIMUTH:
        areas = _bin_values(azimuth(cloud.coords), spec.boundaries, spec.m)
    elif spec.kind == KIND_RADIUS:
        areas = _bin_values(radius(cloud.coords), spec.boundaries, spec.m)
    elif spec.kind == KIND_RANDOM_POINT:
        rng = np.random.default_rng(spec.seed)
        areas = rng.integers(1, spec.m + 1, size=cloud.n).astype(np.int32)
    else:  # KIND_RANDOM_AREA
        areas = _assign_random_areas(cloud, spec)
    return AreaAssignment(areas, spec.m)


def _assign_random_areas(cloud: PointCloud, spec: PartitionSpec) -> np.ndarray:
    # m rectangles in the (azimuth, radius) plane; a point takes the area of
    # the lowest-indexed rectangle containing it, or area 1 when in none.
    rng = np.random.default_rng(spec.seed)
    r_lo, r_hi = spec.lo, spec.hi
    regions = []
    for _ in range(spec.m):
        az_c = rng.uniform(-180.0, 180.0)
        az_hw = rng.uniform(15.0, 90.0)
        r_c = rng.uniform(r_lo, r_hi)
        r_hw = rng.uniform(0.1, 0.35) * (r_hi - r_lo)
        regions.append((az_c - az_hw, az_c + az_hw, r_c - r_hw, r_c + r_hw))
    az = azimuth(cloud.coords) if cloud.n else np.zeros(0)
    rad = radius(cloud.coords) if cloud.n else np.zeros(0)
    areas = np.ones(cloud.n, np.int32)
    # Paint from m down to 1 so the lowest index wins on overlap.
    for i in range(spec.m, 0, -1):
        az_lo, az_hi, lo, hi = regions[i - 1]
        inside = (az >= az_lo) & (az <= az_hi) & (rad >= lo) & (rad <= hi)
        areas[inside] = i
    return areas


def sample_num_areas(rng: np.random.Generator, lo: int = 2, hi: int = 6) -> int:
    """Uniform integer area count in [lo, hi] inclusive."""
    if not 1 <= lo <= hi:
        raise ValueError(f"bad area-count range [{lo}, {hi}]")
    return int(rng.integers(lo, hi + 1))
