import numpy as np
import pytest

from scanmix import CylinderBounds, PointCloud, attach_labels, cylindrical_voxelize, voxel_csv

from conftest import random_cloud


def reference_voxelize(cloud, resolution, bounds, ignored_id=0):
    """Scalar per-point voxelizer with explicit majority voting."""
    n_rho, n_az, n_z = resolution

    def bin_of(val, lo, hi, n):
        i = int(np.floor((val - lo) / (hi - lo) * n))
        return min(max(i, 0), n - 1)

    members = {}
    for i in range(cloud.n):
        x, y, z = cloud.coords[i].astype(np.float64)
        rho = np.hypot(x, y)
        az = np.degrees(np.arctan2(y, x))
        if az >= 180.0:
            az = -180.0
        key = (
            bin_of(rho, *bounds.rho, n_rho),
            bin_of(az, *bounds.az, n_az),
            bin_of(z, *bounds.z, n_z),
        )
        members.setdefault(key, []).append(int(cloud.labels[i]) if cloud.has_labels else ignored_id)
    labels = np.full(resolution, ignored_id, np.int32)
    counts = np.zeros(resolution, np.int64)
    for key, labs in members.items():
        counts[key] = len(labs)
        votable = [l for l in labs if l != ignored_id]
        if votable:
            uniq, cnt = np.unique(votable, return_counts=True)
            labels[key] = uniq[np.argmax(cnt)]  # ties: smallest id (unique is sorted)
        else:
            labels[key] = ignored_id
    return labels, counts


BOUNDS = CylinderBounds(rho=(0.0, 60.0), z=(-40.0, 40.0))


def test_majority_vote():
    coords = np.array([[5, 0, 0]] * 3, "f4")
    cloud = attach_labels(PointCloud(coords, np.zeros(3, "f4")), [2, 2, 7])
    grid = cylindrical_voxelize(cloud, (4, 4, 4), BOUNDS)
    assert grid.labels[grid.counts > 0][0] == 2


def test_tie_breaks_to_smallest_id():
    coords = np.array([[5, 0, 0]] * 2, "f4")
    cloud = attach_labels(PointCloud(coords, np.zeros(2, "f4")), [7, 2])
    grid = cylindrical_voxelize(cloud, (4, 4, 4), BOUNDS)
    assert grid.labels[grid.counts > 0][0] == 2


def test_ignored_excluded_unless_alone():
    coords = np.array([[5, 0, 0]] * 3, "f4")
    mixed = attach_labels(PointCloud(coords, np.zeros(3, "f4")), [0, 0, 4])
    grid = cylindrical_voxelize(mixed, (4, 4, 4), BOUNDS)
    assert grid.labels[grid.counts > 0][0] == 4
    alone = attach_labels(PointCloud(coords, np.zeros(3, "f4")), [0, 0, 0])
    grid = cylindrical_voxelize(alone, (4, 4, 4), BOUNDS)
    assert grid.labels[grid.counts > 0][0] == 0


def test_counts_cover_all_points_with_clamping(rng):
    cloud = random_cloud(rng, 500, labeled=True, span=100.0)  # many out of bounds
    grid = cylindrical_voxelize(cloud, (6, 8, 5), BOUNDS)
    assert grid.counts.sum() == 500


def test_matches_bruteforce_oracle(rng):
    for _ in range(10):
        cloud = random_cloud(rng, int(rng.integers(1, 300)), labeled=True)
        resolution = tuple(int(x) for x in rng.integers(2, 7, 3))
        grid = cylindrical_voxelize(cloud, resolution, BOUNDS)
        ref_labels, ref_counts = reference_voxelize(cloud, resolution, BOUNDS)
        np.testing.assert_array_equal(grid.labels, ref_labels)
        np.testing.assert_array_equal(grid.counts, ref_counts)


def test_permutation_invariance_up_to_tie_rule(rng):
    cloud = random_cloud(rng, 200, labeled=True)
    perm = rng.permutation(200)
    shuffled = attach_labels(
        PointCloud(cloud.coords[perm], cloud.intensity[perm]), cloud.labels[perm]
    )
    a = cylindrical_voxelize(cloud, (5, 5, 5), BOUNDS)
    b = cylindrical_voxelize(shuffled, (5, 5, 5), BOUNDS)
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(a.counts, b.counts)


def test_csv_export(rng):
    cloud = random_cloud(rng, 50, labeled=True)
    grid = cylindrical_voxelize(cloud, (3, 3, 3), BOUNDS)
    text = voxel_csv(grid)
    lines = text.strip().split("\n")
    assert lines[0] == "i_rho,i_az,i_z,label,count"
    assert len(lines) == 1 + int((grid.counts > 0).sum())
    total = sum(int(line.split(",")[4]) for line in lines[1:])
    assert total == 50


def test_validation():
    with pytest.raises(ValueError):
        CylinderBounds(rho=(5.0, 5.0))
    cloud = random_cloud(np.random.default_rng(0), 10, labeled=True)
    with pytest.raises(ValueError):
        cylindrical_voxelize(cloud, (0, 3, 3), BOUNDS)
