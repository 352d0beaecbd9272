import numpy as np
import pytest

from scanmix import (
    FROM_FIRST,
    FROM_SECOND,
    KIND_INCLINATION,
    ORDER_REVERSED,
    ORDER_SHUFFLED,
    PointCloud,
    SensorConfig,
    assign_areas,
    attach_labels,
    drop_even_areas,
    inclination,
    mix_pair_for_training,
    mix_scans,
    mixed_labels,
    partition_spec,
    strip_labels,
)

from conftest import random_cloud


def point_multiset(cloud):
    cols = [cloud.coords, cloud.intensity[:, None]]
    if cloud.has_labels:
        cols.append(cloud.labels[:, None].astype(np.float32))
    rows = np.concatenate(cols, axis=1)
    return sorted(map(tuple, rows.tolist()))


def spec_full_sky(m, seed=0, kind=KIND_INCLINATION):
    lo, hi = {KIND_INCLINATION: (-90.0, 90.0)}.get(kind, (0.0, 60.0))
    return partition_spec(kind, m, lo, hi, seed)


class TestMixAlgebra:
    def test_single_area_is_identity(self, rng):
        x1, x2 = random_cloud(rng, 40, True), random_cloud(rng, 50, True)
        res = mix_scans(x1, x2, spec_full_sky(1))
        assert point_multiset(res.mixed_a) == point_multiset(x1)
        assert point_multiset(res.mixed_b) == point_multiset(x2)
        np.testing.assert_array_equal(res.mixed_a.coords, x1.coords)

    def test_two_area_expansion(self):
        """m=2: first output takes x1's low half and x2's high half."""
        low = [1.0, 0.0, -1.0]   # inclination -45
        high = [1.0, 0.0, 1.0]   # inclination +45
        mk = lambda pts, lab: attach_labels(
            PointCloud(np.array(pts, "f4"), np.zeros(len(pts), "f4")), lab
        )
        x1 = mk([low, high], [1, 2])
        x2 = mk([low, high], [3, 4])
        res = mix_scans(x1, x2, spec_full_sky(2))
        np.testing.assert_array_equal(res.mixed_a.labels, [1, 4])
        np.testing.assert_array_equal(res.mixed_b.labels, [3, 2])

    def test_conservation_and_purity(self, rng):
        spec = spec_full_sky(5)
        for _ in range(30):
            x1 = random_cloud(rng, int(rng.integers(1, 300)), True)
            x2 = random_cloud(rng, int(rng.integers(1, 300)), True)
            res = mix_scans(x1, x2, spec)
            both = point_multiset(res.mixed_a) + point_multiset(res.mixed_b)
            assert sorted(both) == sorted(point_multiset(x1) + point_multiset(x2))
            for mixed, prov, first_src in (
                (res.mixed_a, res.provenance_a, FROM_FIRST),
                (res.mixed_b, res.provenance_b, FROM_SECOND),
            ):
                areas = assign_areas(mixed, spec).area_of
                odd = areas % 2 == 1
                expected = np.where(odd, first_src, 1 - first_src)
                np.testing.assert_array_equal(prov.source, expected)

    def test_involution(self, rng):
        """Mixing the mixed pair with the same spec recovers the originals."""
        for _ in range(20):
            m = int(rng.integers(1, 7))
            spec = spec_full_sky(m)
            x1 = random_cloud(rng, int(rng.integers(1, 200)), True)
            x2 = random_cloud(rng, int(rng.integers(1, 200)), True)
            once = mix_scans(x1, x2, spec)
            twice = mix_scans(once.mixed_a, once.mixed_b, spec)
            assert point_multiset(twice.mixed_a) == point_multiset(x1)
            assert point_multiset(twice.mixed_b) == point_multiset(x2)

    def test_mix_commutes_with_yaw_rotation(self, rng):
        """Areas depend only on inclination, so a rigid yaw of both inputs
        rotates the mixed outputs and changes nothing else."""
        x1, x2 = random_cloud(rng, 100, True), random_cloud(rng, 120, True)
        spec = spec_full_sky(4)
        theta = np.radians(37.0)
        c, s = np.cos(theta), np.sin(theta)
        rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], np.float32)

        def yawed(cloud):
            return attach_labels(
                PointCloud((cloud.coords @ rot.T).astype(np.float32), cloud.intensity),
                cloud.labels,
            )

        plain = mix_scans(x1, x2, spec)
        rotated = mix_scans(yawed(x1), yawed(x2), spec)
        np.testing.assert_array_equal(plain.provenance_a.source, rotated.provenance_a.source)
        np.testing.assert_array_equal(plain.provenance_a.index, rotated.provenance_a.index)
        np.testing.assert_allclose(
            rotated.mixed_a.coords, (plain.mixed_a.coords @ rot.T), atol=1e-5
        )

    def test_label_presence_mismatch_rejected(self, rng):
        with pytest.raises(ValueError):
            mix_scans(random_cloud(rng, 5, True), random_cloud(rng, 5, False), spec_full_sky(2))


class TestOrders:
    def test_reversed_relabeling(self, rng):
        """Relabeling j -> m+1-j flips the parity roles when m is even."""
        x1, x2 = random_cloud(rng, 200, True), random_cloud(rng, 200, True)
        spec = spec_full_sky(4)
        fwd = mix_scans(x1, x2, spec)
        rev = mix_scans(x1, x2, spec, order=ORDER_REVERSED)
        assert point_multiset(rev.mixed_a) == point_multiset(fwd.mixed_b)
        assert point_multiset(rev.mixed_b) == point_multiset(fwd.mixed_a)

    def test_shuffled_is_seeded_and_conservative(self, rng):
        x1, x2 = random_cloud(rng, 150, True), random_cloud(rng, 150, True)
        spec = spec_full_sky(5)
        a = mix_scans(x1, x2, spec, order=ORDER_SHUFFLED, shuffle_seed=11)
        b = mix_scans(x1, x2, spec, order=ORDER_SHUFFLED, shuffle_seed=11)
        np.testing.assert_array_equal(a.mixed_a.coords, b.mixed_a.coords)
        both = point_multiset(a.mixed_a) + point_multiset(a.mixed_b)
        assert sorted(both) == sorted(point_multiset(x1) + point_multiset(x2))
        with pytest.raises(ValueError):
            mix_scans(x1, x2, spec, order=ORDER_SHUFFLED)


class TestTrainingPair:
    def test_labels_travel_with_points(self, rng):
        """Provenance audit: every mixed point keeps its source label."""
        config = SensorConfig(8, 10.0, 30.0, 32, 50.0)
        for _ in range(20):
            x1 = random_cloud(rng, 80, True)
            x2 = random_cloud(rng, 90, True)
            res = mix_pair_for_training(x1, x2, config, rng)
            for mixed, prov in ((res.mixed_a, res.provenance_a), (res.mixed_b, res.provenance_b)):
                src_labels = np.where(
                    prov.source == FROM_FIRST,
                    x1.labels[np.minimum(prov.index, x1.n - 1)],
                    x2.labels[np.minimum(prov.index, x2.n - 1)],
                )
                np.testing.assert_array_equal(mixed.labels, src_labels)

    def test_all_ignored_pseudo_labels_transport(self, rng):
        config = SensorConfig(8, 10.0, 30.0, 32, 50.0)
        x1 = random_cloud(rng, 60, True)
        x2 = random_cloud(rng, 60, False)
        pseudo = np.zeros(60, np.int32)  # everything ignored
        res = mix_scans(strip_labels(x1), x2, spec_full_sky(3))
        ya, yb = mixed_labels(res, x1.labels, pseudo)
        from_second_a = res.provenance_a.source == FROM_SECOND
        assert np.all(ya[from_second_a] == 0)
        np.testing.assert_array_equal(
            ya[~from_second_a], x1.labels[res.provenance_a.index[~from_second_a]]
        )
        assert np.all(yb[res.provenance_b.source == FROM_SECOND] == 0)

    def test_swapping_arguments_swaps_roles(self, rng):
        # mix(x2, x1).mixed_a unions x2's odd areas with x1's even areas,
        # which is exactly mix(x1, x2).mixed_b.
        x1, x2 = random_cloud(rng, 70, True), random_cloud(rng, 80, True)
        spec = spec_full_sky(3)
        ab = mix_scans(x1, x2, spec)
        ba = mix_scans(x2, x1, spec)
        assert point_multiset(ba.mixed_a) == point_multiset(ab.mixed_b)
        assert point_multiset(ba.mixed_b) == point_multiset(ab.mixed_a)

    def test_requires_labels(self, rng):
        config = SensorConfig(8, 10.0, 30.0, 32, 50.0)
        with pytest.raises(ValueError):
            mix_pair_for_training(
                random_cloud(rng, 5, False), random_cloud(rng, 5, True), config, rng
            )


def test_drop_even_areas(rng):
    cloud = random_cloud(rng, 300, True)
    spec = spec_full_sky(4)
    kept = drop_even_areas(cloud, spec)
    areas = assign_areas(cloud, spec).area_of
    assert kept.n == int((areas % 2 == 1).sum())
    np.testing.assert_array_equal(
        kept.coords, cloud.coords[areas % 2 == 1]
    )
