"""Intertwined scan mixing.

Two scans are partitioned into the same m areas; the first output keeps
scan 1's points in odd-indexed areas and scan 2's points in even-indexed
areas, the second output is the complement. Every input point appears in
exactly one output, so the pair of outputs conserves the pair of inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud, subset
from .partition import (
    KIND_INCLINATION,
    PartitionSpec,
    assign_areas,
    partition_spec,
    sample_num_areas,
)
from .sensor import SensorConfig

ORDER_ODD_EVEN = "odd_even"
ORDER_REVERSED = "reversed"
ORDER_SHUFFLED = "shuffled"
ORDERS = (ORDER_ODD_EVEN, ORDER_REVERSED, ORDER_SHUFFLED)

FROM_FIRST = 0
FROM_SECOND = 1


@dataclass(frozen=True)
class Provenance:
    """Source tag (FROM_FIRST/FROM_SECOND) and original index per mixed point."""

    source: np.ndarray
    index: np.ndarray


@dataclass(frozen=True)
class MixResult:
    mixed_a: PointCloud
    mixed_b: PointCloud
    provenance_a: Provenance
    provenance_b: Provenance


def _effective_areas(areas: np.ndarray, m: int, order: str, shuffle_seed) -> np.ndarray:
    if order == ORDER_ODD_EVEN:
        return areas
    if order == ORDER_REVERSED:
        return (m + 1 - areas).astype(np.int32)
    if order == ORDER_SHUFFLED:
        if shuffle_seed is None:
            raise ValueError("shuffled order needs a shuffle_seed")
        perm = np.random.default_rng(shuffle_seed).permutation(m) + 1
        return perm[areas - 1].astype(np.int32)
    raise ValueError(f"unknown mix order {order!r}")


def _gather(x1: PointCloud, x2: PointCloud, take1, take2, e1, e2) -> tuple[PointCloud, Provenance]:
    # Deterministic output order: (area index, source cloud, original index).
    area = np.concatenate([e1[take1], e2[take2]])
    source = np.concatenate(
        [np.full(take1.size, FROM_FIRST, np.int8), np.full(take2.size, FROM_SECOND, np.int8)]
    )
    index = np.concatenate([take1, take2])
    order = np.lexsort((index, source, area))
    source, index = source[order], index[order]
    part1 = subset(x1, index[source == FROM_FIRST])
    part2 = subset(x2, index[source == FROM_SECOND])
    coords = np.empty((index.size, 3), np.float64)
    intens = np.empty(index.size, np.float64)
    coords[source == FROM_FIRST] = part1.coords
    coords[source == FROM_SECOND] = part2.coords
    intens[source == FROM_FIRST] = part1.intensity
    intens[source == FROM_SECOND] = part2.intensity
    labels = None
    if x1.has_labels:
        labels = np.empty(index.size, np.int32)
        labels[source == FROM_FIRST] = part1.labels
        labels[source == FROM_SECOND] = part2.labels
    return PointCloud(coords, intens, labels), Provenance(source, index)


def mix_scans(
    x1: PointCloud,
    x2: PointCloud,
    spec: PartitionSpec,
    order: str = ORDER_ODD_EVEN,
    shuffle_seed: int | None = None,
) -> MixResult:
    """Interleave two scans area by area.

    Both scans are partitioned with the same spec. The first output unions
    x1's odd-indexed areas with x2's even-indexed ones; the second is the
    complement. `reversed` relabels area j as m+1-j before interleaving and
    `shuffled` applies a seeded permutation to the area indices; points keep
    their positions in all orders, only the source interleaving changes.
    """
    if x1.has_labels != x2.has_labels:
        raise ValueError("cannot mix a labeled scan with an unlabeled one")
    a1 = assign_areas(x1, spec).area_of
    a2 = assign_areas(x2, spec).area_of
    e1 = _effective_areas(a1, spec.m, order, shuffle_seed)
    e2 = _effective_areas(a2, spec.m, order, shuffle_seed)
    odd1, odd2 = (e1 % 2 == 1), (e2 % 2 == 1)
    idx1, idx2 = np.arange(x1.n, dtype=np.int64), np.arange(x2.n, dtype=np.int64)
    mixed_a, prov_a = _gather(x1, x2, idx1[odd1], idx2[~odd2], e1, e2)
    mixed_b, prov_b = _gather(x1, x2, idx1[~odd1], idx2[odd2], e1, e2)
    return MixResult(mixed_a, mixed_b, prov_a, prov_b)


def mixed_labels(result: MixResult, labels_1: np.ndarray, labels_2: np.ndarray):
    """Transport per-point labels through an existing mix, area for area.

    This is how label mixing stays aligned with a data mixing performed
    earlier (before pseudo-labels existed): the provenance recorded by
    mix_scans replays the identical interleaving on the label arrays.
    """
    labels_1 = np.asarray(labels_1, np.int32)
    labels_2 = np.asarray(labels_2, np.int32)
    out = []
    for prov in (result.provenance_a, result.provenance_b):
        lab = np.empty(prov.index.size, np.int32)
        first = prov.source == FROM_FIRST
        lab[first] = labels_1[prov.index[first]]
        lab[~first] = labels_2[prov.index[~first]]
        out.append(lab)
    return out[0], out[1]


def mix_pair_for_training(
    labeled: PointCloud,
    pseudo_labeled: PointCloud,
    config: SensorConfig,
    rng: np.random.Generator,
    m_lo: int = 2,
    m_hi: int = 6,
) -> MixResult:
    """Blend a ground-truth scan with a pseudo-labeled scan for training.

    The area count is drawn uniformly from [m_lo, m_hi]; inclination
    boundaries come from the sensor field of view, not per-scan extrema.
    Labels ride with their points.
    """
    if not (labeled.has_labels and pseudo_labeled.has_labels):
        raise ValueError("both scans must carry labels (ground truth or pseudo)")
    m = sample_num_areas(rng, m_lo, m_hi)
    spec = partition_spec(KIND_INCLINATION, m, config.incl_lo, config.incl_up)
    return mix_scans(labeled, pseudo_labeled, spec)


def drop_even_areas(cloud: PointCloud, spec: PartitionSpec) -> PointCloud:
    """Keep only odd-indexed areas (the degraded no-filling ablation)."""
    areas = assign_areas(cloud, spec).area_of
    keep = np.nonzero(areas % 2 == 1)[0]
    return subset(cloud, keep)
