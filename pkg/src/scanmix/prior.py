"""Empirical spatial-prior analytics.

How much does knowing a point's area tell you about its class? The
conditional entropy H(Y|A) over an area partition measures exactly that;
comparing it across partition schemes quantifies which scheme carves the
scan into low-variation areas. All entropies are in nats.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .cloud import PointCloud, concat, strip_labels, subset
from .partition import AreaAssignment, PartitionSpec, assign_areas


@dataclass(frozen=True)
class AreaClassHistogram:
    """Point counts per (area, class); ignored points are excluded."""

    counts: np.ndarray  # (m, k) int64
    m: int
    k: int

    def __post_init__(self):
        counts = np.asarray(self.counts, np.int64)
        if counts.shape != (self.m, self.k):
            raise ValueError(f"counts must be ({self.m}, {self.k}), got {counts.shape}")
        if (counts < 0).any():
            raise ValueError("counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    def merge(self, other: "AreaClassHistogram") -> "AreaClassHistogram":
        if (self.m, self.k) != (other.m, other.k):
            raise ValueError("histogram shapes differ")
        return AreaClassHistogram(self.counts + other.counts, self.m, self.k)


def accumulate_histogram(
    clouds: Iterable[PointCloud],
    spec: PartitionSpec,
    k: int,
    ignored_id: int = 0,
) -> AreaClassHistogram:
    """Count (area, class) occurrences over a labeled dataset."""
    counts = np.zeros((spec.m, k), np.int64)
    for cloud in clouds:
        if not cloud.has_labels:
            raise ValueError("histogram accumulation needs labeled clouds")
        areas = assign_areas(cloud, spec).area_of
        keep = cloud.labels != ignored_id
        if keep.any():
            flat = (areas[keep].astype(np.int64) - 1) * k + cloud.labels[keep]
            counts += np.bincount(flat, minlength=spec.m * k).reshape(spec.m, k)
    return AreaClassHistogram(counts, spec.m, k)


def _entropy(p: np.ndarray) -> float:
    # 0 * ln 0 == 0 by convention.
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def conditional_entropy(hist: AreaClassHistogram) -> float:
    """H(Y|A) = sum_a p(a) H(Y | A=a), in nats."""
    total = hist.counts.sum()
    if total == 0:
        raise ValueError("empty histogram")
    h = 0.0
    for row in hist.counts:
        n_a = row.sum()
        if n_a == 0:
            continue
        h += (n_a / total) * _entropy(row / n_a)
    return h


def class_entropy(hist: AreaClassHistogram) -> float:
    """Unconditional H(Y) from the histogram's class marginals, in nats."""
    total = hist.counts.sum()
    if total == 0:
        raise ValueError("empty histogram")
    return _entropy(hist.counts.sum(axis=0) / total)


def partition_entropy_report(
    clouds: Sequence[PointCloud],
    specs: Sequence[PartitionSpec],
    k: int,
    ignored_id: int = 0,
) -> list[dict]:
    """One H(Y|A) row per spec, plus the m=1 baseline row H(Y)."""
    rows = []
    for spec in specs:
        hist = accumulate_histogram(clouds, spec, k, ignored_id)
        rows.append(
            {
                "kind": spec.kind,
                "m": spec.m,
                "h_conditional_nats": conditional_entropy(hist),
                "h_class_nats": class_entropy(hist),
            }
        )
    if rows:
        base = rows[0]["h_class_nats"]
        rows.insert(
            0, {"kind": "none", "m": 1, "h_conditional_nats": base, "h_class_nats": base}
        )
    return rows


def marginal_prediction(
    model: Callable[[PointCloud], np.ndarray],
    cloud: PointCloud,
    spec: PartitionSpec,
    fillings: Sequence[PointCloud],
    k_fill: int,
) -> np.ndarray:
    """Brute-force per-point class marginal over outside-area fillings.

    For each area a: keep the cloud's points inside a, substitute each
    filling's points outside a, run the model on every composite, and
    average the predictions for the inside points over fillings. Rows are
    returned in the cloud's original point order. The training pipeline's
    two-prediction shortcut is the 2-filling special case of this oracle.

    `model` maps a cloud to an (N, K) array of per-point distributions.
    """
    if not fillings:
        raise ValueError("need at least one filling")
    fillings = list(fillings)[: max(k_fill, 1)]
    areas = assign_areas(cloud, spec).area_of
    fill_areas = [assign_areas(f, spec).area_of for f in fillings]
    out = None
    for a in range(1, spec.m + 1):
        inside_idx = np.nonzero(areas == a)[0]
        if inside_idx.size == 0:
            continue
        acc = None
        for filling, f_areas in zip(fillings, fill_areas):
            outside_idx = np.nonzero(f_areas != a)[0]
            composite = concat(
                strip_labels(subset(cloud, inside_idx)),
                strip_labels(subset(filling, outside_idx)),
            )
            pred = np.asarray(model(composite), np.float64)
            inside_pred = pred[: inside_idx.size]
            acc = inside_pred if acc is None else acc + inside_pred
        acc /= len(fillings)
        if out is None:
            out = np.zeros((cloud.n, acc.shape[1]), np.float64)
        out[inside_idx] = acc
    if out is None:
        raise ValueError("cloud has no points")
    return out


def marginal_entropy(dist: np.ndarray) -> float:
    """Mean per-point entropy of an (N, K) distribution array, in nats."""
    dist = np.asarray(dist, np.float64)
    safe = np.where(dist > 0, dist, 1.0)
    per_point = -(dist * np.log(safe)).sum(axis=1)
    return float(per_point.mean())
