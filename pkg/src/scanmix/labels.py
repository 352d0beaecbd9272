"""Label taxonomy: raw-id mapping, the ignored class, and display colors."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

# Fixed display palette indexed by class id (cycled when K exceeds it).
PALETTE: tuple[tuple[int, int, int], ...] = (
    (0, 0, 0),        # conventionally the ignored class
    (128, 128, 128),
    (70, 130, 180),
    (230, 150, 60),
    (120, 70, 20),
    (60, 170, 70),
    (200, 60, 60),
    (200, 200, 60),
    (150, 60, 180),
    (60, 200, 200),
    (250, 120, 160),
    (90, 90, 200),
    (170, 120, 90),
    (120, 200, 120),
    (220, 180, 120),
    (100, 100, 60),
)


@dataclass(frozen=True)
class LabelMap:
    """Total mapping from raw file ids to compact class ids.

    Raw ids not present in `raw_to_id` route to `ignored_id` (never a crash).
    `k` is the number of class ids, ignored included; every id < k.
    """

    raw_to_id: dict[int, int]
    names: dict[int, str]
    ignored_id: int
    k: int = field(init=False)

    def __post_init__(self):
        ids = set(self.raw_to_id.values()) | {self.ignored_id}
        if any(i < 0 for i in ids):
            raise ValueError("class ids must be non-negative")
        object.__setattr__(self, "k", max(ids) + 1)

    def map_raw(self, raw: np.ndarray) -> np.ndarray:
        """Vectorized raw-id -> class-id mapping; unmapped ids go to ignored."""
        raw = np.asarray(raw)
        lut_size = int(raw.max()) + 1 if raw.size else 1
        lut = np.full(max(lut_size, 1), self.ignored_id, np.int32)
        unmapped = set(np.unique(raw).tolist())
        for r, cid in self.raw_to_id.items():
            if r < lut.size:
                lut[r] = cid
            unmapped.discard(r)
        if unmapped:
            log.warning("unmapped raw label ids %s routed to ignored", sorted(unmapped))
        return lut[raw]

    def name(self, class_id: int) -> str:
        return self.names.get(class_id, f"class_{class_id}")

    def color(self, class_id: int) -> tuple[int, int, int]:
        if class_id == self.ignored_id:
            return PALETTE[0]
        return PALETTE[1 + (class_id - 1) % (len(PALETTE) - 1)]


def label_map_from_json(text: str) -> LabelMap:
    """Parse {"classes":[{"raw":..,"id":..,"name":..}...], "ignored_id":..}."""
    doc = json.loads(text)
    raw_to_id = {}
    names = {}
    for entry in doc["classes"]:
        raw_to_id[int(entry["raw"])] = int(entry["id"])
        names[int(entry["id"])] = str(entry["name"])
    return LabelMap(raw_to_id, names, int(doc["ignored_id"]))


def label_map_to_json(label_map: LabelMap) -> str:
    classes = [
        {"raw": raw, "id": cid, "name": label_map.name(cid)}
        for raw, cid in sorted(label_map.raw_to_id.items())
    ]
    return json.dumps({"classes": classes, "ignored_id": label_map.ignored_id}, indent=2)
