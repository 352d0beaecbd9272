"""Sensor geometry: beam count, vertical field of view, resolution, range."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SensorConfig:
    """Scanner geometry that fixes projections and partition bounds.

    incl_up / incl_down are the vertical field-of-view edges in degrees;
    incl_down is stored as a positive magnitude (a sensor looking from
    +10 deg down to -30 deg has incl_up=10, incl_down=30).
    """

    num_beams: int
    incl_up: float
    incl_down: float
    width: int
    max_range: float

    def __post_init__(self):
        if self.num_beams < 1:
            raise ValueError("num_beams must be >= 1")
        if self.width < 1:
            raise ValueError("width must be >= 1")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")
        if self.incl_down < 0:
            raise ValueError("incl_down is a positive magnitude")
        if self.incl_up <= -self.incl_down:
            raise ValueError("vertical field of view is empty")

    @property
    def fov(self) -> float:
        """Total inclination span in degrees."""
        return self.incl_up + self.incl_down

    @property
    def incl_lo(self) -> float:
        """Lowest inclination as a signed angle."""
        return -self.incl_down


# Common spinning-scanner geometries, by beam count.
PRESETS: dict[str, SensorConfig] = {
    "64beam": SensorConfig(num_beams=64, incl_up=3.0, incl_down=25.0, width=2048, max_range=80.0),
    "32beam": SensorConfig(num_beams=32, incl_up=10.0, incl_down=30.0, width=1920, max_range=70.0),
    "desk16": SensorConfig(num_beams=16, incl_up=10.0, incl_down=30.0, width=128, max_range=50.0),
}


def sensor_from_dict(doc: dict) -> SensorConfig:
    return SensorConfig(
        num_beams=int(doc["num_beams"]),
        incl_up=float(doc["incl_up"]),
        incl_down=float(doc["incl_down"]),
        width=int(doc["width"]),
        max_range=float(doc["max_range"]),
    )


def sensor_to_dict(config: SensorConfig) -> dict:
    return {
        "num_beams": config.num_beams,
        "incl_up": config.incl_up,
        "incl_down": config.incl_down,
        "width": config.width,
        "max_range": config.max_range,
    }
