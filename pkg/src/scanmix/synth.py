"""Ray-cast synthetic scenes with a class layout that depends on range.

Scenes put the road everywhere underfoot, cars in a mid-radius band, and
buildings/trunks/vegetation in a far band, so the class distribution
correlates strongly with beam inclination. Scans come out in the sensor
frame (ray origin at the coordinate origin; the ground sits at
z = -sensor_height), matching how real spinning scanners record points.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .cloud import PointCloud
from .errors import GenerationError
from .labels import LabelMap
from .sensor import SensorConfig

CLASS_ROAD = 1
CLASS_CAR = 2
CLASS_BUILDING = 3
CLASS_TRUNK = 4
CLASS_VEGETATION = 5


def default_label_map() -> LabelMap:
    names = {0: "ignored", 1: "road", 2: "car", 3: "building", 4: "trunk", 5: "vegetation"}
    return LabelMap({i: i for i in range(6)}, names, ignored_id=0)


@dataclass(frozen=True)
class GroundPlane:
    class_id: int = CLASS_ROAD


@dataclass(frozen=True)
class Box:
    center: tuple[float, float, float]
    extent: tuple[float, float, float]  # full sizes along the yawed axes
    yaw: float  # degrees about +z
    class_id: int = CLASS_CAR


@dataclass(frozen=True)
class Wall:
    p1: tuple[float, float]
    p2: tuple[float, float]
    height: float
    class_id: int = CLASS_BUILDING


@dataclass(frozen=True)
class Cylinder:
    center: tuple[float, float]
    radius: float
    height: float
    class_id: int = CLASS_VEGETATION


Primitive = GroundPlane | Box | Wall | Cylinder


@dataclass(frozen=True)
class Scene:
    primitives: tuple
    world_radius: float
    sensor_height: float


@dataclass(frozen=True)
class SceneParams:
    """Counts and placement bands (radii in meters) per primitive class."""

    n_cars: tuple[int, int] = (1, 10)
    n_walls: tuple[int, int] = (4, 20)
    n_vegetation: tuple[int, int] = (4, 24)
    n_trunks: tuple[int, int] = (2, 9)
    car_band: tuple[float, float] = (8.0, 22.0)
    wall_band: tuple[float, float] = (24.0, 42.0)
    vegetation_band: tuple[float, float] = (24.0, 48.0)
    trunk_band: tuple[float, float] = (24.0, 48.0)
    sensor_height: float = 1.8
    world_radius: float = 60.0
    noise_sigma: float = 0.02
    class_intensity: dict = field(default_factory=dict)  # defaults to 0.0 everywhere

    def __post_init__(self):
        for lo, hi in (self.car_band, self.wall_band, self.vegetation_band, self.trunk_band):
            if not 0 < lo < hi:
                raise ValueError(f"degenerate placement band [{lo}, {hi}]")
        if self.car_band[0] < 3.0:
            raise ValueError("car band must start clear of the sensor")
        far_lo = min(self.wall_band[0], self.vegetation_band[0])
        if self.car_band[1] > far_lo:
            raise ValueError("cars are the mid band; walls/vegetation start farther out")
        if self.sensor_height <= 0 or self.world_radius <= 0:
            raise ValueError("sensor_height and world_radius must be positive")


def generate_scene(params: SceneParams, rng: np.random.Generator) -> Scene:
    """Sample a scene honoring the placement bands; deterministic per rng."""
    prims: list[Primitive] = [GroundPlane()]
    car_footprints: list[tuple[float, float, float]] = []
    n_cars = int(rng.integers(params.n_cars[0], params.n_cars[1] + 1))
    for _ in range(n_cars):
        for attempt in range(100):
            r = rng.uniform(*params.car_band)
            theta = rng.uniform(0, 2 * math.pi)
            x, y = r * math.cos(theta), r * math.sin(theta)
            length = rng.uniform(3.2, 5.4)
            width = rng.uniform(1.6, 2.2)
            height = rng.uniform(1.3, 2.0)
            clearance = max(length, width)
            if math.hypot(x, y) < clearance + 1.0:
                continue
            if all(math.hypot(x - cx, y - cy) > clearance + cc for cx, cy, cc in car_footprints):
                prims.append(
                    Box((x, y, height / 2), (length, width, height), rng.uniform(0, 360))
                )
                car_footprints.append((x, y, clearance))
                break
        else:
            raise GenerationError("could not place a car after 100 attempts")
    n_walls = int(rng.integers(params.n_walls[0], params.n_walls[1] + 1))
    for _ in range(n_walls):
        r = rng.uniform(*params.wall_band)
        theta = rng.uniform(0, 2 * math.pi)
        cx, cy = r * math.cos(theta), r * math.sin(theta)
        half = rng.uniform(3.0, 12.0)
        # Mostly tangential so facades face the sensor.
        ang = theta + math.pi / 2 + rng.normal(0.0, 0.25)
        dx, dy = half * math.cos(ang), half * math.sin(ang)
        prims.append(Wall((cx - dx, cy - dy), (cx + dx, cy + dy), rng.uniform(3.0, 8.0)))
    n_veg = int(rng.integers(params.n_vegetation[0], params.n_vegetation[1] + 1))
    for _ in range(n_veg):
        r = rng.uniform(*params.vegetation_band)
        theta = rng.uniform(0, 2 * math.pi)
        prims.append(
            Cylinder(
                (r * math.cos(theta), r * math.sin(theta)),
                rng.uniform(0.8, 3.0),
                rng.uniform(2.5, 7.0),
                CLASS_VEGETATION,
            )
        )
    n_trunks = int(rng.integers(params.n_trunks[0], params.n_trunks[1] + 1))
    for _ in range(n_trunks):
        r = rng.uniform(*params.trunk_band)
        theta = rng.uniform(0, 2 * math.pi)
        prims.append(
            Cylinder(
                (r * math.cos(theta), r * math.sin(theta)),
                rng.uniform(0.12, 0.45),
                rng.uniform(2.0, 4.5),
                CLASS_TRUNK,
            )
        )
    return Scene(tuple(prims), params.world_radius, params.sensor_height)


# --- analytic ray casting ---------------------------------------------------
# All kernels take the world-frame ray origin (3,) and unit directions
# (R, 3), and return hit distances (R,) with +inf where the ray misses.

_EPS = 1e-9


def _hit_ground(origin, dirs):
    dz = dirs[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -origin[2] / dz
    t = np.where((np.abs(dz) > _EPS) & (t > _EPS), t, np.inf)
    return t


def _hit_box(origin, dirs, box: Box):
    yaw = math.radians(box.yaw)
    c, s = math.cos(yaw), math.sin(yaw)
    rot = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
    o = rot @ (origin - np.array(box.center))
    d = dirs @ rot.T
    half = np.array(box.extent) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
    t1 = (-half - o) * inv
    t2 = (half - o) * inv
    # Rays parallel to a slab axis hit only if already inside that slab.
    parallel = np.abs(d) <= _EPS
    inside = np.abs(o) <= half
    lo = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
    hi = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
    tmin = lo.max(axis=1)
    tmax = hi.min(axis=1)
    t = np.where((tmax >= tmin) & (tmin > _EPS), tmin, np.inf)
    return t


def _hit_wall(origin, dirs, wall: Wall):
    p1 = np.array([*wall.p1, 0.0])
    seg = np.array([wall.p2[0] - wall.p1[0], wall.p2[1] - wall.p1[1], 0.0])
    normal = np.array([seg[1], -seg[0], 0.0])
    nlen = np.linalg.norm(normal)
    if nlen < _EPS:
        return np.full(dirs.shape[0], np.inf)
    normal /= nlen
    denom = dirs @ normal
    with np.errstate(divide="ignore", invalid="ignore"):
        t = ((p1 - origin) @ normal) / denom
    hit = origin + t[:, None] * dirs
    along = ((hit - p1) @ seg) / (seg @ seg)
    ok = (
        (np.abs(denom) > _EPS)
        & (t > _EPS)
        & (along >= 0.0)
        & (along <= 1.0)
        & (hit[:, 2] >= 0.0)
        & (hit[:, 2] <= wall.height)
    )
    return np.where(ok, t, np.inf)


def _hit_cylinder(origin, dirs, cyl: Cylinder):
    ox, oy = origin[0] - cyl.center[0], origin[1] - cyl.center[1]
    dx, dy = dirs[:, 0], dirs[:, 1]
    a = dx**2 + dy**2
    b = 2.0 * (ox * dx + oy * dy)
    c = ox**2 + oy**2 - cyl.radius**2
    disc = b**2 - 4.0 * a * c
    sqrt_disc = np.sqrt(np.maximum(disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_near = (-b - sqrt_disc) / (2.0 * a)
        t_far = (-b + sqrt_disc) / (2.0 * a)
    t_side = np.where(t_near > _EPS, t_near, t_far)
    z_side = origin[2] + t_side * dirs[:, 2]
    side_ok = (disc >= 0.0) & (a > _EPS) & (t_side > _EPS)
    side_ok &= (z_side >= 0.0) & (z_side <= cyl.height)
    t_side = np.where(side_ok, t_side, np.inf)
    # Top cap.
    dz = dirs[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_cap = (cyl.height - origin[2]) / dz
    hit_x = origin[0] + t_cap * dx - cyl.center[0]
    hit_y = origin[1] + t_cap * dy - cyl.center[1]
    cap_ok = (np.abs(dz) > _EPS) & (t_cap > _EPS)
    cap_ok &= hit_x**2 + hit_y**2 <= cyl.radius**2
    t_cap = np.where(cap_ok, t_cap, np.inf)
    return np.minimum(t_side, t_cap)


def _intersect(origin, dirs, prim: Primitive):
    if isinstance(prim, GroundPlane):
        return _hit_ground(origin, dirs)
    if isinstance(prim, Box):
        return _hit_box(origin, dirs, prim)
    if isinstance(prim, Wall):
        return _hit_wall(origin, dirs, prim)
    return _hit_cylinder(origin, dirs, prim)


def beam_directions(config: SensorConfig) -> np.ndarray:
    """Unit ray directions (num_beams * width, 3), beam-major order.

    Beam inclinations are evenly spaced across the field of view endpoints
    inclusive; azimuth steps are offset half a step from the -180 seam.
    """
    if config.num_beams > 1:
        incl = np.linspace(config.incl_lo, config.incl_up, config.num_beams)
    else:
        incl = np.array([(config.incl_lo + config.incl_up) / 2.0])
    az = -180.0 + (np.arange(config.width) + 0.5) * (360.0 / config.width)
    incl_r = np.radians(incl)[:, None]
    az_r = np.radians(az)[None, :]
    x = np.cos(incl_r) * np.cos(az_r)
    y = np.cos(incl_r) * np.sin(az_r)
    z = np.broadcast_to(np.sin(incl_r), x.shape)
    return np.stack([x, y, z], axis=-1).reshape(-1, 3)


def simulate_scan(
    scene: Scene,
    config: SensorConfig,
    rng: np.random.Generator,
    noise_sigma: float = 0.02,
    class_intensity: dict | None = None,
) -> PointCloud:
    """Cast every beam/azimuth ray; nearest hit within range makes a point."""
    origin = np.array([0.0, 0.0, scene.sensor_height])
    dirs = beam_directions(config)
    best_t = np.full(dirs.shape[0], np.inf)
    best_class = np.zeros(dirs.shape[0], np.int32)
    for prim in scene.primitives:
        t = _intersect(origin, dirs, prim)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_class = np.where(closer, prim.class_id, best_class)
    hit = best_t <= config.max_range
    t = best_t[hit]
    if noise_sigma > 0:
        t = t + rng.normal(0.0, noise_sigma, t.shape)
    pts_world = origin + t[:, None] * dirs[hit]
    pts_sensor = pts_world - origin  # == t * dir: sensor-frame coordinates
    labels = best_class[hit]
    intensity = np.zeros(labels.shape, np.float64)
    for cid, val in (class_intensity or {}).items():
        intensity[labels == int(cid)] = val
    return PointCloud(pts_sensor, intensity, labels)


@dataclass(frozen=True)
class SynthDataset:
    """Split scans plus the sealed truth for the unlabeled ones.

    `unlabeled_truth` exists only so evaluation tooling can audit pseudo-
    labels; the training path never reads it.
    """

    labeled: list[PointCloud]
    unlabeled: list[PointCloud]
    unlabeled_truth: list[np.ndarray]
    eval: list[PointCloud]
    label_map: LabelMap


def make_dataset(
    n_scans: int,
    params: SceneParams,
    config: SensorConfig,
    labeled_fraction: float,
    seed: int,
    n_eval: int = 0,
) -> SynthDataset:
    """Generate train scans, split labeled/unlabeled, and add eval scans.

    Every scan is generated from a seed derived from (seed, scan index),
    so scan i is the same cloud no matter how many scans are requested or
    in what order they are materialized. The labeled subset is chosen
    uniformly without replacement from a split stream.
    """
    if not 0.0 <= labeled_fraction <= 1.0:
        raise ValueError("labeled_fraction must be in [0, 1]")

    def scan_at(index: int) -> PointCloud:
        scene_rng = np.random.default_rng((seed, 0xC0FFEE, index))
        scene = generate_scene(params, scene_rng)
        return simulate_scan(scene, config, scene_rng, params.noise_sigma, params.class_intensity)

    n_labeled = round(n_scans * labeled_fraction)
    split_rng = np.random.default_rng((seed, 0x5EED))
    labeled_idx = set(split_rng.choice(n_scans, size=n_labeled, replace=False).tolist()) if n_scans else set()

    labeled, unlabeled, truths = [], [], []
    for i in range(n_scans):
        cloud = scan_at(i)
        if i in labeled_idx:
            labeled.append(cloud)
        else:
            truths.append(cloud.labels)
            unlabeled.append(PointCloud(cloud.coords, cloud.intensity, None))
    evals = [scan_at(n_scans + j) for j in range(n_eval)]
    return SynthDataset(labeled, unlabeled, truths, evals, default_label_map())


# --- scene (de)serialization -------------------------------------------------

_PRIM_TAGS = {"ground": GroundPlane, "box": Box, "wall": Wall, "cylinder": Cylinder}


def scene_to_json(scene: Scene) -> str:
    prims = []
    for p in scene.primitives:
        tag = next(t for t, cls in _PRIM_TAGS.items() if isinstance(p, cls))
        prims.append({"type": tag, **asdict(p)})
    return json.dumps(
        {
            "world_radius": scene.world_radius,
            "sensor_height": scene.sensor_height,
            "primitives": prims,
        },
        indent=2,
    )


def scene_from_json(text: str) -> Scene:
    doc = json.loads(text)
    prims = []
    for entry in doc["primitives"]:
        cls = _PRIM_TAGS[entry["type"]]
        kwargs = {k: v for k, v in entry.items() if k != "type"}
        for key in ("center", "extent", "p1", "p2"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        prims.append(cls(**kwargs))
    return Scene(tuple(prims), float(doc["world_radius"]), float(doc["sensor_height"]))
