"""Synthetic traffic scenes and per-node LiDAR simulation.

Objects are oriented boxes resting on the ground plane (z = 0). A sensor
casts ``channels x 360 / horizontal_resolution`` rays and keeps the nearest
box hit per ray, so occlusion falls out of the depth ordering. Clouds are
returned in the sensor's ego frame and moved into the shared global frame
with :func:`transform_to_grc`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ._rng import rng_for
from .geometry import normalize_angle, points_in_box_mask, rotation_matrix

__all__ = [
    "Pose",
    "ObjectClass",
    "GroundTruthObject",
    "SensorSpec",
    "Scene",
    "Frame",
    "PointCloud",
    "PlacementRegion",
    "SceneConfig",
    "PlacementError",
    "generate_scene",
    "simulate_lidar",
    "transform_to_grc",
    "transform_to_ego",
    "points_on_object",
    "write_cloud",
    "read_cloud",
    "three_intersection_config",
]


@dataclass(frozen=True)
class Pose:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "z", "roll", "pitch", "yaw"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"pose {name} must be finite, got {v}")
            if name in ("roll", "pitch", "yaw"):
                v = normalize_angle(v)
            object.__setattr__(self, name, v)

    @property
    def position(self):
        return np.array([self.x, self.y, self.z])

    def rotation(self):
        return rotation_matrix(self.roll, self.pitch, self.yaw)


class ObjectClass(enum.Enum):
    CAR = "Car"
    PEDESTRIAN = "Pedestrian"


@dataclass(frozen=True)
class GroundTruthObject:
    id: int
    cls: ObjectClass
    pose: Pose
    extent: tuple  # (length, width, height)

    def __post_init__(self):
        ext = tuple(float(e) for e in self.extent)
        if len(ext) != 3 or min(ext) <= 0.0:
            raise ValueError(f"extent must be three positive lengths, got {self.extent}")
        object.__setattr__(self, "extent", ext)

    @property
    def center(self):
        return self.pose.position

    @property
    def yaw(self):
        return self.pose.yaw


@dataclass(frozen=True)
class SensorSpec:
    """Spinning LiDAR parameters. Angles in degrees, lengths in meters.

    ``dropoff_rate`` is a uniform per-hit drop probability. ``dropoff_intensity``
    adds a distance-dependent drop that grows linearly from zero at
    ``range * (1 - dropoff_intensity)`` to ``dropoff_rate`` at full range.
    """

    channels: int = 64
    mount_height: float = 1.74
    range: float = 100.0
    rotation_hz: float = 10.0
    upper_fov: float = 22.5
    lower_fov: float = -22.5
    noise_std: float = 0.01
    dropoff_rate: float = 0.45
    dropoff_intensity: float = 0.8
    horizontal_resolution: float = 0.4

    def __post_init__(self):
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.range <= 0:
            raise ValueError("range must be positive")
        if self.lower_fov > self.upper_fov:
            raise ValueError("lower_fov must not exceed upper_fov")
        if not 0.0 <= self.dropoff_rate <= 1.0:
            raise ValueError("dropoff_rate must lie in [0, 1]")
        if not 0.0 <= self.dropoff_intensity <= 1.0:
            raise ValueError("dropoff_intensity must lie in [0, 1]")
        if self.horizontal_resolution <= 0:
            raise ValueError("horizontal_resolution must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")

    @classmethod
    def vehicle(cls, **overrides):
        return cls(**overrides)

    @classmethod
    def infrastructure(cls, **overrides):
        params = dict(mount_height=4.74, upper_fov=0.0, lower_fov=-22.5)
        params.update(overrides)
        return cls(**params)

    def elevation_angles(self):
        if self.channels == 1:
            return np.array([0.5 * (self.lower_fov + self.upper_fov)])
        return np.linspace(self.lower_fov, self.upper_fov, self.channels)

    def azimuth_angles(self):
        n = int(round(360.0 / self.horizontal_resolution))
        return -180.0 + np.arange(n) * (360.0 / n)

    @property
    def n_rays(self):
        return self.channels * len(self.azimuth_angles())


@dataclass(frozen=True)
class Scene:
    objects: tuple
    bounds: tuple = (0.0, 0.0, 280.0, 80.0)  # (xmin, ymin, xmax, ymax)
    frame_index: int = 0
    # when set, rays that miss every object return from the z = 0 plane
    ground_plane: bool = False

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique within a scene")

    def object_by_id(self, oid):
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(oid)


class Frame(enum.Enum):
    EGO = "ego"
    GLOBAL = "global"


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    frame: Frame = Frame.EGO

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self.frame == other.frame and np.array_equal(self.points, other.points)

    __hash__ = None

    @classmethod
    def empty(cls, frame=Frame.EGO):
        return cls(np.zeros((0, 3)), frame)


# -- scene generation ---------------------------------------------------------


@dataclass(frozen=True)
class PlacementRegion:
    """Axis-aligned rectangle where objects of one class may be centered.

    When ``yaws`` is empty the heading is drawn uniformly.
    """

    xmin: float
    ymin: float
    xmax: float
    ymax: float
    yaws: tuple = ()

    @property
    def area(self):
        return max(self.xmax - self.xmin, 0.0) * max(self.ymax - self.ymin, 0.0)


class PlacementError(ValueError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    cars: int = 0
    pedestrians: int = 0
    bounds: tuple = (0.0, 0.0, 280.0, 80.0)
    car_regions: tuple = ()
    pedestrian_regions: tuple = ()
    car_extent: tuple = (4.5, 1.8, 1.5)
    pedestrian_extent: tuple = (0.6, 0.6, 1.75)
    extent_jitter: float = 0.1
    # (x, y, radius) discs kept free of objects, e.g. around sensor vehicles
    keepouts: tuple = ()
    ground_plane: bool = False
    max_retries: int = 1000

    def regions_for(self, cls):
        regions = self.car_regions if cls is ObjectClass.CAR else self.pedestrian_regions
        if regions:
            return tuple(regions)
        xmin, ymin, xmax, ymax = self.bounds
        return (PlacementRegion(xmin, ymin, xmax, ymax),)


def _footprint_inside(obj, bounds):
    hl, hw = obj.extent[0] / 2, obj.extent[1] / 2
    c, s = math.cos(obj.yaw), math.sin(obj.yaw)
    dx = abs(hl * c) + abs(hw * s)
    dy = abs(hl * s) + abs(hw * c)
    xmin, ymin, xmax, ymax = bounds
    return (
        obj.pose.x - dx >= xmin
        and obj.pose.x + dx <= xmax
        and obj.pose.y - dy >= ymin
        and obj.pose.y + dy <= ymax
    )


def generate_scene(config, seed, frame_index=0):
    """Place ``config.cars`` cars and ``config.pedestrians`` pedestrians.

    Objects never overlap: bounding discs of any two footprints are disjoint.
    Each object gets at most ``config.max_retries`` placement attempts before
    :class:`PlacementError` is raised. Ids are assigned 0..n-1, cars first.
    """
    rng = rng_for(seed, "scene")
    placed = []
    discs = [tuple(k) for k in config.keepouts]
    plan = [ObjectClass.CAR] * config.cars + [ObjectClass.PEDESTRIAN] * config.pedestrians
    for oid, cls in enumerate(plan):
        regions = config.regions_for(cls)
        areas = np.array([r.area for r in regions], dtype=float)
        if areas.sum() <= 0:
            raise PlacementError(f"no placement area for {cls.value}")
        weights = areas / areas.sum()
        base = config.car_extent if cls is ObjectClass.CAR else config.pedestrian_extent
        for _ in range(config.max_retries):
            region = regions[rng.choice(len(regions), p=weights)]
            x = rng.uniform(region.xmin, region.xmax)
            y = rng.uniform(region.ymin, region.ymax)
            if region.yaws:
                yaw = float(region.yaws[rng.integers(len(region.yaws))])
            else:
                yaw = rng.uniform(-math.pi, math.pi)
            scale = 1.0 + config.extent_jitter * rng.uniform(-1.0, 1.0, size=3)
            extent = tuple(float(b * s) for b, s in zip(base, scale))
            obj = GroundTruthObject(oid, cls, Pose(x, y, extent[2] / 2, yaw=yaw), extent)
            radius = 0.5 * math.hypot(extent[0], extent[1])
            if not _footprint_inside(obj, config.bounds):
                continue
            if any(math.hypot(x - dx, y - dy) < radius + dr for dx, dy, dr in discs):
                continue
            placed.append(obj)
            discs.append((x, y, radius))
            break
        else:
            raise PlacementError(
                f"could not place object {oid} ({cls.value}) after {config.max_retries} attempts"
            )
    return Scene(tuple(placed), config.bounds, frame_index, config.ground_plane)


def three_intersection_config(cars=40, pedestrians=30, keepouts=()):
    """Three intersections along a 280 m x 80 m corridor.

    A two-lane arterial runs along y = 40; cross streets meet it at
    x = 50, 140 and 230. Cars sit in lanes, pedestrians on sidewalks.
    """
    centers = (50.0, 140.0, 230.0)
    half_road = 6.0
    car_regions = [
        PlacementRegion(3.0, 35.5, 277.0, 38.5, (0.0,)),
        PlacementRegion(3.0, 41.5, 277.0, 44.5, (math.pi,)),
    ]
    ped_regions = [
        PlacementRegion(1.0, 30.5, 279.0, 33.5),
        PlacementRegion(1.0, 46.5, 279.0, 49.5),
    ]
    for cx in centers:
        for y0, y1 in ((3.0, 30.0), (50.0, 77.0)):
            car_regions.append(PlacementRegion(cx - 4.5, y0, cx - 1.5, y1, (-math.pi / 2,)))
            car_regions.append(PlacementRegion(cx + 1.5, y0, cx + 4.5, y1, (math.pi / 2,)))
            ped_regions.append(PlacementRegion(cx - half_road - 3.5, y0, cx - half_road - 0.5, y1))
            ped_regions.append(PlacementRegion(cx + half_road + 0.5, y0, cx + half_road + 3.5, y1))
    return SceneConfig(
        cars=cars,
        pedestrians=pedestrians,
        bounds=(0.0, 0.0, 280.0, 80.0),
        car_regions=tuple(car_regions),
        pedestrian_regions=tuple(ped_regions),
        keepouts=tuple(keepouts),
        ground_plane=True,
    )


# -- LiDAR ----------------------------------------------------------------------


def _ray_directions(sensor):
    el = np.deg2rad(sensor.elevation_angles())
    az = np.deg2rad(sensor.azimuth_angles())
    ce = np.cos(el)[:, None]
    dirs = np.stack(
        [
            (ce * np.cos(az)[None, :]).ravel(),
            (ce * np.sin(az)[None, :]).ravel(),
            np.repeat(np.sin(el), len(az)),
        ],
        axis=1,
    )
    return dirs


def _ray_box_hits(origin, dirs, obj, max_range):
    """Entry distance of each unit ray into ``obj``'s box (inf when missed)."""
    rot = obj.pose.rotation()
    half = 0.5 * np.asarray(obj.extent)
    o = rot.T @ (origin - obj.center)
    d = dirs @ rot
    d = np.where(np.abs(d) < 1e-15, 1e-15, d)
    inv = 1.0 / d
    t1 = (-half - o) * inv
    t2 = (half - o) * inv
    tmin = np.minimum(t1, t2).max(axis=1)
    tmax = np.maximum(t1, t2).min(axis=1)
    hit = (tmax >= tmin) & (tmin > 0.0) & (tmin <= max_range)
    return np.where(hit, tmin, np.inf)


def _column_window(origin, obj, yaw, n_az):
    """Azimuth columns (ego frame) that can see ``obj``, or None for all of them."""
    corners = []
    hl, hw = 0.5 * obj.extent[0], 0.5 * obj.extent[1]
    c, s = math.cos(obj.yaw), math.sin(obj.yaw)
    for u, v in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)):
        corners.append((obj.pose.x + u * c - v * s - origin[0], obj.pose.y + u * s + v * c - origin[1]))
    dist = math.hypot(obj.pose.x - origin[0], obj.pose.y - origin[1])
    if dist <= math.hypot(hl, hw) + 1e-6:
        return None
    center = math.atan2(obj.pose.y - origin[1], obj.pose.x - origin[0])
    offs = [normalize_angle(math.atan2(y, x) - center) for x, y in corners]
    step = 2.0 * math.pi / n_az
    lo = center + min(offs) - yaw + math.pi
    hi = center + max(offs) - yaw + math.pi
    first = math.floor(lo / step) - 1
    last = math.ceil(hi / step) + 1
    if last - first + 1 >= n_az:
        return None
    return np.arange(first, last + 1) % n_az


def raycast(sensor, sensor_pose, scene):
    """Nearest-hit distance per ray before dropout and noise, plus ego directions."""
    dirs_ego = _ray_directions(sensor)
    t = np.full(len(dirs_ego), np.inf)
    origin = sensor_pose.position
    dirs = dirs_ego @ sensor_pose.rotation().T
    if scene.ground_plane and origin[2] > 0.0:
        down = dirs[:, 2] < 0.0
        tg = np.full(len(t), np.inf)
        tg[down] = -origin[2] / dirs[down, 2]
        t = np.where(tg <= sensor.range, tg, np.inf)
    n_az = len(sensor.azimuth_angles())
    # with a level sensor each object only spans a few azimuth columns
    level = sensor_pose.roll == 0.0 and sensor_pose.pitch == 0.0
    channel_offsets = np.arange(sensor.channels)[:, None] * n_az
    for obj in scene.objects:
        half = 0.5 * np.asarray(obj.extent)
        if np.linalg.norm(obj.center - origin) - np.linalg.norm(half) > sensor.range:
            continue
        local = obj.pose.rotation().T @ (origin - obj.center)
        if np.all(np.abs(local) <= half):
            # sensor sits inside this box (its own vehicle): never visible
            continue
        cols = _column_window(origin, obj, sensor_pose.yaw, n_az) if level else None
        if cols is None:
            np.minimum(t, _ray_box_hits(origin, dirs, obj, sensor.range), out=t)
        else:
            idx = (channel_offsets + cols[None, :]).ravel()
            t[idx] = np.minimum(t[idx], _ray_box_hits(origin, dirs[idx], obj, sensor.range))
    return t, dirs_ego


def simulate_lidar(sensor, sensor_pose, scene, seed):
    """Simulate one sweep and return the surviving hits in the ego frame."""
    t, dirs_ego = raycast(sensor, sensor_pose, scene)
    n = len(t)
    # draw every variate up front so the stream does not depend on the hit set
    rng = rng_for(seed, "lidar")
    u = rng.random((2, n))
    noise = rng.standard_normal((n, 3))
    hit = np.isfinite(t)
    keep = hit & (u[0] >= sensor.dropoff_rate)
    if sensor.dropoff_intensity > 0.0 and sensor.dropoff_rate > 0.0:
        start = sensor.range * (1.0 - sensor.dropoff_intensity)
        ramp = np.clip((np.where(hit, t, 0.0) - start) / (sensor.range * sensor.dropoff_intensity), 0.0, 1.0)
        keep &= u[1] >= sensor.dropoff_rate * ramp
    pts = dirs_ego[keep] * t[keep, None] + sensor.noise_std * noise[keep]
    return PointCloud(pts, Frame.EGO)


def transform_to_grc(cloud, ego_pose):
    """Move an ego-frame cloud into the global reference frame: ``R p + T``."""
    if cloud.frame is not Frame.EGO:
        raise ValueError("transform_to_grc expects an ego-frame cloud")
    rot = ego_pose.rotation()
    return PointCloud(cloud.points @ rot.T + ego_pose.position, Frame.GLOBAL)


def transform_to_ego(cloud, ego_pose):
    if cloud.frame is not Frame.GLOBAL:
        raise ValueError("transform_to_ego expects a global-frame cloud")
    rot = ego_pose.rotation()
    return PointCloud((cloud.points - ego_pose.position) @ rot, Frame.EGO)


def points_on_object(cloud, obj, noise_std=0.01):
    """Number of global-frame points inside ``obj``'s box grown by 3 noise sigmas."""
    if len(cloud) == 0:
        return 0
    if cloud.frame is not Frame.GLOBAL:
        raise ValueError("points_on_object expects a global-frame cloud")
    mask = points_in_box_mask(cloud.points, obj.center, obj.extent, obj.pose.rotation(), 3.0 * noise_std)
    return int(mask.sum())


def write_cloud(cloud, path):
    """Write points as flat little-endian float32 (x, y, z) triples."""
    with open(path, "wb") as fh:
        fh.write(cloud.points.astype("<f4").tobytes())


def read_cloud(path, frame=Frame.GLOBAL):
    data = np.fromfile(path, dtype="<f4")
    return PointCloud(data.reshape(-1, 3).astype(np.float64), frame)
