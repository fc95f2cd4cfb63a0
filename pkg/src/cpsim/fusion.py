"""Early, intermediate and late fusion plus the surrogate detector.

The surrogate stands in for a trained network: every ground-truth object
whose footprint collects enough fused points is reported, with a score and a
box error that both improve as the point support ``m`` grows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import rng_for
from .feature import deck_union
from .scene import Frame, ObjectClass, PointCloud

DEFAULT_NMS_RADII = {ObjectClass.CAR: 2.0, ObjectClass.PEDESTRIAN: 0.5}
CLASS_EXTENTS = {ObjectClass.CAR: (4.5, 1.8, 1.5), ObjectClass.PEDESTRIAN: (0.6, 0.6, 1.75)}


@dataclass(frozen=True)
class Detection:
    cls: ObjectClass
    center: tuple
    extent: tuple
    yaw: float
    score: float
    source_node: int

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "extent", tuple(float(v) for v in self.extent))
        if min(self.extent) <= 0:
            raise ValueError("detection extents must be positive")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")

    def to_record(self):
        return {
            "class": self.cls.value,
            "center": list(self.center),
            "extent": list(self.extent),
            "yaw": self.yaw,
            "score": self.score,
            "source_node": self.source_node,
        }

    @classmethod
    def from_record(cls, rec):
        return cls(
            ObjectClass(rec["class"]),
            tuple(rec["center"]),
            tuple(rec["extent"]),
            float(rec["yaw"]),
            float(rec["score"]),
            int(rec["source_node"]),
        )


@dataclass(frozen=True)
class NmsConfig:
    radius_per_class: dict = field(default_factory=lambda: dict(DEFAULT_NMS_RADII))

    def __post_init__(self):
        if any(r <= 0 for r in self.radius_per_class.values()):
            raise ValueError("NMS radii must be positive")


@dataclass(frozen=True)
class DetectorParams:
    min_points: int = 1
    score_halfpoint: float = 10.0
    base_jitter: float = 0.4
    yaw_jitter: float = 0.1
    clutter_rate: float = 0.05  # false detections per 100 occupied cells


def early_fuse(clouds):
    """Multiset union of global-frame clouds, rows sorted lexicographically."""
    clouds = list(clouds)
    for c in clouds:
        if c.frame is not Frame.GLOBAL:
            raise ValueError("early fusion only accepts global-frame clouds")
    if not clouds:
        return PointCloud.empty(Frame.GLOBAL)
    pts = np.concatenate([c.points for c in clouds])
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))
    return PointCloud(pts[order], Frame.GLOBAL)


def intermediate_fuse(decks, owner=None):
    return deck_union(decks, owner)


def footprint_support(fused, obj):
    """Total point count of fused cells centered inside ``obj``'s grown footprint."""
    if len(fused) == 0:
        return 0
    grid = fused.grid
    grow = grid.cell_diagonal
    hl, hw = 0.5 * obj.extent[0] + grow, 0.5 * obj.extent[1] + grow
    reach = math.hypot(hl, hw)
    ox, oy = grid.origin
    dx, dy = grid.cell_size[:2]
    ix_lo = math.floor((obj.pose.x - reach - ox) / dx)
    ix_hi = math.floor((obj.pose.x + reach - ox) / dx)
    # indices are sorted by (ix, iy) so an ix window is a contiguous slice
    lo, hi = np.searchsorted(fused.indices[:, 0], [ix_lo, ix_hi + 1])
    if lo == hi:
        return 0
    c = grid.cell_centers(fused.indices[lo:hi])
    rx, ry = c[:, 0] - obj.pose.x, c[:, 1] - obj.pose.y
    cy, sy = math.cos(obj.yaw), math.sin(obj.yaw)
    u = rx * cy + ry * sy
    v = -rx * sy + ry * cy
    inside = (np.abs(u) <= hl) & (np.abs(v) <= hw)
    return int(fused.counts[lo:hi][inside].sum())


def surrogate_detect(fused, scene, params=DetectorParams(), seed=0):
    """Detections for ``scene`` backed by the point support in ``fused``.

    Box noise for an object comes from its own stream ``(seed, "detector", id)``
    and only its scale depends on the support, so adding cells can only tighten
    a box. Clutter draws from ``(seed, "clutter")``.
    """
    dets = []
    if len(fused) == 0:
        return dets
    for obj in sorted(scene.objects, key=lambda o: o.id):
        m = footprint_support(fused, obj)
        if m < max(params.min_points, 1):
            continue
        z = rng_for(seed, "detector", obj.id).standard_normal(7)
        s = params.base_jitter / math.sqrt(m)
        ext = np.asarray(obj.extent)
        extent = np.maximum(ext + z[3:6] * s, 0.1 * ext)
        dets.append(
            Detection(
                obj.cls,
                tuple(obj.center + z[:3] * s),
                tuple(extent),
                obj.yaw + z[6] * params.yaw_jitter / math.sqrt(m),
                m / (m + params.score_halfpoint),
                fused.owner,
            )
        )
    if params.clutter_rate > 0:
        rng = rng_for(seed, "clutter")
        n_fake = int(rng.poisson(params.clutter_rate * len(fused) / 100.0))
        if n_fake:
            centers = fused.centers()
            picks = rng.integers(len(fused), size=n_fake)
            classes = rng.integers(2, size=n_fake)
            scores = rng.uniform(0.0, 0.3, size=n_fake)
            yaws = rng.uniform(-math.pi, math.pi, size=n_fake)
            for p, k, sc, yaw in zip(picks, classes, scores, yaws):
                cls = (ObjectClass.CAR, ObjectClass.PEDESTRIAN)[int(k)]
                ext = CLASS_EXTENTS[cls]
                dets.append(
                    Detection(cls, (centers[p, 0], centers[p, 1], ext[2] / 2), ext, float(yaw), float(sc), fused.owner)
                )
    return dets


def circle_nms(detections, config=NmsConfig()):
    """Greedy per-class suppression by center distance.

    Within a class, detections are visited by descending score (ties by
    center) and kept unless a kept one lies closer than the class radius.
    Kept detections are returned in input order.
    """
    keep = []
    by_class = {}
    for i, d in enumerate(detections):
        by_class.setdefault(d.cls, []).append(i)
    for cls, members in by_class.items():
        radius = config.radius_per_class[cls]
        members.sort(key=lambda i: (-detections[i].score, detections[i].center))
        kept_xy = np.empty((len(members), 2))
        n_kept = 0
        for i in members:
            x, y = detections[i].center[:2]
            if n_kept:
                d2 = (kept_xy[:n_kept, 0] - x) ** 2 + (kept_xy[:n_kept, 1] - y) ** 2
                if np.any(d2 < radius * radius):
                    continue
            kept_xy[n_kept] = (x, y)
            n_kept += 1
            keep.append(i)
    keep.sort()
    return [detections[i] for i in keep]


def write_detections(path, detections, frames=None):
    """Write detections as JSON lines; ``frames`` optionally tags each record."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, d in enumerate(detections):
            rec = d.to_record()
            if frames is not None:
                rec["frame"] = int(frames[i])
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_detections(path):
    """Read JSON-lines detections; returns ``(frame or None, Detection)`` pairs."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out.append((rec.get("frame"), Detection.from_record(rec)))
    return out
