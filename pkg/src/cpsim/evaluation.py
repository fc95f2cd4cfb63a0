"""Detection evaluation: BEV IoU matching, AP per class and point-count bucket.

Difficulty buckets follow the minimum number of LiDAR points on a target.
A ground truth outside a bucket is treated as "don't care" for that bucket:
a detection matched to it counts as neither true nor false positive.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import box_corners_bev, convex_intersection_area
from .scene import ObjectClass

IOU_THRESHOLDS = {ObjectClass.CAR: 0.7, ObjectClass.PEDESTRIAN: 0.25}
MP_BUCKETS = (10, 5, 1)


def _bev(box):
    if isinstance(box, tuple):
        return box
    return (box.center[0], box.center[1], box.extent[0], box.extent[1], box.yaw)


def bev_iou(a, b):
    """Ground-plane IoU of two yawed boxes.

    Boxes are Detection / GroundTruthObject instances or ``(cx, cy, l, w, yaw)``
    tuples.
    """
    ax, ay, al, aw, ayaw = _bev(a)
    bx, by, bl, bw, byaw = _bev(b)
    area_a, area_b = al * aw, bl * bw
    if area_a <= 0 or area_b <= 0:
        raise ValueError("degenerate box with zero footprint")
    # bounding discs disjoint -> no overlap
    if math.hypot(ax - bx, ay - by) > 0.5 * (math.hypot(al, aw) + math.hypot(bl, bw)):
        return 0.0
    inter = convex_intersection_area(box_corners_bev(ax, ay, al, aw, ayaw), box_corners_bev(bx, by, bl, bw, byaw))
    return float(min(max(inter / (area_a + area_b - inter), 0.0), 1.0))


@dataclass(frozen=True)
class MatchResult:
    detection: int
    gt: int | None
    iou: float


def match_and_score(dets, gts, thresholds=IOU_THRESHOLDS):
    """Greedy matching by descending score.

    Each detection takes the unmatched same-class ground truth with the
    highest IoU, provided it clears the class threshold. Results are listed
    in the visiting order.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    taken = set()
    out = []
    for i in order:
        d = dets[i]
        best, best_iou = None, 0.0
        for g in gts:
            if g.cls is not d.cls or g.id in taken:
                continue
            iou = bev_iou(d, g)
            if iou > best_iou:
                best, best_iou = g.id, iou
        if best is not None and best_iou >= thresholds[d.cls]:
            taken.add(best)
            out.append(MatchResult(i, best, best_iou))
        else:
            out.append(MatchResult(i, None, best_iou))
    return out


def average_precision(scores, is_tp, n_gt):
    """All-point interpolated AP in percent.

    ``scores``/``is_tp`` describe the ranked detections that count for the
    population (ignored ones already removed); ``n_gt`` is its size.
    """
    scores = np.asarray(scores, dtype=float)
    is_tp = np.asarray(is_tp, dtype=bool)
    if n_gt == 0:
        return 100.0 if len(scores) == 0 else 0.0
    if len(scores) == 0:
        return 0.0
    order = np.argsort(-scores, kind="stable")
    tp = np.cumsum(is_tp[order])
    fp = np.cumsum(~is_tp[order])
    recall = tp / n_gt
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.diff(np.concatenate([[0.0], recall]))
    return float(100.0 * np.sum(steps * envelope))


def max_recall(is_tp, n_gt):
    if n_gt == 0:
        return 100.0
    return 100.0 * float(np.sum(is_tp)) / n_gt


@dataclass(frozen=True)
class EvalFrame:
    """What evaluation needs from one frame."""

    detections: tuple
    objects: tuple
    mp_counts: dict  # object id -> points on the object


@dataclass
class _Tally:
    scores: list = field(default_factory=list)
    tps: list = field(default_factory=list)
    n_gt: int = 0


def _tally(frames, thresholds):
    tallies = {(c, b): _Tally() for c in ObjectClass for b in MP_BUCKETS}
    for fr in frames:
        results = match_and_score(list(fr.detections), list(fr.objects), thresholds)
        for c in ObjectClass:
            for b in MP_BUCKETS:
                eligible = {o.id for o in fr.objects if o.cls is c and fr.mp_counts.get(o.id, 0) >= b}
                t = tallies[(c, b)]
                t.n_gt += len(eligible)
                for r in results:
                    d = fr.detections[r.detection]
                    if d.cls is not c:
                        continue
                    if r.gt is None:
                        t.scores.append(d.score)
                        t.tps.append(False)
                    elif r.gt in eligible:
                        t.scores.append(d.score)
                        t.tps.append(True)
    return tallies


@dataclass(frozen=True)
class ApReport:
    overall_ap: float
    per_class: dict  # class -> {bucket: AP}
    per_class_ar: dict  # class -> {bucket: AR}
    gt_counts: dict  # class -> {bucket: n}

    def to_dict(self):
        def fmt(table):
            return {c.value: {f"MP>={b}": v for b, v in table[c].items()} for c in ObjectClass}

        return {
            "overall_ap": self.overall_ap,
            "ap": fmt(self.per_class),
            "ar": fmt(self.per_class_ar),
            "gt_counts": fmt(self.gt_counts),
        }

    @classmethod
    def from_dict(cls, doc):
        def parse(table, conv):
            return {
                ObjectClass(c): {int(k.split(">=")[1]): conv(v) for k, v in row.items()} for c, row in table.items()
            }

        return cls(doc["overall_ap"], parse(doc["ap"], float), parse(doc["ar"], float), parse(doc["gt_counts"], int))


def evaluate(frames, thresholds=IOU_THRESHOLDS):
    """Pool ``frames`` and report AP/AR per class and MP bucket.

    Overall AP is the GT-count-weighted mean of the per-class AP at MP>=1,
    and 0 when no ground truth is eligible at all.
    """
    tallies = _tally(frames, thresholds)
    ap = {c: {} for c in ObjectClass}
    ar = {c: {} for c in ObjectClass}
    counts = {c: {} for c in ObjectClass}
    for (c, b), t in tallies.items():
        ap[c][b] = average_precision(t.scores, t.tps, t.n_gt)
        ar[c][b] = max_recall(t.tps, t.n_gt)
        counts[c][b] = t.n_gt
    total = sum(counts[c][1] for c in ObjectClass)
    overall = 0.0 if total == 0 else sum(counts[c][1] * ap[c][1] for c in ObjectClass) / total
    return ApReport(overall, ap, ar, counts)


def frame_overall_ap(frame, thresholds=IOU_THRESHOLDS):
    return evaluate([frame], thresholds).overall_ap


def write_ap_report(path, report, extra=None):
    doc = report.to_dict()
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
