"""Slow, obviously-correct reference implementations used to cross-check the library."""

import itertools
import math

import numpy as np


def voxel_counts(points, origin, cell, nx, ny):
    """Point count per (ix, iy) by a plain Python scan."""
    out = {}
    for x, y, _ in points:
        ix = math.floor((x - origin[0]) / cell[0])
        iy = math.floor((y - origin[1]) / cell[1])
        if 0 <= ix < nx and 0 <= iy < ny:
            out[(ix, iy)] = out.get((ix, iy), 0) + 1
    return out


def hash_join(*tables):
    merged = {}
    for t in tables:
        for k, v in t.items():
            merged[k] = merged.get(k, 0) + v
    return merged


def deck_dict(deck):
    return {(int(i), int(j)): int(c) for (i, j), c in zip(deck.indices, deck.counts)}


def nms_pairwise(dets, radii):
    """Greedy circle suppression with an explicit O(n^2) distance check."""
    order = sorted(range(len(dets)), key=lambda i: (dets[i].cls.value, -dets[i].score, dets[i].center))
    kept = []
    for i in order:
        di = dets[i]
        ok = True
        for j in kept:
            dj = dets[j]
            if dj.cls is di.cls and math.hypot(di.center[0] - dj.center[0], di.center[1] - dj.center[1]) < radii[di.cls]:
                ok = False
                break
        if ok:
            kept.append(i)
    return sorted(kept)


def envelope_ap(scores, is_tp, n_gt):
    """AP by sweeping recall levels and taking max precision at or beyond each."""
    if n_gt == 0:
        return 100.0 if len(scores) == 0 else 0.0
    ranked = sorted(zip(scores, is_tp), key=lambda t: -t[0])
    tp = fp = 0
    pr = []
    for _, hit in ranked:
        tp += hit
        fp += not hit
        pr.append((tp / n_gt, tp / (tp + fp)))
    total, prev_r = 0.0, 0.0
    for idx, (r, _) in enumerate(pr):
        if r > prev_r:
            best = max(p for rr, p in pr[idx:])
            total += (r - prev_r) * best
            prev_r = r
    return 100.0 * total


def best_assignment_tp(dets, gts, iou, thresholds):
    """Largest number of one-to-one det/GT pairs clearing the class threshold (brute force)."""
    best = 0
    n = len(dets)
    for perm in itertools.permutations(list(range(len(gts))) + [None] * n, n):
        used = [g for g in perm if g is not None]
        if len(set(used)) != len(used):
            continue
        count = 0
        for d, g in zip(dets, perm):
            if g is not None and dets and d.cls is gts[g].cls and iou(d, gts[g]) >= thresholds[d.cls]:
                count += 1
        best = max(best, count)
    return best


def footprint_scan(deck, obj):
    """Summed counts of cells whose centers fall inside the object footprint grown by one cell diagonal."""
    grid = deck.grid
    diag = math.hypot(grid.cell_size[0], grid.cell_size[1])
    c, s = math.cos(obj.yaw), math.sin(obj.yaw)
    total = 0
    for (ix, iy), cnt in zip(deck.indices, deck.counts):
        cx = grid.origin[0] + (ix + 0.5) * grid.cell_size[0] - obj.center[0]
        cy = grid.origin[1] + (iy + 0.5) * grid.cell_size[1] - obj.center[1]
        u = c * cx + s * cy
        v = -s * cx + c * cy
        if abs(u) <= obj.extent[0] / 2 + diag and abs(v) <= obj.extent[1] / 2 + diag:
            total += int(cnt)
    return total


def in_box(points, obj, margin):
    c, s = math.cos(obj.yaw), math.sin(obj.yaw)
    n = 0
    for x, y, z in points:
        dx, dy, dz = x - obj.center[0], y - obj.center[1], z - obj.center[2]
        u = c * dx + s * dy
        v = -s * dx + c * dy
        if abs(u) <= obj.extent[0] / 2 + margin and abs(v) <= obj.extent[1] / 2 + margin and abs(dz) <= obj.extent[2] / 2 + margin:
            n += 1
    return n


def rect_iou_axis_aligned(a, b):
    """IoU of axis-aligned (cx, cy, l, w) rectangles in closed form."""
    ax0, ax1 = a[0] - a[2] / 2, a[0] + a[2] / 2
    ay0, ay1 = a[1] - a[3] / 2, a[1] + a[3] / 2
    bx0, bx1 = b[0] - b[2] / 2, b[0] + b[2] / 2
    by0, by1 = b[1] - b[3] / 2, b[1] + b[3] / 2
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    return inter / (a[2] * a[3] + b[2] * b[3] - inter)


def euler_matrix(roll, pitch, yaw):
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return rx @ ry @ rz
