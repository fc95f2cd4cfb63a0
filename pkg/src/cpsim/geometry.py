"""Rotations, oriented boxes and convex polygon overlap in the ground plane."""

import math

import numpy as np


def rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_matrix(roll, pitch, yaw):
    """Ego-to-global rotation, composed as ``R_x(roll) @ R_y(pitch) @ R_z(yaw)``."""
    return rot_x(roll) @ rot_y(pitch) @ rot_z(yaw)


def normalize_angle(a):
    """Wrap an angle to [-pi, pi). Angles already in range come back unchanged."""
    if -math.pi <= a < math.pi:
        return float(a)
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a < 0.0:
        a += 2.0 * math.pi
    a -= math.pi
    # fmod rounding can land exactly on +pi
    return -math.pi if a >= math.pi else a


def box_corners_bev(cx, cy, length, width, yaw):
    """Counter-clockwise footprint corners of a yawed rectangle, shape (4, 2)."""
    c, s = math.cos(yaw), math.sin(yaw)
    hl, hw = 0.5 * length, 0.5 * width
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([cx, cy])


def polygon_area(poly):
    if len(poly) < 3:
        return 0.0
    x = poly[:, 0]
    y = poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _clip(subject, a, b):
    # keep the part of ``subject`` left of the directed edge a->b
    out = []
    n = len(subject)
    ex, ey = b[0] - a[0], b[1] - a[1]

    def side(p):
        return ex * (p[1] - a[1]) - ey * (p[0] - a[0])

    for i in range(n):
        cur = subject[i]
        prev = subject[i - 1]
        sc, sp = side(cur), side(prev)
        if sc >= 0.0:
            if sp < 0.0:
                t = sp / (sp - sc)
                out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
            out.append((cur[0], cur[1]))
        elif sp >= 0.0:
            t = sp / (sp - sc)
            out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
    return out


def convex_intersection_area(p, q):
    """Area of the intersection of two convex CCW polygons (Sutherland-Hodgman)."""
    poly = [tuple(v) for v in p]
    m = len(q)
    for i in range(m):
        if not poly:
            return 0.0
        poly = _clip(poly, q[i], q[(i + 1) % m])
    if len(poly) < 3:
        return 0.0
    return polygon_area(np.asarray(poly))


def points_in_box_mask(points, center, extent, rotation, margin=0.0):
    """Boolean mask of ``points`` (n, 3) inside an oriented box grown by ``margin``."""
    if len(points) == 0:
        return np.zeros(0, dtype=bool)
    local = (points - np.asarray(center)) @ rotation
    half = 0.5 * np.asarray(extent) + margin
    return np.all(np.abs(local) <= half, axis=1)
