"""Shared geometric primitives: rigid transforms, oriented boxes, rotated-rectangle overlap."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def rotation_matrix(yaw: float, pitch: float = 0.0, roll: float = 0.0) -> np.ndarray:
    """Rotation matrix for intrinsic yaw (z), pitch (y), roll (x), applied in that order."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return rz @ ry @ rx


@dataclass
class Pose:
    """Rigid transform: local coordinates -> parent coordinates."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)

    @property
    def rotation(self) -> np.ndarray:
        return rotation_matrix(self.yaw, self.pitch, self.roll)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.position
        return m

    def transform_points(self, pts: np.ndarray) -> np.ndarray:
        return pts @ self.rotation.T + self.position

    def inverse_transform_points(self, pts: np.ndarray) -> np.ndarray:
        return (pts - self.position) @ self.rotation


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = (a + math.pi) % (2.0 * math.pi) - math.pi
    if a == -math.pi:
        a = math.pi
    return a


@dataclass
class Box3D:
    """Oriented 3D box: center, (length, width, height), yaw about the vertical axis."""

    center: np.ndarray
    dims: np.ndarray
    yaw: float = 0.0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.dims = np.asarray(self.dims, dtype=float)
        if np.any(self.dims <= 0):
            raise ValueError(f"box dims must be positive, got {self.dims}")
        self.yaw = wrap_angle(float(self.yaw))

    def corners(self) -> np.ndarray:
        """8 corners, shape (8, 3)."""
        l, w, h = self.dims
        sx = np.array([1, 1, 1, 1, -1, -1, -1, -1]) * (l / 2.0)
        sy = np.array([1, 1, -1, -1, 1, 1, -1, -1]) * (w / 2.0)
        sz = np.array([1, -1, 1, -1, 1, -1, 1, -1]) * (h / 2.0)
        local = np.stack([sx, sy, sz], axis=1)
        return local @ rotation_matrix(self.yaw).T + self.center

    def bev_corners(self) -> np.ndarray:
        """4 corners of the ground-plane footprint, CCW, shape (4, 2)."""
        l, w = self.dims[0], self.dims[1]
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        local = np.array([[l, w], [-l, w], [-l, -w], [l, -w]]) / 2.0
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + self.center[:2]

    def contains(self, pts: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Boolean mask of points inside the box (inclusive, with optional tolerance)."""
        local = (np.atleast_2d(pts) - self.center) @ rotation_matrix(self.yaw)
        half = self.dims / 2.0 + tol
        return np.all(np.abs(local) <= half, axis=1)

    def local_coords(self, pts: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(pts) - self.center) @ rotation_matrix(self.yaw)


def polygon_area(poly: np.ndarray) -> float:
    """Signed shoelace area of a 2D polygon (positive for CCW)."""
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon against a convex CCW clip polygon."""
    out = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        if not out:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        inp = out
        out = []
        prev = inp[-1]
        prev_side = ex * (prev[1] - ay) - ey * (prev[0] - ax)
        for cur in inp:
            cur_side = ex * (cur[1] - ay) - ey * (cur[0] - ax)
            if cur_side >= 0.0:
                if prev_side < 0.0:
                    t = prev_side / (prev_side - cur_side)
                    out.append((prev[0] + t * (cur[0] - prev[0]),
                                prev[1] + t * (cur[1] - prev[1])))
                out.append(cur)
            elif prev_side >= 0.0:
                t = prev_side / (prev_side - cur_side)
                out.append((prev[0] + t * (cur[0] - prev[0]),
                            prev[1] + t * (cur[1] - prev[1])))
            prev, prev_side = cur, cur_side
    return np.array(out) if out else np.zeros((0, 2))


def rect_intersection_area(corners_a: np.ndarray, corners_b: np.ndarray) -> float:
    """Intersection area of two convex CCW quads (rotated rectangles)."""
    inter = clip_convex(corners_a, corners_b)
    return abs(polygon_area(inter))
