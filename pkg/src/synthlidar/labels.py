"""Ground-truth 3D box labeling: bias-adjusted shrinking, visibility
filtering, occlusion/truncation estimation, and KITTI difficulty categories."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Box3D, rotation_matrix, wrap_angle

IMAGE_WIDTH = 1242
IMAGE_HEIGHT = 375

EASY, MODERATE, HARD, IGNORED = 0, 1, 2, 3
DIFFICULTY_NAMES = {EASY: "Easy", MODERATE: "Moderate", HARD: "Hard", IGNORED: "Ignored"}

# Official KITTI benchmark thresholds: min 2D box height (px),
# max occlusion level, max truncation.
_MIN_HEIGHT = (40.0, 25.0, 25.0)
_MAX_OCCLUSION = (0, 1, 2)
_MAX_TRUNCATION = (0.15, 0.30, 0.50)

MIN_VISIBLE_POINTS = 5
UPWARD_SHIFT_DEFAULT = 0.05

# Fraction of an object's rays blocked by foreign geometry for each
# occlusion level: <20% fully visible, <60% partly occluded, else largely.
_OCCLUSION_CUTS = (0.2, 0.6)


@dataclass
class ShrinkParams:
    length: tuple[float, float] = (0.2, 0.25)  # (a meters, b factor)
    width: tuple[float, float] = (0.05, 0.25)
    height: tuple[float, float] = (0.05, 0.05)
    upward_shift: float = UPWARD_SHIFT_DEFAULT

    def __post_init__(self):
        for a, b in (self.length, self.width, self.height):
            if a < 0 or not (0.0 <= b < 1.0):
                raise ValueError(f"invalid shrink parameters ({a}, {b})")

    @classmethod
    def from_dict(cls, d: dict) -> "ShrinkParams":
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kwargs)


@dataclass
class LabelRecord:
    type: str = "Car"
    truncation: float = 0.0
    occlusion: int = 0
    alpha: float = 0.0
    bbox2d: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)  # left, top, right, bottom
    dims: tuple[float, float, float] = (1.5, 1.6, 3.9)  # h, w, l (KITTI order)
    location: tuple[float, float, float] = (0.0, 0.0, 0.0)  # camera frame, bottom center
    rotation_y: float = 0.0
    score: float | None = None

    @property
    def bbox_height(self) -> float:
        return self.bbox2d[3] - self.bbox2d[1]


@dataclass
class CameraCalib:
    """Pinhole projection plus the rigid velodyne-to-camera transform."""

    fx: float = 721.5377
    fy: float = 721.5377
    cx: float = 609.5593
    cy: float = 172.854
    velo_to_cam: np.ndarray = field(default_factory=lambda: np.array([
        [0.0, -1.0, 0.0, 0.0],
        [0.0, 0.0, -1.0, -0.08],
        [1.0, 0.0, 0.0, 0.0],
    ]))
    image_size: tuple[int, int] = (IMAGE_WIDTH, IMAGE_HEIGHT)

    def projection_matrix(self) -> np.ndarray:
        return np.array([
            [self.fx, 0.0, self.cx, 0.0],
            [0.0, self.fy, self.cy, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ])

    def velo_to_camera(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return pts @ self.velo_to_cam[:, :3].T + self.velo_to_cam[:, 3]

    def project(self, pts_cam: np.ndarray) -> np.ndarray:
        """Camera-frame points to pixel coordinates (z must be positive)."""
        pts_cam = np.atleast_2d(pts_cam)
        z = pts_cam[:, 2]
        return np.stack([self.fx * pts_cam[:, 0] / z + self.cx,
                         self.fy * pts_cam[:, 1] / z + self.cy], axis=1)


@dataclass
class ShrinkResult:
    box: Box3D
    had_points: bool


def shrink_box(box: Box3D, points_inside: np.ndarray, params: ShrinkParams) -> ShrinkResult:
    """Reduce each dimension by a + b*d, where d is the slack between the box
    and the extent of the contained points along that axis.

    Dimensions are floored at the point extent so no input point is lost.
    Length/width recenter onto the point-extent midpoint; the box bottom
    tracks the lowest point.
    """
    points_inside = np.atleast_2d(np.asarray(points_inside, dtype=float))
    if points_inside.size == 0:
        return ShrinkResult(box=box, had_points=False)

    local = box.local_coords(points_inside)
    lo = local.min(axis=0)
    hi = local.max(axis=0)
    extent = hi - lo

    ab = (params.length, params.width, params.height)
    new_dims = np.empty(3)
    new_center_local = np.zeros(3)
    for k in range(3):
        a, b = ab[k]
        d = max(box.dims[k] - extent[k], 0.0)
        reduced = box.dims[k] - (a + b * d)
        new_dims[k] = max(reduced, extent[k])
        if k < 2:
            new_center_local[k] = (lo[k] + hi[k]) / 2.0
        else:
            new_center_local[k] = lo[k] + new_dims[k] / 2.0

    center = box.center + rotation_matrix(box.yaw) @ new_center_local
    return ShrinkResult(box=Box3D(center, new_dims, box.yaw), had_points=True)


@dataclass
class VisibilityStats:
    num_points: int
    truncation: float
    occlusion_level: int


def _clipped_rect_fraction(rect, image_size) -> float:
    """Fraction of the rect area falling inside the image."""
    left, top, right, bottom = rect
    area = max(right - left, 0.0) * max(bottom - top, 0.0)
    if area <= 0:
        return 0.0
    cl = max(left, 0.0)
    ct = max(top, 0.0)
    cr = min(right, float(image_size[0]))
    cb = min(bottom, float(image_size[1]))
    clipped = max(cr - cl, 0.0) * max(cb - ct, 0.0)
    return clipped / area


def project_box(box: Box3D, calib: CameraCalib):
    """Project the 8 corners; returns (rect, all_in_front) with rect unclipped."""
    cam = calib.velo_to_camera(box.corners())
    if np.any(cam[:, 2] <= 0.1):
        return None, False
    px = calib.project(cam)
    return (float(px[:, 0].min()), float(px[:, 1].min()),
            float(px[:, 0].max()), float(px[:, 1].max())), True


def occlusion_level(blocked_fraction: float) -> int:
    if blocked_fraction < _OCCLUSION_CUTS[0]:
        return 0
    if blocked_fraction < _OCCLUSION_CUTS[1]:
        return 1
    return 2


def visibility_stats(box: Box3D, actor_id: int, points_xyz: np.ndarray,
                     points_actor: np.ndarray, blocked_fraction: float,
                     calib: CameraCalib) -> VisibilityStats:
    """Point count inside the box, image truncation, and occlusion level.

    blocked_fraction is the share of the actor's scan rays whose first
    blocking surface belongs to other geometry (see frame_occlusions).
    """
    if len(points_xyz):
        inside = box.contains(points_xyz) & (points_actor == actor_id)
        num_points = int(inside.sum())
    else:
        num_points = 0
    rect, in_front = project_box(box, calib)
    if not in_front:
        truncation = 1.0
    else:
        truncation = 1.0 - _clipped_rect_fraction(rect, calib.image_size)
    return VisibilityStats(num_points=num_points, truncation=truncation,
                           occlusion_level=occlusion_level(blocked_fraction))


def frame_occlusions(boxes: dict[int, Box3D], first_xyz: np.ndarray,
                     first_actor: np.ndarray, origin: np.ndarray | None = None
                     ) -> dict[int, float]:
    """Blocked-ray fraction per actor from the frame's first hits.

    A ray counts toward an actor when its line segment (sensor to first hit,
    slightly extended) crosses the actor's box; it is blocked when the first
    hit lies in front of the box and belongs to other geometry.
    """
    if origin is None:
        origin = np.zeros(3)
    out = {}
    n = len(first_xyz)
    if n == 0:
        return {aid: 0.0 for aid in boxes}
    dirs = first_xyz - origin
    dists = np.linalg.norm(dirs, axis=1)
    dirs = dirs / np.maximum(dists[:, None], 1e-12)
    for aid, box in boxes.items():
        # Slab test in the box frame over an extended segment.
        rot = rotation_matrix(box.yaw)
        o = (origin - box.center) @ rot
        d = dirs @ rot
        half = box.dims / 2.0
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-half - o) / d
            t2 = (half - o) / d
        tmin = np.nanmax(np.minimum(t1, t2), axis=1)
        tmax = np.nanmin(np.maximum(t1, t2), axis=1)
        crosses = (tmax >= tmin) & (tmax > 0)
        denom = int(crosses.sum())
        if denom == 0:
            out[aid] = 0.0
            continue
        blocked = crosses & (first_actor != aid) & (dists < np.maximum(tmin, 0.0) - 1e-6)
        out[aid] = float(blocked.sum()) / denom
    return out


def assign_difficulty(label: LabelRecord) -> int:
    """Easiest KITTI category whose height/occlusion/truncation gates pass."""
    h = label.bbox_height
    for level in (EASY, MODERATE, HARD):
        if (h >= _MIN_HEIGHT[level]
                and label.occlusion <= _MAX_OCCLUSION[level]
                and label.truncation <= _MAX_TRUNCATION[level]):
            return level
    return IGNORED


def box_to_label(box: Box3D, stats: VisibilityStats, calib: CameraCalib,
                 score: float | None = None) -> LabelRecord:
    """Velodyne-frame box to a KITTI label record (camera frame).

    Boxes behind the image plane come back with occlusion 3 and full
    truncation, which difficulty assignment maps to Ignored.
    """
    center_cam = calib.velo_to_camera(box.center)[0]
    l, w, h = box.dims
    bottom = center_cam + np.array([0.0, h / 2.0, 0.0])
    ry = wrap_angle(-box.yaw - math.pi / 2.0)
    rect, in_front = project_box(box, calib)
    if not in_front:
        return LabelRecord(
            type="Car", truncation=1.0, occlusion=3, alpha=0.0,
            bbox2d=(0.0, 0.0, 0.0, 0.0), dims=(h, w, l),
            location=tuple(float(v) for v in bottom), rotation_y=ry, score=score,
        )
    left = min(max(rect[0], 0.0), float(calib.image_size[0]))
    top = min(max(rect[1], 0.0), float(calib.image_size[1]))
    right = min(max(rect[2], 0.0), float(calib.image_size[0]))
    bot = min(max(rect[3], 0.0), float(calib.image_size[1]))
    alpha = wrap_angle(ry - math.atan2(bottom[0], bottom[2]))
    return LabelRecord(
        type="Car", truncation=stats.truncation, occlusion=stats.occlusion_level,
        alpha=alpha, bbox2d=(left, top, right, bot), dims=(h, w, l),
        location=tuple(float(v) for v in bottom), rotation_y=ry, score=score,
    )


def label_to_box(label: LabelRecord) -> tuple[np.ndarray, float]:
    """Camera-frame (center, dims preserved) helper used by the evaluator."""
    h = label.dims[0]
    x, y, z = label.location
    return np.array([x, y - h / 2.0, z]), label.rotation_y


def shift_up(box: Box3D, amount: float) -> Box3D:
    return replace(box, center=box.center + np.array([0.0, 0.0, amount]))
