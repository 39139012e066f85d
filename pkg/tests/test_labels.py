import math

import numpy as np
import pytest

from synthlidar.geometry import Box3D
from synthlidar.labels import (
    EASY, HARD, IGNORED, MODERATE, CameraCalib, LabelRecord, ShrinkParams,
    assign_difficulty, box_to_label, frame_occlusions, occlusion_level,
    shift_up, shrink_box, visibility_stats,
)


class TestShrinkBox:
    def test_worked_example_exact(self):
        """[PAPER] dims (4.50, 1.80, 1.50) with point extents (4.10, 1.70, 1.40):
        reduction a + b*d per axis gives dims (4.20, 1.725, 1.445) exactly."""
        box = Box3D(center=[0, 0, 0.75], dims=[4.5, 1.8, 1.5], yaw=0.0)
        pts = np.array([
            [-2.05, -0.85, 0.05],
            [2.05, 0.85, 1.45],
        ])
        out = shrink_box(box, pts, ShrinkParams())
        assert out.had_points
        assert out.box.dims[0] == pytest.approx(4.20, abs=1e-12)
        assert out.box.dims[1] == pytest.approx(1.725, abs=1e-12)
        assert out.box.dims[2] == pytest.approx(1.445, abs=1e-12)

    def test_floor_at_point_extent(self):
        # Points span the full box: the floor keeps every dimension at the
        # point extent, so nothing shrinks.
        box = Box3D(center=[0, 0, 0.5], dims=[4.0, 2.0, 1.0], yaw=0.0)
        pts = np.array([[-2.0, -1.0, 0.0], [2.0, 1.0, 1.0]])
        out = shrink_box(box, pts, ShrinkParams())
        assert out.box.dims == pytest.approx([4.0, 2.0, 1.0])
        assert np.all(out.box.contains(pts, tol=1e-9))

    def test_recenters_on_points(self):
        box = Box3D(center=[0, 0, 0.75], dims=[4.5, 1.8, 1.5], yaw=0.0)
        pts = np.array([[0.0, 0.0, 0.1], [2.2, 0.8, 0.9]])  # off-center cluster
        out = shrink_box(box, pts, ShrinkParams())
        assert out.box.center[0] == pytest.approx(1.1)  # length midpoint
        assert out.box.center[1] == pytest.approx(0.4)  # width midpoint
        # Height: bottom anchored at the lowest point.
        assert out.box.center[2] - out.box.dims[2] / 2.0 == pytest.approx(0.1)

    def test_rotated_box(self):
        yaw = math.pi / 3.0
        box = Box3D(center=[5.0, 2.0, 0.75], dims=[4.5, 1.8, 1.5], yaw=yaw)
        local = np.array([[-2.05, -0.85, -0.7], [2.05, 0.85, 0.7]])
        rot = np.array([[math.cos(yaw), -math.sin(yaw), 0],
                        [math.sin(yaw), math.cos(yaw), 0], [0, 0, 1.0]])
        pts = local @ rot.T + box.center
        out = shrink_box(box, pts, ShrinkParams())
        assert out.box.dims == pytest.approx([4.20, 1.725, 1.445], abs=1e-9)
        assert out.box.yaw == pytest.approx(yaw)

    def test_no_points(self):
        box = Box3D(center=[0, 0, 0.75], dims=[4.5, 1.8, 1.5])
        out = shrink_box(box, np.zeros((0, 3)), ShrinkParams())
        assert not out.had_points
        assert out.box is box

    def test_param_validation(self):
        with pytest.raises(ValueError):
            ShrinkParams(length=(-0.1, 0.25))
        with pytest.raises(ValueError):
            ShrinkParams(width=(0.05, 1.0))


class TestShiftUp:
    def test_vertical_only(self):
        box = Box3D(center=[1, 2, 0.7], dims=[4, 2, 1.4], yaw=0.3)
        up = shift_up(box, 0.05)
        assert up.center == pytest.approx([1, 2, 0.75])
        assert up.dims == pytest.approx(box.dims)
        assert up.yaw == box.yaw


class TestDifficulty:
    def make(self, height=50.0, occ=0, trunc=0.0):
        return LabelRecord(bbox2d=(100.0, 100.0, 150.0, 100.0 + height),
                           occlusion=occ, truncation=trunc)

    def test_easy(self):
        assert assign_difficulty(self.make(45.0, 0, 0.10)) == EASY

    def test_moderate_by_height(self):
        assert assign_difficulty(self.make(30.0, 0, 0.0)) == MODERATE

    def test_moderate_by_occlusion(self):
        assert assign_difficulty(self.make(45.0, 1, 0.0)) == MODERATE

    def test_hard_by_truncation(self):
        assert assign_difficulty(self.make(45.0, 0, 0.45)) == HARD

    def test_ignored(self):
        assert assign_difficulty(self.make(20.0, 0, 0.0)) == IGNORED
        assert assign_difficulty(self.make(45.0, 3, 0.0)) == IGNORED
        assert assign_difficulty(self.make(45.0, 0, 0.6)) == IGNORED

    def test_boundaries_inclusive(self):
        assert assign_difficulty(self.make(40.0, 0, 0.15)) == EASY
        assert assign_difficulty(self.make(25.0, 1, 0.30)) == MODERATE
        assert assign_difficulty(self.make(25.0, 2, 0.50)) == HARD


class TestOcclusionLevel:
    def test_cut_points(self):
        assert occlusion_level(0.0) == 0
        assert occlusion_level(0.19) == 0
        assert occlusion_level(0.2) == 1
        assert occlusion_level(0.59) == 1
        assert occlusion_level(0.6) == 2
        assert occlusion_level(1.0) == 2


class TestFrameOcclusions:
    def test_unoccluded(self):
        box = Box3D(center=[10, 0, 0.75], dims=[4, 2, 1.5])
        pts = np.array([[9.0, 0.0, 0.8], [10.0, 0.5, 0.8]])
        occ = frame_occlusions({0: box}, pts, np.array([0, 0]))
        assert occ[0] == 0.0

    def test_fully_blocked(self):
        box = Box3D(center=[20, 0, 0.75], dims=[4, 2, 1.5])
        # First hits belong to a foreign actor well in front of the box; the
        # extended rays would pass through the box volume.
        pts = np.array([[5.0, 0.0, 0.2], [5.0, 0.2, 0.2]])
        occ = frame_occlusions({0: box}, pts, np.array([1, 1]))
        assert occ[0] == 1.0

    def test_mixed(self):
        box = Box3D(center=[20, 0, 0.75], dims=[4, 2, 1.5])
        pts = np.array([[5.0, 0.0, 0.2], [19.0, 0.0, 0.8]])
        occ = frame_occlusions({0: box}, pts, np.array([1, 0]))
        assert occ[0] == pytest.approx(0.5)

    def test_rays_missing_box_ignored(self):
        box = Box3D(center=[20, 0, 0.75], dims=[4, 2, 1.5])
        pts = np.array([[5.0, 30.0, 0.8]])
        occ = frame_occlusions({0: box}, pts, np.array([1]))
        assert occ[0] == 0.0


class TestCameraProjection:
    def test_velo_to_cam_axes(self):
        calib = CameraCalib()
        cam = calib.velo_to_camera(np.array([[10.0, 2.0, 1.0]]))[0]
        # x forward -> z depth, y left -> -x, z up -> -y (with 8 cm drop).
        assert cam == pytest.approx([-2.0, -1.08, 10.0])

    def test_principal_point(self):
        calib = CameraCalib()
        px = calib.project(np.array([[0.0, 0.0, 10.0]]))[0]
        assert px == pytest.approx([calib.cx, calib.cy])

    def test_label_round_trip_location(self):
        calib = CameraCalib()
        box = Box3D(center=[15.0, 1.0, 0.75], dims=[4.2, 1.7, 1.5], yaw=0.2)
        stats = visibility_stats(box, 0, np.zeros((0, 3)), np.zeros(0, dtype=int),
                                 0.0, calib)
        rec = box_to_label(box, stats, calib)
        # location is the bottom center in camera coordinates: box bottom is
        # at velodyne z = 0, i.e., camera y = -0 - 0.08.
        assert rec.location[1] == pytest.approx(-0.08)
        assert rec.location[2] == pytest.approx(15.0)
        assert rec.dims == pytest.approx((1.5, 1.7, 4.2))

    def test_rotation_and_alpha_conventions(self):
        calib = CameraCalib()
        box = Box3D(center=[15.0, 0.0, 0.75], dims=[4.2, 1.7, 1.5], yaw=0.0)
        stats = visibility_stats(box, 0, np.zeros((0, 3)), np.zeros(0, dtype=int), 0.0, calib)
        rec = box_to_label(box, stats, calib)
        assert rec.rotation_y == pytest.approx(-math.pi / 2.0)
        # Object dead ahead: alpha equals rotation_y.
        assert rec.alpha == pytest.approx(rec.rotation_y, abs=1e-6)

    def test_behind_camera_ignored(self):
        calib = CameraCalib()
        box = Box3D(center=[-10.0, 0.0, 0.75], dims=[4.2, 1.7, 1.5])
        stats = visibility_stats(box, 0, np.zeros((0, 3)), np.zeros(0, dtype=int), 0.0, calib)
        rec = box_to_label(box, stats, calib)
        assert rec.occlusion == 3 and rec.truncation == 1.0
        assert assign_difficulty(rec) == IGNORED

    def test_truncation_fraction(self):
        calib = CameraCalib()
        # Far left: projection partially outside the image.
        box = Box3D(center=[8.0, 7.0, 0.75], dims=[4.2, 1.7, 1.5], yaw=0.0)
        stats = visibility_stats(box, 0, np.zeros((0, 3)), np.zeros(0, dtype=int), 0.0, calib)
        assert 0.0 < stats.truncation < 1.0
        rec = box_to_label(box, stats, calib)
        assert rec.bbox2d[0] == 0.0  # clipped at the image edge

    def test_point_counting(self):
        calib = CameraCalib()
        box = Box3D(center=[10.0, 0.0, 0.75], dims=[4.0, 2.0, 1.5])
        pts = np.array([[10.0, 0.0, 0.5], [10.0, 0.3, 1.0], [30.0, 0.0, 0.5]])
        actors = np.array([3, 3, 3])
        stats = visibility_stats(box, 3, pts, actors, 0.0, calib)
        assert stats.num_points == 2
        stats_other = visibility_stats(box, 4, pts, actors, 0.0, calib)
        assert stats_other.num_points == 0
