import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from synthlidar.geometry import (
    Box3D, Pose, clip_convex, polygon_area, rect_intersection_area,
    rotation_matrix, wrap_angle,
)


def test_rotation_matrix_yaw_quarter_turn():
    r = rotation_matrix(math.pi / 2.0)
    assert np.allclose(r @ [1, 0, 0], [0, 1, 0], atol=1e-12)


def test_rotation_matrix_orthonormal():
    r = rotation_matrix(0.3, -0.2, 1.1)
    assert np.allclose(r @ r.T, np.eye(3), atol=1e-12)
    assert np.isclose(np.linalg.det(r), 1.0)


def test_pose_round_trip():
    pose = Pose(position=np.array([1.0, -2.0, 3.0]), yaw=0.7, pitch=0.1, roll=-0.2)
    pts = np.random.default_rng(0).normal(size=(50, 3))
    back = pose.inverse_transform_points(pose.transform_points(pts))
    assert np.allclose(back, pts, atol=1e-12)


@given(st.floats(-50, 50))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


def test_polygon_area_unit_square():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    assert polygon_area(sq) == pytest.approx(1.0)
    assert polygon_area(sq[::-1]) == pytest.approx(-1.0)


def test_box_corners_extents():
    box = Box3D(center=[1, 2, 3], dims=[4, 2, 1], yaw=0.0)
    c = box.corners()
    assert np.allclose(c.min(axis=0), [-1, 1, 2.5])
    assert np.allclose(c.max(axis=0), [3, 3, 3.5])


def test_box_contains_rotated():
    box = Box3D(center=[0, 0, 0], dims=[4, 2, 2], yaw=math.pi / 2.0)
    # After the quarter turn the length axis lies along y.
    assert box.contains(np.array([[0.0, 1.9, 0.0]]))[0]
    assert not box.contains(np.array([[1.9, 0.0, 0.0]]))[0]


def test_box_rejects_nonpositive_dims():
    with pytest.raises(ValueError):
        Box3D(center=[0, 0, 0], dims=[1, 0, 1])


def test_clip_convex_identical_squares():
    sq = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    out = clip_convex(sq, sq)
    assert abs(polygon_area(out)) == pytest.approx(1.0)


def test_rect_intersection_axis_aligned():
    a = Box3D([0, 0, 0], [2, 2, 1]).bev_corners()
    b = Box3D([1, 1, 0], [2, 2, 1]).bev_corners()
    assert rect_intersection_area(a, b) == pytest.approx(1.0)


def test_rect_intersection_disjoint():
    a = Box3D([0, 0, 0], [2, 2, 1]).bev_corners()
    b = Box3D([10, 0, 0], [2, 2, 1]).bev_corners()
    assert rect_intersection_area(a, b) == 0.0


def test_rect_intersection_45_degrees():
    # Two concentric unit squares at 45 degrees intersect in a regular
    # octagon of area 2*(sqrt(2)-1).
    a = Box3D([0, 0, 0], [1, 1, 1]).bev_corners()
    b = Box3D([0, 0, 0], [1, 1, 1], yaw=math.pi / 4.0).bev_corners()
    assert rect_intersection_area(a, b) == pytest.approx(2.0 * (math.sqrt(2.0) - 1.0), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.5, 4), st.floats(0.5, 4),
       st.floats(0, 2 * math.pi))
def test_rect_intersection_bounded_and_symmetric(cx, cy, l, w, yaw):
    a = Box3D([0, 0, 0], [2, 3, 1], yaw=0.4).bev_corners()
    b = Box3D([cx, cy, 0], [l, w, 1], yaw=yaw).bev_corners()
    ab = rect_intersection_area(a, b)
    ba = rect_intersection_area(b, a)
    assert ab == pytest.approx(ba, abs=1e-9)
    assert 0.0 <= ab <= min(6.0, l * w) + 1e-9
