import numpy as np
import pytest

from synthlidar.geometry import Pose
from synthlidar.scene import (
    Actor, RandomizationConfig, Scene, make_building, make_ground,
    make_parametric_vehicle, randomize_scene,
)


@pytest.fixture(scope="session")
def small_scene() -> Scene:
    """Deterministic small scene used by tracing and shading tests."""
    cfg = RandomizationConfig(vehicle_count_range=(3, 3), prop_count_range=(2, 2),
                              building_count_range=(2, 2))
    return randomize_scene(cfg, 42)


def single_vehicle_scene(distance: float = 10.0, yaw: float = np.pi / 2.0,
                         length: float = 4.5, width: float = 1.8,
                         height: float = 1.5) -> Scene:
    """One vehicle at the given distance, rotated to show its side (broadside
    for yaw = pi/2), over the default ground plane."""
    v = make_parametric_vehicle(length, width, height, seed=0)
    v.id = 0
    v.pose = Pose(position=np.array([distance, 0.0, 0.0]), yaw=yaw)
    return Scene(actors=[v], ground=make_ground(), seed=0)


def wall_scene(distance: float = 40.0, height: float = 12.0,
               width: float = 60.0) -> Scene:
    """A single tall wall facing the sensor, used for density comparisons."""
    wall = make_building((1.0, width, height), albedo=0.7)
    wall.id = 0
    wall.pose = Pose(position=np.array([distance, 0.0, 0.0]))
    return Scene(actors=[wall], ground=make_ground(), seed=0)
