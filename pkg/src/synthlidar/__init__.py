"""Synthetic LiDAR dataset generation and evaluation toolkit."""

from .geometry import Box3D, Pose
from .presets import PRESET_NAMES, VariantPreset, load_preset
from .scene import RandomizationConfig, Scene, randomize_scene
from .raycast import SensorModel, build_accel, scan_frame
from .shading import ShadingParams, shade_frame
from .labels import CameraCalib, LabelRecord, ShrinkParams
from .evaluation import EvalReport, evaluate

__version__ = "0.1.0"

__all__ = [
    "Box3D", "Pose", "PRESET_NAMES", "VariantPreset", "load_preset",
    "RandomizationConfig", "Scene", "randomize_scene",
    "SensorModel", "build_accel", "scan_frame",
    "ShadingParams", "shade_frame",
    "CameraCalib", "LabelRecord", "ShrinkParams",
    "EvalReport", "evaluate",
    "__version__",
]
