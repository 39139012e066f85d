"""The eight sensor/processing variant presets and their config files.

Preset names: first_hit, strongest, strongest_origboxes, depth, dual,
noise, intensity, raydrop. Each is backed by a YAML file under
``synthlidar/presets/`` and can be overridden by a user-supplied file.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .labels import ShrinkParams
from .raycast import CameraConfig, DualBlock, PoseRandomization, SensorModel
from .shading import ShadingParams

PRESET_NAMES = (
    "first_hit", "strongest", "strongest_origboxes", "depth",
    "dual", "noise", "intensity", "raydrop",
)

DEFAULT_PRESET = "intensity"


class UnknownPresetError(ValueError):
    def __init__(self, name: str):
        super().__init__(
            f"unknown preset {name!r}; valid presets: {', '.join(PRESET_NAMES)}")


@dataclass
class VariantPreset:
    name: str
    sensor: SensorModel
    use_first_hit: bool = False
    azimuth_decimation: int = 2
    range_noise: bool = False
    apply_shading: bool = False
    write_intensity: bool = False
    label_mode: str = "shrunk"  # "shrunk" | "original"
    shading: ShadingParams = field(default_factory=ShadingParams)
    shrink: ShrinkParams = field(default_factory=ShrinkParams)

    def __post_init__(self):
        if self.label_mode not in ("shrunk", "original"):
            raise ValueError(f"invalid label mode {self.label_mode!r}")
        if self.azimuth_decimation < 1:
            raise ValueError("azimuth decimation must be >= 1")


def _sensor_from_dict(d: dict) -> SensorModel:
    kwargs = dict(d)
    if "pose_randomization" in kwargs:
        kwargs["pose_randomization"] = PoseRandomization(**kwargs["pose_randomization"])
    if "camera" in kwargs:
        kwargs["camera"] = CameraConfig(**kwargs["camera"])
    for key in ("upper", "lower"):
        if key in kwargs and kwargs[key] is not None:
            block = dict(kwargs[key])
            block["fov_deg"] = tuple(block["fov_deg"])
            kwargs[key] = DualBlock(**block)
    if "fov_deg" in kwargs:
        kwargs["fov_deg"] = tuple(kwargs["fov_deg"])
    return SensorModel(**kwargs)


def preset_from_dict(d: dict) -> VariantPreset:
    proc = d.get("processing", {})
    labels_cfg = d.get("labels", {})
    return VariantPreset(
        name=d["name"],
        sensor=_sensor_from_dict(d.get("sensor", {})),
        use_first_hit=proc.get("return", "last") == "first",
        azimuth_decimation=int(proc.get("azimuth_decimation", 2)),
        range_noise=bool(proc.get("range_noise", False)),
        apply_shading=bool(proc.get("apply_shading", False)),
        write_intensity=bool(proc.get("write_intensity", False)),
        label_mode=labels_cfg.get("mode", "shrunk"),
        shading=ShadingParams.from_dict(d.get("shading", {})),
        shrink=ShrinkParams.from_dict(labels_cfg.get("shrink", {})),
    )


def preset_to_dict(p: VariantPreset) -> dict:
    """Inverse of preset_from_dict (used to hand presets to worker processes)."""
    sensor = dataclasses.asdict(p.sensor)
    return {
        "name": p.name,
        "sensor": {k: v for k, v in sensor.items() if v is not None},
        "processing": {
            "return": "first" if p.use_first_hit else "last",
            "azimuth_decimation": p.azimuth_decimation,
            "range_noise": p.range_noise,
            "apply_shading": p.apply_shading,
            "write_intensity": p.write_intensity,
        },
        "labels": {"mode": p.label_mode, "shrink": dataclasses.asdict(p.shrink)},
        "shading": dataclasses.asdict(p.shading),
    }


def load_preset_file(path) -> VariantPreset:
    with open(path) as f:
        return preset_from_dict(yaml.safe_load(f))


def load_preset(name: str) -> VariantPreset:
    if name not in PRESET_NAMES:
        raise UnknownPresetError(name)
    ref = resources.files("synthlidar").joinpath(f"presets/{name}.yaml")
    return preset_from_dict(yaml.safe_load(ref.read_text()))


def preset_path(name: str) -> Path:
    if name not in PRESET_NAMES:
        raise UnknownPresetError(name)
    return Path(str(resources.files("synthlidar").joinpath(f"presets/{name}.yaml")))
