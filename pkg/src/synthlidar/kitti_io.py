"""Bit-exact readers/writers for KITTI-format files and the dense
intermediate container.

Directory layout of a generated dataset:

    <root>/velodyne/NNNNNN.bin      float32 (x, y, z, intensity) records
    <root>/label_2/NNNNNN.txt       KITTI label lines
    <root>/calib/NNNNNN.txt         projection / transform blocks
    <root>/ImageSets/{train,val}.txt
    <root>/dense/NNNNNN.df          versioned dense-frame container
    <root>/scenes/NNNNNN.yaml       serialized scene (regenerable inputs)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .labels import LabelRecord
from .raycast import ACTOR_DTYPE, POINT_DTYPE, DenseFrame


class FormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Point clouds
# ---------------------------------------------------------------------------

def write_pointcloud(points: np.ndarray, intensities: np.ndarray, path) -> None:
    """KITTI velodyne binary: consecutive little-endian float32 (x, y, z, i)."""
    points = np.asarray(points, dtype=np.float32).reshape(-1, 3)
    intensities = np.asarray(intensities, dtype=np.float32).reshape(-1)
    if len(points) != len(intensities):
        raise ValueError("points and intensities length mismatch")
    if len(intensities) and (intensities.min() < 0 or intensities.max() > 1):
        raise ValueError("intensities must be in [0, 1]")
    data = np.empty((len(points), 4), dtype="<f4")
    data[:, :3] = points
    data[:, 3] = intensities
    Path(path).write_bytes(data.tobytes())


def read_pointcloud(path) -> tuple[np.ndarray, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) % 16 != 0:
        raise FormatError(f"{path}: length {len(raw)} is not a multiple of 16 bytes")
    data = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    return data[:, :3].copy(), data[:, 3].copy()


# ---------------------------------------------------------------------------
# Labels
# ---------------------------------------------------------------------------

def _format_label(rec: LabelRecord) -> str:
    fields = [
        rec.type,
        f"{rec.truncation:.2f}",
        str(int(rec.occlusion)),
        f"{rec.alpha:.2f}",
        f"{rec.bbox2d[0]:.2f}", f"{rec.bbox2d[1]:.2f}",
        f"{rec.bbox2d[2]:.2f}", f"{rec.bbox2d[3]:.2f}",
        f"{rec.dims[0]:.2f}", f"{rec.dims[1]:.2f}", f"{rec.dims[2]:.2f}",
        f"{rec.location[0]:.2f}", f"{rec.location[1]:.2f}", f"{rec.location[2]:.2f}",
        f"{rec.rotation_y:.2f}",
    ]
    if rec.score is not None:
        fields.append(f"{rec.score:.2f}")
    return " ".join(fields)


def write_label(records: list[LabelRecord], path) -> None:
    lines = [_format_label(r) for r in records]
    Path(path).write_text("".join(line + "\n" for line in lines))


def parse_label_line(line: str, lineno: int = 0) -> LabelRecord:
    parts = line.split()
    if len(parts) not in (15, 16):
        raise FormatError(f"line {lineno}: expected 15 or 16 fields, got {len(parts)}")
    vals = [float(v) for v in parts[1:]]
    return LabelRecord(
        type=parts[0],
        truncation=vals[0],
        occlusion=int(vals[1]),
        alpha=vals[2],
        bbox2d=tuple(vals[3:7]),
        dims=tuple(vals[7:10]),
        location=tuple(vals[10:13]),
        rotation_y=vals[13],
        score=vals[14] if len(vals) > 14 else None,
    )


def read_label(path) -> list[LabelRecord]:
    records = []
    for i, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if line.strip():
            records.append(parse_label_line(line, i))
    return records


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------

@dataclass
class CalibBlock:
    P0: np.ndarray = field(default_factory=lambda: np.zeros((3, 4)))
    P1: np.ndarray = field(default_factory=lambda: np.zeros((3, 4)))
    P2: np.ndarray = field(default_factory=lambda: np.zeros((3, 4)))
    P3: np.ndarray = field(default_factory=lambda: np.zeros((3, 4)))
    R0_rect: np.ndarray = field(default_factory=lambda: np.eye(3))
    Tr_velo_to_cam: np.ndarray = field(default_factory=lambda: np.zeros((3, 4)))
    Tr_imu_to_velo: np.ndarray = field(default_factory=lambda: np.hstack([np.eye(3), np.zeros((3, 1))]))


def default_calib(camera_calib=None) -> CalibBlock:
    from .labels import CameraCalib
    cam = camera_calib or CameraCalib()
    p = cam.projection_matrix()
    return CalibBlock(P0=p.copy(), P1=p.copy(), P2=p.copy(), P3=p.copy(),
                      Tr_velo_to_cam=cam.velo_to_cam.copy())


def write_calib(calib: CalibBlock, path) -> None:
    def fmt(name, mat):
        return name + ": " + " ".join(f"{v:.12e}" for v in np.asarray(mat).ravel())
    lines = [
        fmt("P0", calib.P0), fmt("P1", calib.P1), fmt("P2", calib.P2), fmt("P3", calib.P3),
        fmt("R0_rect", calib.R0_rect),
        fmt("Tr_velo_to_cam", calib.Tr_velo_to_cam),
        fmt("Tr_imu_to_velo", calib.Tr_imu_to_velo),
    ]
    Path(path).write_text("".join(line + "\n" for line in lines))


def read_calib(path) -> CalibBlock:
    shapes = {"P0": (3, 4), "P1": (3, 4), "P2": (3, 4), "P3": (3, 4),
              "R0_rect": (3, 3), "Tr_velo_to_cam": (3, 4), "Tr_imu_to_velo": (3, 4)}
    out = {}
    for line in Path(path).read_text().splitlines():
        if ":" not in line:
            continue
        name, rest = line.split(":", 1)
        name = name.strip()
        if name in shapes:
            vals = np.array([float(v) for v in rest.split()])
            out[name] = vals.reshape(shapes[name])
    return CalibBlock(**out)


# ---------------------------------------------------------------------------
# Dense frames
# ---------------------------------------------------------------------------

DF_MAGIC = b"SLDF"
DF_VERSION = 1
_DF_HEADER = struct.Struct("<4sIQQII d")  # magic, version, frame_id, n_points, n_actors, n_channels, az_step


def write_dense_frame(frame: DenseFrame, path) -> None:
    buf = bytearray()
    buf += _DF_HEADER.pack(DF_MAGIC, DF_VERSION, frame.frame_id, len(frame.points),
                           len(frame.actors), frame.channels, frame.azimuth_step_deg)
    buf += struct.pack("<I", frame.azimuth_bins)
    buf += np.ascontiguousarray(frame.pose_matrix, dtype="<f8").tobytes()
    buf += np.ascontiguousarray(frame.channel_origins, dtype="<f8").tobytes()
    buf += np.ascontiguousarray(frame.actors, dtype=ACTOR_DTYPE).tobytes()
    buf += np.ascontiguousarray(frame.points, dtype=POINT_DTYPE).tobytes()
    Path(path).write_bytes(bytes(buf))


def read_dense_frame(path) -> DenseFrame:
    raw = Path(path).read_bytes()
    if len(raw) < _DF_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, frame_id, n_points, n_actors, n_channels, az_step = \
        _DF_HEADER.unpack_from(raw, 0)
    if magic != DF_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != DF_VERSION:
        raise FormatError(f"{path}: unsupported dense-frame version {version}")
    off = _DF_HEADER.size
    (azimuth_bins,) = struct.unpack_from("<I", raw, off)
    off += 4
    expected = off + 16 * 8 + n_channels * 3 * 8 + n_actors * ACTOR_DTYPE.itemsize \
        + n_points * POINT_DTYPE.itemsize
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(raw)}")
    pose = np.frombuffer(raw, dtype="<f8", count=16, offset=off).reshape(4, 4).copy()
    off += 16 * 8
    origins = np.frombuffer(raw, dtype="<f8", count=n_channels * 3, offset=off).reshape(-1, 3).copy()
    off += n_channels * 3 * 8
    actors = np.frombuffer(raw, dtype=ACTOR_DTYPE, count=n_actors, offset=off).copy()
    off += n_actors * ACTOR_DTYPE.itemsize
    points = np.frombuffer(raw, dtype=POINT_DTYPE, count=n_points, offset=off).copy()
    return DenseFrame(frame_id=frame_id, pose_matrix=pose, azimuth_step_deg=az_step,
                      channels=n_channels, azimuth_bins=azimuth_bins,
                      channel_origins=origins, points=points, actors=actors)


# ---------------------------------------------------------------------------
# Dataset layout
# ---------------------------------------------------------------------------

def frame_name(frame_id: int) -> str:
    return f"{frame_id:06d}"


@dataclass
class KittiFrameSet:
    root: Path

    def __post_init__(self):
        self.root = Path(self.root)

    @property
    def velodyne_dir(self) -> Path:
        return self.root / "velodyne"

    @property
    def label_dir(self) -> Path:
        return self.root / "label_2"

    @property
    def calib_dir(self) -> Path:
        return self.root / "calib"

    @property
    def dense_dir(self) -> Path:
        return self.root / "dense"

    @property
    def scene_dir(self) -> Path:
        return self.root / "scenes"

    @property
    def imagesets_dir(self) -> Path:
        return self.root / "ImageSets"

    def make_dirs(self, dense: bool = False) -> None:
        for d in (self.velodyne_dir, self.label_dir, self.calib_dir, self.imagesets_dir):
            d.mkdir(parents=True, exist_ok=True)
        if dense:
            self.dense_dir.mkdir(parents=True, exist_ok=True)
            self.scene_dir.mkdir(parents=True, exist_ok=True)

    def write_splits(self, train_ids: list[int], val_ids: list[int]) -> None:
        self.imagesets_dir.mkdir(parents=True, exist_ok=True)
        (self.imagesets_dir / "train.txt").write_text(
            "".join(frame_name(i) + "\n" for i in train_ids))
        (self.imagesets_dir / "val.txt").write_text(
            "".join(frame_name(i) + "\n" for i in val_ids))

    def read_split(self, split: str) -> list[int]:
        path = self.imagesets_dir / f"{split}.txt"
        return [int(line) for line in path.read_text().split()]

    def frame_ids(self, subdir: str = "velodyne", suffix: str = ".bin") -> list[int]:
        d = self.root / subdir
        if not d.is_dir():
            return []
        return sorted(int(p.stem) for p in d.glob(f"*{suffix}"))

    def validate(self) -> None:
        """Every split id must have velodyne, label, and calib files."""
        for split in ("train", "val"):
            path = self.imagesets_dir / f"{split}.txt"
            if not path.exists():
                continue
            for fid in self.read_split(split):
                name = frame_name(fid)
                for d, suffix in ((self.velodyne_dir, ".bin"), (self.label_dir, ".txt"),
                                  (self.calib_dir, ".txt")):
                    if not (d / (name + suffix)).exists():
                        raise FormatError(f"frame {name}: missing {d.name}/{name}{suffix}")
