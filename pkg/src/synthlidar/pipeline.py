"""The three pipeline stages: dense-frame generation, variant processing
into KITTI datasets, evaluation, and dataset statistics.

Every output byte is a pure function of (config, master seed, frame id);
frames are the unit of parallelism and reruns skip already-written frames.
"""

from __future__ import annotations

import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .geometry import Box3D, Pose
from .kitti_io import (
    KittiFrameSet, default_calib, frame_name, read_dense_frame, read_label,
    read_pointcloud, write_calib, write_dense_frame, write_label, write_pointcloud,
)
from .labels import (
    DIFFICULTY_NAMES, MIN_VISIBLE_POINTS, CameraCalib, LabelRecord, assign_difficulty,
    box_to_label, frame_occlusions, shift_up, shrink_box, visibility_stats,
)
from .presets import (
    VariantPreset, load_preset, load_preset_file, preset_from_dict, preset_to_dict,
)
from .raycast import build_accel, sample_depth_pseudolidar, scan_frame
from .scene import RandomizationConfig, Scene, randomize_scene
from .shading import apply_range_noise, apply_raydrop, frame_view, shade_frame
from . import evaluation

SENSOR_HEIGHT = 1.73  # meters, KITTI velodyne mount

_STREAM_SCENE, _STREAM_POSE, _STREAM_SHADE, _STREAM_NOISE = 0, 1, 2, 3


def derive_seed(master_seed: int, frame_id: int, stream: int) -> int:
    """Stable per-(frame, stream) seed derived from the master seed."""
    ss = np.random.SeedSequence([int(master_seed), int(frame_id), int(stream)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class PipelineConfig:
    frame_count: int = 15000
    train_ratio: float = 0.5
    preset: str = "intensity"
    output_root: Path = Path("dataset")
    master_seed: int = 0
    workers: int = 1
    scene: RandomizationConfig = field(default_factory=RandomizationConfig)

    def __post_init__(self):
        if self.frame_count <= 0:
            raise ValueError("frame_count must be > 0")
        if not (0.0 < self.train_ratio < 1.0):
            raise ValueError("train ratio must be in (0, 1)")


def _resolve_preset(preset) -> VariantPreset:
    if isinstance(preset, VariantPreset):
        return preset
    if isinstance(preset, dict):
        return preset_from_dict(preset)
    preset = str(preset)
    if preset.endswith((".yaml", ".yml")) or "/" in preset:
        return load_preset_file(preset)
    return load_preset(preset)


def _preset_ref(preset, preset_obj: VariantPreset):
    """Picklable form of a preset for worker processes."""
    return preset if isinstance(preset, str) else preset_to_dict(preset_obj)


def _worker_pool(workers: int) -> ProcessPoolExecutor:
    # Spawned (not forked) workers: forking a process whose threaded numba
    # kernels already initialized OpenMP aborts the child.
    return ProcessPoolExecutor(max_workers=workers,
                               mp_context=multiprocessing.get_context("spawn"))


# ---------------------------------------------------------------------------
# Stage 1: generate dense frames
# ---------------------------------------------------------------------------

def generate_dense_frame(scene: Scene, preset: VariantPreset, master_seed: int,
                         frame_id: int, accel=None):
    base_pose = Pose(position=np.array([0.0, 0.0, SENSOR_HEIGHT]))
    pose_seed = derive_seed(master_seed, frame_id, _STREAM_POSE)
    if preset.sensor.kind == "depth_sampled":
        return sample_depth_pseudolidar(scene, preset.sensor, base_pose, pose_seed,
                                        frame_id=frame_id, accel=accel)
    return scan_frame(scene, preset.sensor, base_pose, pose_seed,
                      frame_id=frame_id, accel=accel)


def _generate_one(out_root: str, preset_ref: str, frame_id: int, master_seed: int,
                  scene_cfg: dict) -> None:
    fs = KittiFrameSet(Path(out_root))
    df_path = fs.dense_dir / (frame_name(frame_id) + ".df")
    if df_path.exists():
        return
    preset = _resolve_preset(preset_ref)
    config = RandomizationConfig.from_dict(scene_cfg)
    scene_seed = derive_seed(master_seed, frame_id, _STREAM_SCENE)
    scene = randomize_scene(config, scene_seed)
    frame = generate_dense_frame(scene, preset, master_seed, frame_id)
    try:
        write_dense_frame(frame, df_path)
        (fs.scene_dir / (frame_name(frame_id) + ".yaml")).write_text(
            yaml.safe_dump(scene.to_dict(), sort_keys=False))
    except OSError as exc:
        raise OSError(f"frame {frame_name(frame_id)}: {exc}") from exc


def cmd_generate(out_root, preset, frame_count: int, master_seed: int,
                 train_ratio: float = 0.5, workers: int = 1,
                 scene_config: RandomizationConfig | None = None) -> None:
    """Generate frame_count dense frames plus split files; resumable."""
    preset_obj = _resolve_preset(preset)
    scene_config = scene_config or RandomizationConfig()
    fs = KittiFrameSet(Path(out_root))
    fs.make_dirs(dense=True)
    preset_ref = _preset_ref(preset, preset_obj)
    args = [(str(out_root), preset_ref, fid, master_seed, scene_config.to_dict())
            for fid in range(frame_count)]
    if workers <= 1:
        for a in args:
            _generate_one(*a)
    else:
        with _worker_pool(workers) as pool:
            list(pool.map(_generate_one, *zip(*args), chunksize=4))
    n_train = round(frame_count * train_ratio)
    fs.write_splits(list(range(n_train)), list(range(n_train, frame_count)))


# ---------------------------------------------------------------------------
# Stage 2: process dense frames into a KITTI dataset
# ---------------------------------------------------------------------------

def _quantize_intensity(values: np.ndarray) -> np.ndarray:
    """Round to the sensor's 8-bit intensity grid (yields exact zeros)."""
    return np.round(np.clip(values, 0.0, 1.0) * 255.0) / 255.0


def _sensor_frame_boxes(frame) -> dict[int, Box3D]:
    """World-space vehicle boxes expressed in the (possibly tilted) sensor frame.

    The residual pitch/roll misalignment from sensor-pose randomization is
    absorbed into the yaw-only box, like human annotations on uneven ground.
    """
    rot = frame.pose_matrix[:3, :3]
    pos = frame.pose_matrix[:3, 3]
    sensor_yaw = math.atan2(rot[1, 0], rot[0, 0])
    boxes = {}
    for a in frame.actors:
        if a["kind"] != 0:
            continue
        center = rot.T @ (np.array([a["cx"], a["cy"], a["cz"]]) - pos)
        boxes[int(a["id"])] = Box3D(center, np.array([a["dl"], a["dw"], a["dh"]]),
                                    float(a["yaw"]) - sensor_yaw)
    return boxes


def process_frame(frame, preset: VariantPreset, master_seed: int,
                  calib: CameraCalib | None = None):
    """Apply one variant's return selection, shading, and label pipeline.

    Returns (xyz, intensity, labels).
    """
    calib = calib or CameraCalib()
    mask = frame.points["azimuth"] % preset.azimuth_decimation == 0

    shade_seed = derive_seed(master_seed, frame.frame_id, _STREAM_SHADE)
    noise_seed = derive_seed(master_seed, frame.frame_id, _STREAM_NOISE)

    if preset.apply_shading:
        view = shade_frame(frame, preset.shading, shade_seed,
                           use_first=preset.use_first_hit, mask=mask)
        view = apply_raydrop(view, preset.shading.epsilon)
    else:
        view = frame_view(frame, use_first=preset.use_first_hit, mask=mask)
    if preset.range_noise:
        view = apply_range_noise(view, preset.shading.noise_sigma, noise_seed)

    keep = view.retained()
    xyz = view.xyz[keep].astype(np.float32)
    if preset.write_intensity:
        intensity = _quantize_intensity(view.intensity[keep]).astype(np.float32)
    else:
        intensity = np.zeros(keep.sum(), dtype=np.float32)

    labels = _build_labels(frame, preset, view, keep, mask, calib)
    return xyz, intensity, labels


def _build_labels(frame, preset, view, keep, mask, calib) -> list[LabelRecord]:
    boxes = _sensor_frame_boxes(frame)
    if not boxes:
        return []
    pts = view.xyz[keep]
    pts_actor = view.actor_id[keep]

    first = frame_view(frame, use_first=True, mask=mask)
    occl = frame_occlusions(boxes, first.xyz, first.actor_id)

    labels = []
    for aid, box in sorted(boxes.items()):
        if preset.label_mode == "original":
            candidate = box
        else:
            shifted = shift_up(box, preset.shrink.upward_shift)
            inside = shifted.contains(pts) & (pts_actor == aid)
            if int(inside.sum()) < MIN_VISIBLE_POINTS:
                continue
            candidate = shrink_box(shifted, pts[inside], preset.shrink).box
        stats = visibility_stats(candidate, aid, pts, pts_actor, occl.get(aid, 0.0), calib)
        if stats.num_points < MIN_VISIBLE_POINTS:
            continue
        labels.append(box_to_label(candidate, stats, calib))
    return labels


def _process_one(dense_root: str, out_root: str, preset_ref: str, master_seed: int,
                 frame_id: int) -> None:
    dense_fs = KittiFrameSet(Path(dense_root))
    out_fs = KittiFrameSet(Path(out_root))
    preset = _resolve_preset(preset_ref)
    frame = read_dense_frame(dense_fs.dense_dir / (frame_name(frame_id) + ".df"))
    calib = CameraCalib()
    xyz, intensity, labels = process_frame(frame, preset, master_seed, calib)
    name = frame_name(frame_id)
    write_pointcloud(xyz, intensity, out_fs.velodyne_dir / (name + ".bin"))
    write_label(labels, out_fs.label_dir / (name + ".txt"))
    write_calib(default_calib(calib), out_fs.calib_dir / (name + ".txt"))


def cmd_process(dense_root, out_root, preset, master_seed: int, workers: int = 1) -> None:
    """Process every dense frame under dense_root into a KITTI dataset."""
    preset_obj = _resolve_preset(preset)  # validates the name early
    dense_fs = KittiFrameSet(Path(dense_root))
    frame_ids = dense_fs.frame_ids("dense", ".df")
    if not frame_ids:
        raise FileNotFoundError(f"no dense frames under {dense_fs.dense_dir}")
    out_fs = KittiFrameSet(Path(out_root))
    out_fs.make_dirs()
    preset_ref = _preset_ref(preset, preset_obj)
    args = [(str(dense_root), str(out_root), preset_ref, master_seed, fid)
            for fid in frame_ids]
    if workers <= 1:
        for a in args:
            _process_one(*a)
    else:
        with _worker_pool(workers) as pool:
            list(pool.map(_process_one, *zip(*args), chunksize=4))
    for split in ("train", "val"):
        src = dense_fs.imagesets_dir / f"{split}.txt"
        if src.exists():
            out_fs.imagesets_dir.mkdir(parents=True, exist_ok=True)
            (out_fs.imagesets_dir / f"{split}.txt").write_text(src.read_text())


# ---------------------------------------------------------------------------
# Stage 3: evaluation and statistics
# ---------------------------------------------------------------------------

def _read_label_dir(path: Path) -> dict[int, list[LabelRecord]]:
    return {int(p.stem): read_label(p) for p in sorted(Path(path).glob("*.txt"))}


def cmd_evaluate(gt_dir, det_dir, out_dir=None) -> evaluation.EvalReport:
    gts = _read_label_dir(Path(gt_dir))
    dets = _read_label_dir(Path(det_dir))
    report = evaluation.evaluate(dets, gts)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(report.to_text() + "\n")
        (out / "report.csv").write_text(report.to_csv())
    return report


def cmd_stats(root, out_dir) -> dict:
    """Box-center scatter data, per-difficulty counts, and the intensity
    histogram (CSV plus PNG plots)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fs = KittiFrameSet(Path(root))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    calib = CameraCalib()
    rot = calib.velo_to_cam[:, :3]
    trans = calib.velo_to_cam[:, 3]

    centers = []
    counts = {"Easy": 0, "Moderate": 0, "Hard": 0, "Ignored": 0}
    for fid in fs.frame_ids("label_2", ".txt"):
        for rec in read_label(fs.label_dir / (frame_name(fid) + ".txt")):
            cam = np.array(rec.location)
            velo = rot.T @ (cam - trans)
            centers.append((fid, velo[0], velo[1], velo[2]))
            counts[DIFFICULTY_NAMES[assign_difficulty(rec)]] += 1

    with open(out / "box_centers.csv", "w") as f:
        f.write("frame,x,y,z\n")
        for fid, x, y, z in centers:
            f.write(f"{fid},{x:.3f},{y:.3f},{z:.3f}\n")
    with open(out / "difficulty_counts.csv", "w") as f:
        f.write("difficulty,count\n")
        for name, c in counts.items():
            f.write(f"{name},{c}\n")

    all_intensity = []
    for fid in fs.frame_ids("velodyne", ".bin"):
        _, inten = read_pointcloud(fs.velodyne_dir / (frame_name(fid) + ".bin"))
        all_intensity.append(inten)
    intensity = np.concatenate(all_intensity) if all_intensity else np.zeros(0)

    hist, edges = np.histogram(intensity, bins=64, range=(0.0, 1.0))
    with open(out / "intensity_histogram.csv", "w") as f:
        f.write("bin_center,count\n")
        for c, lo, hi in zip(hist, edges[:-1], edges[1:]):
            f.write(f"{(lo + hi) / 2:.5f},{c}\n")

    mean = float(intensity.mean()) if len(intensity) else float("nan")
    zero_fraction = float((intensity == 0.0).mean()) if len(intensity) else float("nan")
    with open(out / "summary.csv", "w") as f:
        f.write("metric,value\n")
        f.write(f"num_labels,{sum(counts.values())}\n")
        f.write(f"num_points,{len(intensity)}\n")
        f.write(f"intensity_mean,{mean:.6f}\n")
        f.write(f"intensity_zero_fraction,{zero_fraction:.6f}\n")

    if centers:
        arr = np.array([(x, y, z) for _, x, y, z in centers])
        fig, axes = plt.subplots(1, 2, figsize=(11, 4))
        axes[0].scatter(arr[:, 0], arr[:, 2], s=2)
        axes[0].set_xlabel("x forward [m]")
        axes[0].set_ylabel("z up [m]")
        axes[0].set_title("box centers, side view")
        axes[1].scatter(arr[:, 0], arr[:, 1], s=2)
        axes[1].set_xlabel("x forward [m]")
        axes[1].set_ylabel("y left [m]")
        axes[1].set_title("box centers, BEV")
        fig.tight_layout()
        fig.savefig(out / "box_centers.png", dpi=120)
        plt.close(fig)
    if len(intensity):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.bar((edges[:-1] + edges[1:]) / 2, hist, width=edges[1] - edges[0])
        ax.set_xlabel("intensity")
        ax.set_ylabel("points")
        ax.set_title(f"intensity distribution (mean {mean:.3f})")
        fig.tight_layout()
        fig.savefig(out / "intensity_histogram.png", dpi=120)
        plt.close(fig)

    return {"centers": len(centers), "counts": counts,
            "intensity_mean": mean, "intensity_zero_fraction": zero_fraction}
