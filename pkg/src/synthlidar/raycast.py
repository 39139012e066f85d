"""BVH-accelerated ray casting with glass-penetrating dual returns.

Scan geometry covers a uniform 64-channel sensor, the dual-optical-center
layout (narrow upper block, wide lower block), and a depth-camera
pseudo-LiDAR. The tracing kernels are numba-compiled; per-ray results are
written to independent slots so output is reproducible at any thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from .geometry import Pose
from .scene import GLASS, Scene

MAX_RANGE_DEFAULT = 120.0

# Minimum advance for the secondary (glass-penetrating) trace, and the
# numerical tolerance of the triangle intersection test.
_RETRACE_EPS = 1e-6
_MT_EPS = 1e-12


# ---------------------------------------------------------------------------
# Sensor model
# ---------------------------------------------------------------------------

@dataclass
class PoseRandomization:
    pitch_sigma_deg: float = 0.0
    roll_sigma_deg: float = 0.0
    yaw_sigma_deg: float = 0.0
    z_sigma_m: float = 0.0

    def __post_init__(self):
        for v in (self.pitch_sigma_deg, self.roll_sigma_deg, self.yaw_sigma_deg, self.z_sigma_m):
            if v < 0:
                raise ValueError("pose randomization sigmas must be >= 0")


@dataclass
class DualBlock:
    channels: int
    fov_deg: tuple[float, float]  # (elev_max, elev_min)
    z_offset_m: float


@dataclass
class CameraConfig:
    width: int = 2048
    height: int = 512
    hfov_deg: float = 120.0


@dataclass
class SensorModel:
    kind: str = "uniform64"  # "uniform64" | "dual_velodyne" | "depth_sampled"
    channels: int = 64
    azimuth_step_deg: float = 0.09
    fov_deg: tuple[float, float] = (2.0, -24.33)  # (elev_max, elev_min)
    upper: DualBlock | None = None
    lower: DualBlock | None = None
    max_range: float = MAX_RANGE_DEFAULT
    pose_randomization: PoseRandomization = field(default_factory=PoseRandomization)
    camera: CameraConfig = field(default_factory=CameraConfig)

    def __post_init__(self):
        if self.kind == "dual_velodyne":
            if self.upper is None:
                self.upper = DualBlock(32, (2.0, -8.33), 0.0254)
            if self.lower is None:
                self.lower = DualBlock(32, (-8.83, -24.33), -0.0254)
            span_u = self.upper.fov_deg[0] - self.upper.fov_deg[1]
            span_l = self.lower.fov_deg[0] - self.lower.fov_deg[1]
            if span_u >= span_l:
                raise ValueError("upper block FOV span must be narrower than the lower block")
        elevs = self.elevations_deg()
        if np.any(np.diff(elevs) >= 0):
            raise ValueError("elevation table must be strictly decreasing")

    def elevations_deg(self) -> np.ndarray:
        if self.kind == "dual_velodyne":
            up = np.linspace(self.upper.fov_deg[0], self.upper.fov_deg[1], self.upper.channels)
            lo = np.linspace(self.lower.fov_deg[0], self.lower.fov_deg[1], self.lower.channels)
            return np.concatenate([up, lo])
        return np.linspace(self.fov_deg[0], self.fov_deg[1], self.channels)

    def channel_origins(self) -> np.ndarray:
        """Per-channel ray-origin offset in the sensor frame, shape (C, 3)."""
        if self.kind == "dual_velodyne":
            offs = np.zeros((self.upper.channels + self.lower.channels, 3))
            offs[: self.upper.channels, 2] = self.upper.z_offset_m
            offs[self.upper.channels:, 2] = self.lower.z_offset_m
            return offs
        return np.zeros((self.channels, 3))

    @property
    def total_channels(self) -> int:
        if self.kind == "dual_velodyne":
            return self.upper.channels + self.lower.channels
        return self.channels

    @property
    def azimuth_bins(self) -> int:
        return int(round(360.0 / self.azimuth_step_deg))


@dataclass
class ScanPattern:
    directions: np.ndarray  # (R, 3) unit vectors, sensor frame
    origins: np.ndarray  # (R, 3) sensor frame
    channel: np.ndarray  # (R,) uint16
    azimuth: np.ndarray  # (R,) uint16


def gen_scan_pattern(model: SensorModel) -> ScanPattern:
    """Channel-major, azimuth-minor ray pattern for a full 360-degree sweep."""
    if model.azimuth_step_deg <= 0:
        raise ValueError("azimuth_step must be positive")
    elevs = np.deg2rad(model.elevations_deg())
    n_az = model.azimuth_bins
    az = np.deg2rad(np.arange(n_az) * model.azimuth_step_deg)
    ce, se = np.cos(elevs), np.sin(elevs)
    ca, sa = np.cos(az), np.sin(az)
    dirs = np.empty((len(elevs), n_az, 3))
    dirs[:, :, 0] = ce[:, None] * ca[None, :]
    dirs[:, :, 1] = ce[:, None] * sa[None, :]
    dirs[:, :, 2] = se[:, None]
    origins = np.repeat(model.channel_origins(), n_az, axis=0)
    channel = np.repeat(np.arange(len(elevs), dtype=np.uint16), n_az)
    azimuth = np.tile(np.arange(n_az, dtype=np.uint16), len(elevs))
    return ScanPattern(dirs.reshape(-1, 3), origins, channel, azimuth)


def randomize_sensor_pose(base_pose: Pose, pr: PoseRandomization, seed: int) -> Pose:
    """Gaussian pitch/roll/yaw and height perturbation; deterministic in seed."""
    rng = np.random.default_rng(np.random.SeedSequence([0x90E5, int(seed)]))
    d_pitch = rng.normal(0.0, math.radians(pr.pitch_sigma_deg)) if pr.pitch_sigma_deg else 0.0
    d_roll = rng.normal(0.0, math.radians(pr.roll_sigma_deg)) if pr.roll_sigma_deg else 0.0
    d_yaw = rng.normal(0.0, math.radians(pr.yaw_sigma_deg)) if pr.yaw_sigma_deg else 0.0
    d_z = rng.normal(0.0, pr.z_sigma_m) if pr.z_sigma_m else 0.0
    pos = base_pose.position.copy()
    pos[2] += d_z
    return Pose(position=pos, yaw=base_pose.yaw + d_yaw,
                pitch=base_pose.pitch + d_pitch, roll=base_pose.roll + d_roll)


# ---------------------------------------------------------------------------
# Acceleration structure
# ---------------------------------------------------------------------------

@dataclass
class AccelStructure:
    triangles: np.ndarray  # (T, 3, 3) float64
    material: np.ndarray  # (T,) uint8
    albedo: np.ndarray  # (T,) float64
    actor_id: np.ndarray  # (T,) int32, -1 for ground
    node_min: np.ndarray
    node_max: np.ndarray
    node_left: np.ndarray
    node_right: np.ndarray
    node_start: np.ndarray
    node_count: np.ndarray
    tri_order: np.ndarray


_LEAF_SIZE = 4


def _build_bvh(tris: np.ndarray):
    n = len(tris)
    lo = tris.min(axis=1)
    hi = tris.max(axis=1)
    centroids = (lo + hi) / 2.0
    order = np.arange(n, dtype=np.int32)

    node_min, node_max = [], []
    node_left, node_right = [], []
    node_start, node_count = [], []

    def new_node():
        node_min.append(None)
        node_max.append(None)
        node_left.append(-1)
        node_right.append(-1)
        node_start.append(0)
        node_count.append(0)
        return len(node_min) - 1

    root = new_node()
    stack = [(root, 0, n)]
    while stack:
        idx, start, end = stack.pop()
        sel = order[start:end]
        node_min[idx] = lo[sel].min(axis=0)
        node_max[idx] = hi[sel].max(axis=0)
        if end - start <= _LEAF_SIZE:
            node_start[idx] = start
            node_count[idx] = end - start
            continue
        axis = int(np.argmax(node_max[idx] - node_min[idx]))
        key = centroids[sel, axis]
        perm = np.argsort(key, kind="stable")
        order[start:end] = sel[perm]
        mid = (start + end) // 2
        left = new_node()
        right = new_node()
        node_left[idx] = left
        node_right[idx] = right
        stack.append((left, start, mid))
        stack.append((right, mid, end))

    return (
        np.array(node_min), np.array(node_max),
        np.array(node_left, dtype=np.int32), np.array(node_right, dtype=np.int32),
        np.array(node_start, dtype=np.int32), np.array(node_count, dtype=np.int32),
        order,
    )


def build_accel_from_arrays(triangles, material, albedo, actor_id) -> AccelStructure:
    triangles = np.ascontiguousarray(triangles, dtype=np.float64)
    if len(triangles) == 0:
        raise ValueError("cannot build acceleration structure over an empty scene")
    nmin, nmax, nleft, nright, nstart, ncount, order = _build_bvh(triangles)
    return AccelStructure(
        triangles=triangles,
        material=np.ascontiguousarray(material, dtype=np.uint8),
        albedo=np.ascontiguousarray(albedo, dtype=np.float64),
        actor_id=np.ascontiguousarray(actor_id, dtype=np.int32),
        node_min=np.ascontiguousarray(nmin), node_max=np.ascontiguousarray(nmax),
        node_left=nleft, node_right=nright, node_start=nstart, node_count=ncount,
        tri_order=order,
    )


def build_accel(scene: Scene) -> AccelStructure:
    """Flatten all scene geometry (actors in world space plus ground) into a BVH."""
    tri_list, mat_list, alb_list, act_list = [], [], [], []
    if scene.ground is not None and len(scene.ground.faces):
        tv = scene.ground.triangle_vertices()
        tri_list.append(tv)
        mat_list.append(scene.ground.material_class)
        alb_list.append(scene.ground.albedo)
        act_list.append(np.full(len(tv), -1, dtype=np.int32))
    for actor in scene.actors:
        tv = actor.mesh.triangle_vertices()
        tv = tv.reshape(-1, 3) @ actor.pose.rotation.T + actor.pose.position
        tri_list.append(tv.reshape(-1, 3, 3))
        mat_list.append(actor.mesh.material_class)
        alb_list.append(actor.mesh.albedo)
        act_list.append(np.full(len(actor.mesh.faces), actor.id, dtype=np.int32))
    if not tri_list:
        raise ValueError("cannot build acceleration structure over an empty scene")
    return build_accel_from_arrays(
        np.concatenate(tri_list), np.concatenate(mat_list),
        np.concatenate(alb_list), np.concatenate(act_list),
    )


# ---------------------------------------------------------------------------
# Tracing kernels
# ---------------------------------------------------------------------------

@njit(cache=True, inline="always")
def _ray_tri(ox, oy, oz, dx, dy, dz, tv, i):
    v0x, v0y, v0z = tv[i, 0, 0], tv[i, 0, 1], tv[i, 0, 2]
    e1x, e1y, e1z = tv[i, 1, 0] - v0x, tv[i, 1, 1] - v0y, tv[i, 1, 2] - v0z
    e2x, e2y, e2z = tv[i, 2, 0] - v0x, tv[i, 2, 1] - v0y, tv[i, 2, 2] - v0z
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if -_MT_EPS < det < _MT_EPS:
        return -1.0
    inv = 1.0 / det
    tx, ty, tz = ox - v0x, oy - v0y, oz - v0z
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return -1.0
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return -1.0
    return (e2x * qx + e2y * qy + e2z * qz) * inv


@njit(cache=True)
def _nearest_hit(ox, oy, oz, dx, dy, dz, tmin, tmax,
                 node_min, node_max, node_left, node_right, node_start, node_count,
                 tri_order, tv, tri_mat, skip_glass):
    best_t = tmax
    best_i = -1
    stack = np.empty(128, dtype=np.int32)
    sp = 0
    stack[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        # Slab test against [tmin, best_t].
        t0 = tmin
        t1 = best_t
        ok = True
        for a in range(3):
            o = ox if a == 0 else (oy if a == 1 else oz)
            d = dx if a == 0 else (dy if a == 1 else dz)
            bmin = node_min[node, a]
            bmax = node_max[node, a]
            if d != 0.0:
                inv = 1.0 / d
                ta = (bmin - o) * inv
                tb = (bmax - o) * inv
                if ta > tb:
                    ta, tb = tb, ta
                if ta > t0:
                    t0 = ta
                if tb < t1:
                    t1 = tb
                if t0 > t1:
                    ok = False
                    break
            elif o < bmin or o > bmax:
                ok = False
                break
        if not ok:
            continue
        if node_count[node] > 0:
            s = node_start[node]
            for k in range(node_count[node]):
                tri = tri_order[s + k]
                if skip_glass and tri_mat[tri] == 1:
                    continue
                t = _ray_tri(ox, oy, oz, dx, dy, dz, tv, tri)
                if tmin < t < best_t:
                    best_t = t
                    best_i = tri
        else:
            stack[sp] = node_left[node]
            sp += 1
            stack[sp] = node_right[node]
            sp += 1
    return best_t, best_i


@njit(cache=True, parallel=True)
def _trace_kernel(origins, dirs, max_range,
                  node_min, node_max, node_left, node_right, node_start, node_count,
                  tri_order, tv, tri_mat):
    n = origins.shape[0]
    first_t = np.empty(n)
    first_i = np.full(n, -1, dtype=np.int32)
    last_t = np.empty(n)
    last_i = np.full(n, -1, dtype=np.int32)
    for r in prange(n):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        t1, i1 = _nearest_hit(ox, oy, oz, dx, dy, dz, 0.0, max_range,
                              node_min, node_max, node_left, node_right,
                              node_start, node_count, tri_order, tv, tri_mat, False)
        first_t[r] = t1
        first_i[r] = i1
        if i1 >= 0 and tri_mat[i1] == 1:
            # Glass: continue along the same line to the nearest non-glass hit.
            t2, i2 = _nearest_hit(ox, oy, oz, dx, dy, dz, t1 + _RETRACE_EPS, max_range,
                                  node_min, node_max, node_left, node_right,
                                  node_start, node_count, tri_order, tv, tri_mat, True)
            if i2 >= 0:
                last_t[r] = t2
                last_i[r] = i2
            else:
                last_t[r] = t1
                last_i[r] = i1
        else:
            last_t[r] = t1
            last_i[r] = i1
    return first_t, first_i, last_t, last_i


@njit(cache=True, parallel=True)
def _trace_opaque_kernel(origins, dirs, max_range,
                         node_min, node_max, node_left, node_right, node_start, node_count,
                         tri_order, tv, tri_mat):
    """Nearest non-glass hit per ray (depth-camera semantics)."""
    n = origins.shape[0]
    hit_t = np.empty(n)
    hit_i = np.full(n, -1, dtype=np.int32)
    for r in prange(n):
        t, i = _nearest_hit(origins[r, 0], origins[r, 1], origins[r, 2],
                            dirs[r, 0], dirs[r, 1], dirs[r, 2], 0.0, max_range,
                            node_min, node_max, node_left, node_right,
                            node_start, node_count, tri_order, tv, tri_mat, True)
        hit_t[r] = t
        hit_i[r] = i
    return hit_t, hit_i


def _accel_args(accel: AccelStructure):
    return (accel.node_min, accel.node_max, accel.node_left, accel.node_right,
            accel.node_start, accel.node_count, accel.tri_order,
            accel.triangles, accel.material)


def trace_batch(accel: AccelStructure, origins, dirs, max_range=MAX_RANGE_DEFAULT):
    """Dual-hit trace of many rays. Returns (first_t, first_i, last_t, last_i)."""
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    return _trace_kernel(origins, dirs, max_range, *_accel_args(accel))


# ---------------------------------------------------------------------------
# Hit records / single-ray API
# ---------------------------------------------------------------------------

@dataclass
class HitRecord:
    point: np.ndarray
    range: float
    normal: np.ndarray
    material: int
    actor_id: int | None
    grayscale: float


@dataclass
class DualHit:
    first: HitRecord | None
    last: HitRecord | None


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    channel_index: int = 0
    azimuth_index: int = 0

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.direction = np.asarray(self.direction, dtype=float)
        norm = np.linalg.norm(self.direction)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError("ray direction must be a unit vector")


def triangle_normal(accel: AccelStructure, tri: int, direction: np.ndarray) -> np.ndarray:
    v = accel.triangles[tri]
    n = np.cross(v[1] - v[0], v[2] - v[0])
    n /= np.linalg.norm(n)
    if np.dot(n, direction) > 0:
        n = -n
    return n


def _hit_record(accel, tri, t, origin, direction) -> HitRecord:
    actor = int(accel.actor_id[tri])
    return HitRecord(
        point=origin + t * direction,
        range=float(t),
        normal=triangle_normal(accel, tri, direction),
        material=int(accel.material[tri]),
        actor_id=None if actor < 0 else actor,
        grayscale=float(accel.albedo[tri]),
    )


def trace(accel: AccelStructure, ray: Ray, max_range: float = MAX_RANGE_DEFAULT) -> DualHit:
    """Single-ray dual-hit trace (miss yields an empty DualHit)."""
    ft, fi, lt, li = trace_batch(accel, ray.origin[None], ray.direction[None], max_range)
    if fi[0] < 0:
        return DualHit(first=None, last=None)
    first = _hit_record(accel, int(fi[0]), float(ft[0]), ray.origin, ray.direction)
    if li[0] == fi[0]:
        return DualHit(first=first, last=first)
    last = _hit_record(accel, int(li[0]), float(lt[0]), ray.origin, ray.direction)
    return DualHit(first=first, last=last)


# ---------------------------------------------------------------------------
# Dense frames
# ---------------------------------------------------------------------------

POINT_DTYPE = np.dtype([
    ("fx", "<f4"), ("fy", "<f4"), ("fz", "<f4"),
    ("lx", "<f4"), ("ly", "<f4"), ("lz", "<f4"),
    ("frange", "<f4"), ("lrange", "<f4"),
    ("fnx", "<f4"), ("fny", "<f4"), ("fnz", "<f4"),
    ("lnx", "<f4"), ("lny", "<f4"), ("lnz", "<f4"),
    ("fmat", "u1"), ("lmat", "u1"),
    ("factor", "<i4"), ("lactor", "<i4"),
    ("fgray", "<f4"), ("lgray", "<f4"),
    ("channel", "<u2"), ("azimuth", "<u2"),
])

ACTOR_DTYPE = np.dtype([
    ("id", "<i4"), ("kind", "u1"),
    ("brightness", "<f8"), ("reflectivity", "<f8"),
    ("cx", "<f8"), ("cy", "<f8"), ("cz", "<f8"),
    ("dl", "<f8"), ("dw", "<f8"), ("dh", "<f8"), ("yaw", "<f8"),
])

_KIND_CODES = {"vehicle": 0, "prop": 1, "static": 2}
KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


@dataclass
class DenseFrame:
    frame_id: int
    pose_matrix: np.ndarray  # (4, 4) world-from-sensor
    azimuth_step_deg: float
    channels: int
    azimuth_bins: int
    channel_origins: np.ndarray  # (C, 3) sensor frame
    points: np.ndarray  # structured, POINT_DTYPE, channel-major azimuth-minor
    actors: np.ndarray  # structured, ACTOR_DTYPE

    def visible_counts(self) -> dict[int, int]:
        """Retained last-hit point count per actor id."""
        ids = self.points["lactor"]
        uniq, counts = np.unique(ids[ids >= 0], return_counts=True)
        return {int(i): int(c) for i, c in zip(uniq, counts)}


def _actor_table(scene: Scene) -> np.ndarray:
    table = np.zeros(len(scene.actors), dtype=ACTOR_DTYPE)
    for i, a in enumerate(scene.actors):
        wb = a.world_box()
        table[i]["id"] = a.id
        table[i]["kind"] = _KIND_CODES[a.kind]
        table[i]["brightness"] = a.brightness_scale
        table[i]["reflectivity"] = a.reflectivity_scale
        table[i]["cx"], table[i]["cy"], table[i]["cz"] = wb.center
        table[i]["dl"], table[i]["dw"], table[i]["dh"] = wb.dims
        table[i]["yaw"] = wb.yaw
    return table


def _assemble_points(accel, pose, origins_w, dirs_w, pattern,
                     first_t, first_i, last_t, last_i) -> np.ndarray:
    keep = first_i >= 0
    fi = first_i[keep]
    li = last_i[keep]
    ft = first_t[keep]
    lt = last_t[keep]
    o = origins_w[keep]
    d = dirs_w[keep]

    rot = pose.rotation
    fp = (o + ft[:, None] * d - pose.position) @ rot
    lp = (o + lt[:, None] * d - pose.position) @ rot

    tri_v = accel.triangles
    def normals(idx):
        v = tri_v[idx]
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        flip = np.einsum("ij,ij->i", n, d) > 0
        n[flip] = -n[flip]
        return n @ rot

    pts = np.zeros(keep.sum(), dtype=POINT_DTYPE)
    pts["fx"], pts["fy"], pts["fz"] = fp[:, 0], fp[:, 1], fp[:, 2]
    pts["lx"], pts["ly"], pts["lz"] = lp[:, 0], lp[:, 1], lp[:, 2]
    pts["frange"], pts["lrange"] = ft, lt
    fn = normals(fi)
    ln = normals(li)
    pts["fnx"], pts["fny"], pts["fnz"] = fn[:, 0], fn[:, 1], fn[:, 2]
    pts["lnx"], pts["lny"], pts["lnz"] = ln[:, 0], ln[:, 1], ln[:, 2]
    pts["fmat"], pts["lmat"] = accel.material[fi], accel.material[li]
    pts["factor"], pts["lactor"] = accel.actor_id[fi], accel.actor_id[li]
    pts["fgray"], pts["lgray"] = accel.albedo[fi], accel.albedo[li]
    pts["channel"] = pattern.channel[keep]
    pts["azimuth"] = pattern.azimuth[keep]
    return pts


def scan_frame(scene: Scene, model: SensorModel, base_pose: Pose, seed: int,
               frame_id: int = 0, accel: AccelStructure | None = None) -> DenseFrame:
    """Cast the full scan pattern through the scene from a randomized pose."""
    if accel is None:
        accel = build_accel(scene)
    pose = randomize_sensor_pose(base_pose, model.pose_randomization, seed)
    pattern = gen_scan_pattern(model)
    rot = pose.rotation
    dirs_w = pattern.directions @ rot.T
    origins_w = pattern.origins @ rot.T + pose.position
    ft, fi, lt, li = trace_batch(accel, origins_w, dirs_w, model.max_range)
    points = _assemble_points(accel, pose, origins_w, dirs_w, pattern, ft, fi, lt, li)
    return DenseFrame(
        frame_id=frame_id, pose_matrix=pose.matrix(),
        azimuth_step_deg=model.azimuth_step_deg,
        channels=model.total_channels, azimuth_bins=model.azimuth_bins,
        channel_origins=model.channel_origins(),
        points=points, actors=_actor_table(scene),
    )


def render_depth(accel: AccelStructure, pose: Pose, camera: CameraConfig,
                 max_range: float = MAX_RANGE_DEFAULT):
    """Planar depth image of the nearest opaque surface (glass excluded).

    Returns (depth, tri_index); depth is +inf where nothing was hit.
    """
    w, h = camera.width, camera.height
    fx = (w / 2.0) / math.tan(math.radians(camera.hfov_deg) / 2.0)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    cols = (np.arange(w) - cx) / fx
    rows = (np.arange(h) - cy) / fx
    dirs = np.empty((h, w, 3))
    dirs[:, :, 0] = 1.0
    dirs[:, :, 1] = -cols[None, :]
    dirs[:, :, 2] = -rows[:, None]
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    rot = pose.rotation
    dirs_w = dirs.reshape(-1, 3) @ rot.T
    origins_w = np.broadcast_to(pose.position, dirs_w.shape).copy()
    t, idx = _trace_opaque_kernel(origins_w, np.ascontiguousarray(dirs_w), max_range,
                                  *_accel_args(accel))
    # Planar (z-) depth: distance along the camera forward axis.
    depth = t * dirs.reshape(-1, 3)[:, 0]
    depth[idx < 0] = np.inf
    return depth.reshape(h, w), idx.reshape(h, w)


def sample_depth_pseudolidar(scene: Scene, model: SensorModel, base_pose: Pose, seed: int,
                             frame_id: int = 0, accel: AccelStructure | None = None) -> DenseFrame:
    """Pseudo-LiDAR frame resampled from a depth camera at the sensor position.

    The target scan pattern is the model's uniform pattern restricted to the
    camera's horizontal FOV; each ray samples the nearest depth pixel and is
    back-projected through that pixel's center.
    """
    if accel is None:
        accel = build_accel(scene)
    pose = randomize_sensor_pose(base_pose, model.pose_randomization, seed)
    camera = model.camera
    depth, tri_idx = render_depth(accel, pose, camera, model.max_range)

    pattern = gen_scan_pattern(model)
    d = pattern.directions
    half_fov = math.radians(camera.hfov_deg) / 2.0
    az = np.arctan2(d[:, 1], d[:, 0])
    in_fov = (d[:, 0] > 0) & (np.abs(az) <= half_fov)

    w, h = camera.width, camera.height
    fx = (w / 2.0) / math.tan(half_fov)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    u = -d[in_fov, 1] / d[in_fov, 0]
    v = -d[in_fov, 2] / d[in_fov, 0]
    col = np.rint(cx + u * fx).astype(np.int64)
    row = np.rint(cy + v * fx).astype(np.int64)
    in_img = (col >= 0) & (col < w) & (row >= 0) & (row < h)

    sel = np.flatnonzero(in_fov)[in_img]
    col, row = col[in_img], row[in_img]
    dpt = depth[row, col]
    tri = tri_idx[row, col]
    hit = np.isfinite(dpt)
    sel, col, row, dpt, tri = sel[hit], col[hit], row[hit], dpt[hit], tri[hit]

    # Back-project through the sampled pixel center.
    u_pix = (col - cx) / fx
    v_pix = (row - cy) / fx
    pts_s = np.stack([dpt, -u_pix * dpt, -v_pix * dpt], axis=1)
    rng = np.linalg.norm(pts_s, axis=1)

    rot = pose.rotation
    pix_dirs_s = np.stack([np.ones_like(u_pix), -u_pix, -v_pix], axis=1)
    pix_dirs_s /= np.linalg.norm(pix_dirs_s, axis=1, keepdims=True)
    pix_dirs_w = pix_dirs_s @ rot.T

    tri_v = accel.triangles[tri]
    n = np.cross(tri_v[:, 1] - tri_v[:, 0], tri_v[:, 2] - tri_v[:, 0])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    flip = np.einsum("ij,ij->i", n, pix_dirs_w) > 0
    n[flip] = -n[flip]
    n_s = n @ rot

    pts = np.zeros(len(sel), dtype=POINT_DTYPE)
    for a, b in (("fx", 0), ("fy", 1), ("fz", 2)):
        pts[a] = pts_s[:, b]
    for a, b in (("lx", 0), ("ly", 1), ("lz", 2)):
        pts[a] = pts_s[:, b]
    pts["frange"] = pts["lrange"] = rng
    for a, b in (("fnx", 0), ("fny", 1), ("fnz", 2)):
        pts[a] = n_s[:, b]
    for a, b in (("lnx", 0), ("lny", 1), ("lnz", 2)):
        pts[a] = n_s[:, b]
    pts["fmat"] = pts["lmat"] = accel.material[tri]
    pts["factor"] = pts["lactor"] = accel.actor_id[tri]
    pts["fgray"] = pts["lgray"] = accel.albedo[tri]
    pts["channel"] = pattern.channel[sel]
    pts["azimuth"] = pattern.azimuth[sel]

    return DenseFrame(
        frame_id=frame_id, pose_matrix=pose.matrix(),
        azimuth_step_deg=model.azimuth_step_deg,
        channels=model.total_channels, azimuth_bins=model.azimuth_bins,
        channel_origins=model.channel_origins(),
        points=pts, actors=_actor_table(scene),
    )
