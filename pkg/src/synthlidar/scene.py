"""Procedural randomized scenes: parametric vehicles with glass panels, props, ground.

Material classification works on material *names* so that meshes carry
human-readable material labels (e.g. "Glass_Window_Side") and the broad
category (opaque / glass / retro-reflective) is derived deterministically.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .geometry import Box3D, Pose, rect_intersection_area

# Broad material categories (stored per triangle as small ints).
OPAQUE = 0
GLASS = 1
RETRO = 2

MATERIAL_NAMES = {OPAQUE: "Opaque", GLASS: "Glass", RETRO: "RetroReflective"}

DEFAULT_GLASS_TOKENS = ("glass", "window")
DEFAULT_GLASS_EXCEPTIONS = ("glasscontainer",)
DEFAULT_RETRO_TOKENS = ("plate", "signface")

_TOKEN_RE = re.compile(r"[^A-Za-z0-9]+")


def classify_material(
    name: str,
    glass_tokens=DEFAULT_GLASS_TOKENS,
    glass_exceptions=DEFAULT_GLASS_EXCEPTIONS,
    retro_tokens=DEFAULT_RETRO_TOKENS,
) -> int:
    """Map a material name to its broad category.

    A name is glass if any of its tokens equals or starts with a glass token,
    unless a token is on the exception list. Retro-reflective names are matched
    the same way. Unknown names are opaque. Case-insensitive.
    """
    if not name:
        raise ValueError("material name must be nonempty")
    tokens = [t.lower() for t in _TOKEN_RE.split(name) if t]
    for tok in tokens:
        if any(tok == exc or tok.startswith(exc) for exc in glass_exceptions):
            return OPAQUE
    if any(tok == g or tok.startswith(g) for tok in tokens for g in glass_tokens):
        return GLASS
    if any(tok == r or tok.startswith(r) for tok in tokens for r in retro_tokens):
        return RETRO
    return OPAQUE


@dataclass
class TriMesh:
    """Indexed triangle soup with per-triangle material name, class, and albedo."""

    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray  # (F, 3) int32
    material_class: np.ndarray  # (F,) uint8
    albedo: np.ndarray  # (F,) float64
    material_name: list[str] = field(default_factory=list)  # one entry per face

    def triangle_vertices(self) -> np.ndarray:
        """(F, 3, 3) array of triangle corner positions."""
        return self.vertices[self.faces]


class _MeshBuilder:
    def __init__(self):
        self.verts: list = []
        self.faces: list = []
        self.mats: list = []
        self.albedos: list = []
        self.names: list = []

    def add_quad(self, p0, p1, p2, p3, name: str, albedo: float):
        """Quad split into two triangles; corners given CCW as seen from the front side."""
        base = len(self.verts)
        self.verts.extend([p0, p1, p2, p3])
        mat = classify_material(name)
        for tri in ((0, 1, 2), (0, 2, 3)):
            self.faces.append([base + tri[0], base + tri[1], base + tri[2]])
            self.mats.append(mat)
            self.albedos.append(albedo)
            self.names.append(name)

    def add_box(self, lo, hi, name: str, albedo: float, skip_bottom: bool = False):
        x0, y0, z0 = lo
        x1, y1, z1 = hi
        q = self.add_quad
        q((x1, y0, z0), (x1, y1, z0), (x1, y1, z1), (x1, y0, z1), name, albedo)  # +x
        q((x0, y1, z0), (x0, y0, z0), (x0, y0, z1), (x0, y1, z1), name, albedo)  # -x
        q((x1, y1, z0), (x0, y1, z0), (x0, y1, z1), (x1, y1, z1), name, albedo)  # +y
        q((x0, y0, z0), (x1, y0, z0), (x1, y0, z1), (x0, y0, z1), name, albedo)  # -y
        q((x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1), name, albedo)  # +z
        if not skip_bottom:
            q((x0, y1, z0), (x1, y1, z0), (x1, y0, z0), (x0, y0, z0), name, albedo)  # -z

    def build(self) -> TriMesh:
        return TriMesh(
            vertices=np.array(self.verts, dtype=float),
            faces=np.array(self.faces, dtype=np.int32),
            material_class=np.array(self.mats, dtype=np.uint8),
            albedo=np.array(self.albedos, dtype=float),
            material_name=self.names,
        )


@dataclass
class Actor:
    id: int
    kind: str  # "vehicle" | "prop" | "static"
    mesh: TriMesh
    pose: Pose
    raw_box: Box3D  # in actor frame
    reflectivity_scale: float = 1.0
    brightness_scale: float = 1.0
    params: dict = field(default_factory=dict)  # generative parameters (for serialization)

    def world_box(self) -> Box3D:
        center = self.pose.transform_points(self.raw_box.center[None])[0]
        return Box3D(center, self.raw_box.dims.copy(), self.raw_box.yaw + self.pose.yaw)


VEHICLE_LENGTH_LIMITS = (3.0, 6.0)
VEHICLE_WIDTH_LIMITS = (1.5, 2.2)
VEHICLE_HEIGHT_LIMITS = (1.3, 2.1)

# Clearance keeping interior surfaces off planes shared with the body/ground,
# so nearest-hit results are never ambiguous between coincident triangles.
_LIFT = 0.001


def make_parametric_vehicle(length_m: float, width_m: float, height_m: float, seed: int) -> Actor:
    """Build a closed vehicle mesh: opaque body, inset glass panels, interior
    occluder behind the glass, and retro-reflective plates front and rear."""
    for val, (lo, hi), label in (
        (length_m, VEHICLE_LENGTH_LIMITS, "length"),
        (width_m, VEHICLE_WIDTH_LIMITS, "width"),
        (height_m, VEHICLE_HEIGHT_LIMITS, "height"),
    ):
        if not (lo <= val <= hi):
            raise ValueError(f"vehicle {label} {val} outside [{lo}, {hi}]")

    rng = np.random.default_rng(np.random.SeedSequence([0x5EED, int(seed)]))
    body_albedo = float(rng.uniform(0.25, 0.95))

    l2, w2 = length_m / 2.0, width_m / 2.0
    belt = 0.55 * height_m
    roof = height_m
    cab_l2 = 0.25 * length_m
    cab_w2 = w2 - 0.05

    # Interior occluder box, inset from the glass planes so that penetrating
    # rays step visibly deeper (>0.1 m) than body hits.
    occ_gap_y = min(0.3, 0.4 * cab_w2)
    occ_x0, occ_x1 = -cab_l2 + 0.15, cab_l2 - 0.15
    occ_y2 = cab_w2 - occ_gap_y

    # Glass extents lie strictly inside the occluder footprint, so any ray
    # entering through glass crosses the occluder before leaving the cabin.
    side_gx0, side_gx1 = occ_x0 + 0.2, occ_x1 - 0.2
    shield_y2 = occ_y2 - 0.1
    gz0, gz1 = belt + 0.05, roof - 0.06

    b = _MeshBuilder()
    # Lower body shell.
    b.add_box((-l2, -w2, _LIFT), (l2, w2, belt), "Metal_Body", body_albedo)

    # Cabin roof.
    b.add_quad((-cab_l2, -cab_w2, roof), (cab_l2, -cab_w2, roof),
               (cab_l2, cab_w2, roof), (-cab_l2, cab_w2, roof), "Metal_Roof", body_albedo)

    def wall_with_window(plane: str, sign: float, u0, u1, wu0, wu1, glass_name):
        """Vertical cabin wall on +/-y (plane='y') or +/-x (plane='x') with a
        glass pane spanning [wu0, wu1] x [gz0, gz1]; opaque frame elsewhere."""
        def pt(u, z):
            if plane == "y":
                return (u, sign * cab_w2, z)
            return (sign * cab_l2, u, z)

        def quad(ua, ub, za, zb, name, alb):
            if ua >= ub or za >= zb:
                return
            b.add_quad(pt(ua, za), pt(ub, za), pt(ub, zb), pt(ua, zb), name, alb)

        quad(u0, wu0, belt, roof, "Metal_Pillar", body_albedo)
        quad(wu1, u1, belt, roof, "Metal_Pillar", body_albedo)
        quad(wu0, wu1, belt, gz0, "Metal_Pillar", body_albedo)
        quad(wu0, wu1, gz1, roof, "Metal_Pillar", body_albedo)
        quad(wu0, wu1, gz0, gz1, glass_name, 0.08)

    wall_with_window("y", +1.0, -cab_l2, cab_l2, side_gx0, side_gx1, "Glass_Window_Left")
    wall_with_window("y", -1.0, -cab_l2, cab_l2, side_gx0, side_gx1, "Glass_Window_Right")
    wall_with_window("x", +1.0, -cab_w2, cab_w2, -shield_y2, shield_y2, "Glass_Windshield_Front")
    wall_with_window("x", -1.0, -cab_w2, cab_w2, -shield_y2, shield_y2, "Glass_Windshield_Rear")

    # Interior occluder (seats / dashboard stand-in).
    b.add_box((occ_x0, -occ_y2, belt + _LIFT), (occ_x1, occ_y2, roof - 0.02),
              "Interior_Trim", 0.15)

    # Retro-reflective plates, slightly proud of the body faces.
    pz0, pz1 = 0.25 * height_m, 0.25 * height_m + 0.12
    py = 0.25
    eps = 0.0005
    b.add_quad((l2 + eps, -py, pz0), (l2 + eps, py, pz0),
               (l2 + eps, py, pz1), (l2 + eps, -py, pz1), "Plate_Front", 0.9)
    b.add_quad((-l2 - eps, py, pz0), (-l2 - eps, -py, pz0),
               (-l2 - eps, -py, pz1), (-l2 - eps, py, pz1), "Plate_Rear", 0.9)

    mesh = b.build()
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    raw_box = Box3D(center=(lo + hi) / 2.0, dims=hi - lo, yaw=0.0)
    return Actor(
        id=-1, kind="vehicle", mesh=mesh, pose=Pose(), raw_box=raw_box,
        params={"length": length_m, "width": width_m, "height": height_m, "seed": int(seed)},
    )


def make_prop(dims, albedo: float) -> Actor:
    """Simple opaque box prop (bins, crates, street clutter stand-ins)."""
    dx, dy, dz = dims
    b = _MeshBuilder()
    b.add_box((-dx / 2, -dy / 2, _LIFT), (dx / 2, dy / 2, dz), "Prop_Box", albedo)
    mesh = b.build()
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    return Actor(
        id=-1, kind="prop", mesh=mesh, pose=Pose(),
        raw_box=Box3D((lo + hi) / 2.0, hi - lo, 0.0),
        params={"dims": [float(dx), float(dy), float(dz)], "albedo": float(albedo)},
    )


def make_building(dims, albedo: float) -> Actor:
    """Large opaque block flanking the road; provides the vertical surfaces
    that dominate return intensity in built-up areas."""
    dx, dy, dz = dims
    b = _MeshBuilder()
    b.add_box((-dx / 2, -dy / 2, _LIFT), (dx / 2, dy / 2, dz), "Building_Wall", albedo)
    mesh = b.build()
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    return Actor(
        id=-1, kind="static", mesh=mesh, pose=Pose(),
        raw_box=Box3D((lo + hi) / 2.0, hi - lo, 0.0),
        params={"dims": [float(dx), float(dy), float(dz)], "albedo": float(albedo)},
    )


def make_ground(half_extent: float = 150.0, albedo: float = 0.35) -> TriMesh:
    b = _MeshBuilder()
    e = half_extent
    b.add_quad((-e, -e, 0.0), (e, -e, 0.0), (e, e, 0.0), (-e, e, 0.0), "Asphalt_Road", albedo)
    return b.build()


MAP_STYLES = ("straight_road", "intersection", "open_lot")

INTERPENETRATION_TOLERANCE = 0.05  # meters
_EGO_CLEARANCE = 3.5  # keep the sensor position free of actors


@dataclass
class RandomizationConfig:
    vehicle_count_range: tuple[int, int] = (2, 10)
    prop_count_range: tuple[int, int] = (0, 8)
    building_count_range: tuple[int, int] = (6, 12)
    spawn_region: tuple[float, float, float, float] = (4.0, 70.0, -28.0, 28.0)  # x0, x1, y0, y1
    building_setback_range: tuple[float, float] = (32.0, 44.0)  # |y| band beside the road
    vehicle_length_range: tuple[float, float] = (3.5, 5.2)
    vehicle_width_range: tuple[float, float] = (1.6, 2.0)
    vehicle_height_range: tuple[float, float] = (1.4, 1.8)
    reflectivity_range: tuple[float, float] = (0.85, 1.0)
    brightness_range: tuple[float, float] = (0.85, 1.0)
    building_albedo_range: tuple[float, float] = (0.5, 0.95)
    map_styles: tuple[str, ...] = MAP_STYLES
    ground_albedo: float = 0.55

    def __post_init__(self):
        for rng_ in (self.vehicle_count_range, self.prop_count_range, self.building_count_range):
            if rng_[0] > rng_[1] or rng_[0] < 0:
                raise ValueError(f"invalid count range {rng_}")
        for style in self.map_styles:
            if style not in MAP_STYLES:
                raise ValueError(f"unknown map style {style!r}")

    def to_dict(self) -> dict:
        out = {}
        for key in self.__dataclass_fields__:
            val = getattr(self, key)
            out[key] = list(val) if isinstance(val, tuple) else val
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RandomizationConfig":
        kwargs = {}
        for key in cls.__dataclass_fields__:
            if key in d:
                val = d[key]
                kwargs[key] = tuple(val) if isinstance(val, list) else val
        return cls(**kwargs)


@dataclass
class Scene:
    actors: list[Actor]
    ground: TriMesh
    seed: int
    map_style: str = "open_lot"
    ground_albedo: float = 0.35

    def vehicles(self) -> list[Actor]:
        return [a for a in self.actors if a.kind == "vehicle"]

    def to_dict(self) -> dict:
        return {
            "seed": int(self.seed),
            "map_style": self.map_style,
            "ground_albedo": self.ground_albedo,
            "actors": [
                {
                    "id": a.id,
                    "kind": a.kind,
                    "pose": {"x": float(a.pose.position[0]), "y": float(a.pose.position[1]),
                             "z": float(a.pose.position[2]), "yaw": float(a.pose.yaw)},
                    "reflectivity_scale": float(a.reflectivity_scale),
                    "brightness_scale": float(a.brightness_scale),
                    "params": a.params,
                }
                for a in self.actors
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        actors = []
        for ad in d["actors"]:
            p = ad["params"]
            if ad["kind"] == "vehicle":
                actor = make_parametric_vehicle(p["length"], p["width"], p["height"], p["seed"])
            elif ad["kind"] == "static":
                actor = make_building(p["dims"], p["albedo"])
            else:
                actor = make_prop(p["dims"], p["albedo"])
            actor.id = ad["id"]
            actor.kind = ad["kind"]
            pd = ad["pose"]
            actor.pose = Pose(position=np.array([pd["x"], pd["y"], pd["z"]]), yaw=pd["yaw"])
            actor.reflectivity_scale = ad["reflectivity_scale"]
            actor.brightness_scale = ad["brightness_scale"]
            actors.append(actor)
        ground_albedo = d.get("ground_albedo", 0.35)
        return cls(actors=actors, ground=make_ground(albedo=ground_albedo), seed=d["seed"],
                   map_style=d.get("map_style", "open_lot"), ground_albedo=ground_albedo)


def _bev_overlaps(box_a: Box3D, box_b: Box3D, tol: float) -> bool:
    """True if the BEV footprints (each inflated by tol/2) intersect."""
    a = Box3D(box_a.center, box_a.dims + tol, box_a.yaw)
    bb = Box3D(box_b.center, box_b.dims + tol, box_b.yaw)
    return rect_intersection_area(a.bev_corners(), bb.bev_corners()) > 0.0


def _candidate_pose(rng: np.random.Generator, style: str, region) -> tuple[float, float, float]:
    x0, x1, y0, y1 = region
    if style == "straight_road":
        lane = rng.choice([-5.5, -2.0, 2.0, 5.5])
        x = rng.uniform(x0, x1)
        y = float(np.clip(lane + rng.normal(0.0, 0.3), y0, y1))
        yaw = rng.choice([0.0, math.pi]) + rng.normal(0.0, math.radians(4.0))
    elif style == "intersection":
        if rng.random() < 0.5:
            x = rng.uniform(x0, x1)
            y = float(np.clip(rng.choice([-2.0, 2.0]) + rng.normal(0.0, 0.3), y0, y1))
            yaw = rng.choice([0.0, math.pi]) + rng.normal(0.0, math.radians(4.0))
        else:
            x = float(np.clip((x0 + x1) / 2.0 + rng.choice([-2.0, 2.0]) + rng.normal(0.0, 0.3), x0, x1))
            y = rng.uniform(y0, y1)
            yaw = rng.choice([math.pi / 2, -math.pi / 2]) + rng.normal(0.0, math.radians(4.0))
    else:  # open_lot
        x = rng.uniform(x0, x1)
        y = rng.uniform(y0, y1)
        yaw = rng.uniform(0.0, 2.0 * math.pi)
    return x, y, yaw


def randomize_scene(config: RandomizationConfig, seed: int) -> Scene:
    """Draw a randomized scene; deterministic in (config, seed).

    Poses are rejection-sampled against the interpenetration tolerance; after
    1000 consecutive failures the scene built so far is returned.
    """
    rng = np.random.default_rng(np.random.SeedSequence([0x5CE2E, int(seed)]))
    style = str(rng.choice(list(config.map_styles)))
    n_vehicles = int(rng.integers(config.vehicle_count_range[0], config.vehicle_count_range[1] + 1))
    n_props = int(rng.integers(config.prop_count_range[0], config.prop_count_range[1] + 1))
    n_buildings = int(rng.integers(config.building_count_range[0], config.building_count_range[1] + 1))

    actors: list[Actor] = []
    placed_boxes: list[Box3D] = []
    next_id = 0

    def try_place(actor: Actor) -> bool:
        nonlocal next_id
        failures = 0
        while failures < 1000:
            x, y, yaw = _candidate_pose(rng, style, config.spawn_region)
            actor.pose = Pose(position=np.array([x, y, 0.0]), yaw=yaw)
            wbox = actor.world_box()
            if math.hypot(x, y) < _EGO_CLEARANCE + max(actor.raw_box.dims[:2]) / 2.0:
                failures += 1
                continue
            if any(_bev_overlaps(wbox, other, INTERPENETRATION_TOLERANCE) for other in placed_boxes):
                failures += 1
                continue
            actor.id = next_id
            next_id += 1
            actor.reflectivity_scale = float(rng.uniform(*config.reflectivity_range))
            actor.brightness_scale = float(rng.uniform(*config.brightness_range))
            actors.append(actor)
            placed_boxes.append(wbox)
            return True
        return False

    for _ in range(n_vehicles):
        length = float(rng.uniform(*config.vehicle_length_range))
        width = float(rng.uniform(*config.vehicle_width_range))
        height = float(rng.uniform(*config.vehicle_height_range))
        vseed = int(rng.integers(0, 2**31 - 1))
        if not try_place(make_parametric_vehicle(length, width, height, vseed)):
            break

    for _ in range(n_props):
        dims = rng.uniform([0.4, 0.4, 0.5], [1.5, 1.5, 2.0])
        albedo = float(rng.uniform(0.2, 0.8))
        if not try_place(make_prop(dims, albedo)):
            break

    # Buildings flank the spawn region outside the drivable band; they only
    # need to avoid each other.
    x0, x1 = config.spawn_region[0], config.spawn_region[1]
    s0, s1 = config.building_setback_range
    building_boxes: list[Box3D] = []
    for i in range(n_buildings):
        dims = rng.uniform([8.0, 4.0, 4.0], [18.0, 8.0, 12.0])
        albedo = float(rng.uniform(*config.building_albedo_range))
        bld = make_building(dims, albedo)
        side = 1.0 if i % 2 == 0 else -1.0
        for _ in range(100):
            x = rng.uniform(x0 - 10.0, x1 + 10.0)
            y = side * rng.uniform(s0 + dims[1] / 2.0, s1)
            yaw = float(rng.normal(0.0, 0.05))
            bld.pose = Pose(position=np.array([x, y, 0.0]), yaw=yaw)
            wbox = bld.world_box()
            if not any(_bev_overlaps(wbox, other, INTERPENETRATION_TOLERANCE)
                       for other in building_boxes):
                bld.id = next_id
                next_id += 1
                actors.append(bld)
                building_boxes.append(wbox)
                break

    return Scene(actors=actors, ground=make_ground(albedo=config.ground_albedo),
                 seed=int(seed), map_style=style, ground_albedo=config.ground_albedo)
