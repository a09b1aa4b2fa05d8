"""Physics-lite simulated conveyor world.

Objects are boxes or discs dropped onto the belt; each rests on the maximum
height of whatever is under its footprint (no toppling).  Grasp execution,
slip and the synthetic drop-zone camera are all rule-based so that the full
pile -> grasp -> feedback chain is reproducible from a seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from matplotlib.colors import hsv_to_rgb

from .grasp import GraspRectangle, GripperGeometry
from .heightmap import BELT_GRAY, RESOLUTION_MM
from .feedback import FrameStack

CLASSES = ("red", "yellow", "bluegreen")

# Base HSV per class, kept well inside the feedback color boxes so that the
# bounded jitter stays classifiable.
_CLASS_HSV = {
    "red": (8.0, 0.85, 0.85),
    "yellow": (60.0, 0.85, 0.85),
    "bluegreen": (200.0, 0.85, 0.85),
}
_HUE_JITTER = {"red": 6.0, "yellow": 15.0, "bluegreen": 40.0}


def class_color(cls: str, rng: np.random.Generator | None = None) -> tuple[int, int, int]:
    h, s, v = _CLASS_HSV[cls]
    if rng is not None:
        h = h + rng.uniform(-1.0, 1.0) * _HUE_JITTER[cls]
        s = min(1.0, max(0.45, s + rng.uniform(-0.1, 0.1)))
        v = min(1.0, max(0.35, v + rng.uniform(-0.1, 0.1)))
    h = h % 360.0
    rgb = hsv_to_rgb((h / 360.0, s, v))
    return tuple(int(round(255 * c)) for c in rgb)


@dataclass
class SimObject:
    id: int
    cls: str
    shape: str        # "box" | "disc"
    size_x: float     # mm; disc diameter for discs
    size_y: float
    thickness: float
    mass: float
    x: float
    y: float
    yaw: float
    rest_height: float = 0.0
    color: tuple[int, int, int] = BELT_GRAY

    @property
    def top(self) -> float:
        return self.rest_height + self.thickness


@dataclass
class Scene:
    objects: list[SimObject] = field(default_factory=list)
    width_mm: float = 2000.0
    depth_mm: float = 1500.0

    def grid_shape(self, resolution: float = RESOLUTION_MM) -> tuple[int, int]:
        return (int(round(self.depth_mm / resolution)),
                int(round(self.width_mm / resolution)))


@dataclass
class PileConfig:
    min_objects: int = 6
    max_objects: int = 10
    class_probs: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    min_size: float = 60.0
    max_size: float = 160.0
    min_thickness: float = 25.0
    max_thickness: float = 60.0
    density_min: float = 0.3   # relative to water
    density_max: float = 2.0
    disc_fraction: float = 0.3


@dataclass
class SlipModel:
    base: float = 0.1
    per_kg: float = 0.05
    grip_penalty: float = 0.0  # extra slip for grasps clipping an object edge
    cap: float = 0.9

    def probability(self, mass: float, overlap_frac: float) -> float:
        p = self.base + self.per_kg * mass + self.grip_penalty * (1.0 - overlap_frac)
        return min(self.cap, max(0.0, p))


@dataclass
class GraspOutcome:
    picked: list[SimObject] = field(default_factory=list)    # delivered
    slipped: list[SimObject] = field(default_factory=list)
    gripper_closed_to: float = 0.0
    success_before_release: bool = False


def footprint_cells(obj: SimObject, shape: tuple[int, int],
                    resolution: float = RESOLUTION_MM):
    """(rows, cols) index arrays of the grid cells covered by the footprint."""
    n_rows, n_cols = shape
    reach = math.hypot(obj.size_x, obj.size_y) / 2.0
    c0 = max(0, int((obj.x - reach) / resolution) - 1)
    c1 = min(n_cols - 1, int((obj.x + reach) / resolution) + 1)
    r0 = max(0, int((obj.y - reach) / resolution) - 1)
    r1 = min(n_rows - 1, int((obj.y + reach) / resolution) + 1)
    if c1 < c0 or r1 < r0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    rr, cc = np.meshgrid(np.arange(r0, r1 + 1), np.arange(c0, c1 + 1), indexing="ij")
    dx = cc * resolution - obj.x
    dy = rr * resolution - obj.y
    if obj.shape == "disc":
        inside = dx * dx + dy * dy <= (obj.size_x / 2.0) ** 2
    else:
        ca, sa = math.cos(obj.yaw), math.sin(obj.yaw)
        u = dx * ca + dy * sa
        v = -dx * sa + dy * ca
        inside = (np.abs(u) <= obj.size_x / 2.0) & (np.abs(v) <= obj.size_y / 2.0)
    return rr[inside], cc[inside]


def settle(scene: Scene, resolution: float = RESOLUTION_MM) -> None:
    """Recompute rest heights in drop order: each object rests on the max
    height of belt/objects under its footprint."""
    shape = scene.grid_shape(resolution)
    grid = np.zeros(shape)
    for obj in scene.objects:
        rr, cc = footprint_cells(obj, shape, resolution)
        obj.rest_height = float(grid[rr, cc].max()) if rr.size else 0.0
        if rr.size:
            grid[rr, cc] = np.maximum(grid[rr, cc], obj.top)


def scene_surfaces(scene: Scene, resolution: float = RESOLUTION_MM):
    """Per-cell top height and topmost color (belt gray where empty)."""
    shape = scene.grid_shape(resolution)
    heights = np.zeros(shape)
    rgb = np.empty(shape + (3,), dtype=np.uint8)
    rgb[:] = BELT_GRAY
    for obj in sorted(scene.objects, key=lambda o: (o.top, o.id)):
        rr, cc = footprint_cells(obj, shape, resolution)
        above = obj.top >= heights[rr, cc]
        heights[rr[above], cc[above]] = obj.top
        rgb[rr[above], cc[above]] = obj.color
    return heights, rgb


def generate_pile(config: PileConfig, rng: np.random.Generator,
                  scene: Scene | None = None, next_id: int = 0) -> Scene:
    """Drop a batch of random objects onto the belt (or an existing scene)."""
    scene = scene if scene is not None else Scene()
    count = int(rng.integers(config.min_objects, config.max_objects + 1))
    for i in range(count):
        cls = CLASSES[rng.choice(3, p=np.asarray(config.class_probs) /
                                 np.sum(config.class_probs))]
        shape = "disc" if rng.random() < config.disc_fraction else "box"
        sx = rng.uniform(config.min_size, config.max_size)
        sy = sx if shape == "disc" else rng.uniform(config.min_size, config.max_size)
        th = rng.uniform(config.min_thickness, config.max_thickness)
        if shape == "disc":
            area = math.pi * (sx / 2.0) ** 2
        else:
            area = sx * sy
        density = rng.uniform(config.density_min, config.density_max)
        mass = density * area * th * 1e-6  # water density = 1e-6 kg/mm^3
        margin = max(sx, sy) / 2.0
        x = rng.uniform(margin, scene.width_mm - margin)
        y = rng.uniform(margin, scene.depth_mm - margin)
        yaw = rng.uniform(0.0, math.pi)
        scene.objects.append(SimObject(
            id=next_id + i, cls=cls, shape=shape, size_x=sx, size_y=sy,
            thickness=th, mass=mass, x=x, y=y, yaw=yaw,
            color=class_color(cls, rng)))
    settle(scene)
    return scene


def _grasp_overlap(obj: SimObject, grasp: GraspRectangle, opening: float,
                   shape, resolution: float):
    """Projection interval of the object's overlap with the closing region
    onto the closing axis, and the object's own extent on that axis."""
    rr, cc = footprint_cells(obj, shape, resolution)
    if rr.size == 0:
        return None
    ca, sa = math.cos(grasp.angle), math.sin(grasp.angle)
    dx = cc * resolution - grasp.center_x
    dy = rr * resolution - grasp.center_y
    u = dx * ca + dy * sa
    v = -dx * sa + dy * ca
    extent_u = u.max() - u.min() + resolution
    hit = (np.abs(u) <= opening / 2.0) & (np.abs(v) <= grasp.finger_width / 2.0)
    if not hit.any():
        return None
    uh = u[hit]
    hit_width = float(uh.max() - uh.min()) + resolution
    # full projection of the object onto the closing axis, not just the part
    # inside the closing region: the whole object must fit between the fingers
    return (float(u.min()) - resolution / 2.0,
            float(u.max()) + resolution / 2.0,
            min(1.0, hit_width / float(extent_u)))


def _union_width(intervals) -> float:
    width = 0.0
    last = -math.inf
    for lo, hi in sorted(intervals):
        lo = max(lo, last)
        if hi > lo:
            width += hi - lo
            last = hi
    return width


def execute_grasp(scene: Scene, grasp: GraspRectangle, gripper: GripperGeometry,
                  rng: np.random.Generator,
                  slip: SlipModel | None = None,
                  resolution: float = RESOLUTION_MM) -> GraspOutcome:
    """Close the gripper at the grasp pose and remove what it catches.

    Candidates are objects protruding above z inside the closing region;
    they are kept tallest-first while their projected widths fit within the
    commanded opening.  Each grabbed object may slip during transport; the
    slip chance grows with mass and with how marginal the grip overlap is."""
    slip = slip or SlipModel()
    if not (0 <= grasp.center_x <= scene.width_mm
            and 0 <= grasp.center_y <= scene.depth_mm):
        return GraspOutcome()
    opening = grasp.inner_span + grasp.extra_opening
    shape = scene.grid_shape(resolution)
    candidates = []
    for obj in scene.objects:
        if obj.top <= grasp.z:
            continue
        overlap = _grasp_overlap(obj, grasp, opening, shape, resolution)
        if overlap is not None:
            candidates.append((obj, overlap))
    candidates.sort(key=lambda item: (-item[0].top, item[0].id))
    grabbed = []
    intervals = []
    for obj, (lo, hi, overlap_frac) in candidates:
        if _union_width(intervals + [(lo, hi)]) <= opening + 1e-9:
            intervals.append((lo, hi))
            grabbed.append((obj, overlap_frac))
    if not grabbed:
        return GraspOutcome()

    delivered, slipped = [], []
    for obj, overlap_frac in grabbed:
        if rng.random() < slip.probability(obj.mass, overlap_frac):
            slipped.append(obj)
        else:
            delivered.append(obj)

    grabbed_ids = {obj.id for obj, _ in grabbed}
    grabbed_objs = [obj for obj, _ in grabbed]
    survivors = [o for o in scene.objects if o.id not in grabbed_ids]
    for obj in survivors:
        if obj.rest_height <= 0:
            continue
        for g in grabbed_objs:
            if abs(obj.rest_height - g.top) < 1e-6 and _footprints_touch(
                    obj, g, shape, resolution):
                obj.x = float(np.clip(obj.x + rng.normal(0.0, 20.0),
                                      0.0, scene.width_mm))
                obj.y = float(np.clip(obj.y + rng.normal(0.0, 20.0),
                                      0.0, scene.depth_mm))
                break
    scene.objects = survivors
    settle(scene, resolution)
    return GraspOutcome(
        picked=delivered, slipped=slipped,
        gripper_closed_to=_union_width(intervals),
        success_before_release=bool(delivered))


def _footprints_touch(a: SimObject, b: SimObject, shape, resolution) -> bool:
    ra, ca = footprint_cells(a, shape, resolution)
    rb, cb = footprint_cells(b, shape, resolution)
    if ra.size == 0 or rb.size == 0:
        return False
    cells_a = set(zip(ra.tolist(), ca.tolist()))
    return any((r, c) in cells_a for r, c in zip(rb.tolist(), cb.tolist()))


@dataclass
class DropzoneConfig:
    frames: int = 50
    height_px: int = 120
    width_px: int = 160
    resolution: float = RESOLUTION_MM
    background_depth_mm: float = 1200.0
    noise_sigma_mm: float = 1.5
    entry_frame_range: tuple[int, int] = (5, 15)
    traverse_frames: int = 25


def synthesize_dropzone(outcome: GraspOutcome, config: DropzoneConfig,
                        rng: np.random.Generator) -> FrameStack:
    """Synthetic drop-zone camera: delivered objects cross a flat noisy
    background as colored top-down silhouettes at depth = background -
    thickness; failed picks give background-only stacks."""
    n, rows, cols = config.frames, config.height_px, config.width_px
    depth = config.background_depth_mm + rng.normal(
        0.0, config.noise_sigma_mm, size=(n, rows, cols))
    rgb = np.empty((n, rows, cols, 3), dtype=np.uint8)
    rgb[:] = BELT_GRAY
    objs = outcome.picked
    if objs:
        res = config.resolution
        lanes = len(objs)
        lane_h = rows * res / lanes
        shape = (rows, cols)
        for lane, obj in enumerate(objs):
            t0 = int(rng.integers(config.entry_frame_range[0],
                                  config.entry_frame_range[1] + 1))
            extent = math.hypot(obj.size_x, obj.size_y)
            x_start = -extent / 2.0
            x_end = cols * res + extent / 2.0
            y = (lane + 0.5) * lane_h
            for t in range(t0, min(n, t0 + config.traverse_frames + 1)):
                frac = (t - t0) / config.traverse_frames
                ghost = replace(obj, x=x_start + frac * (x_end - x_start), y=y,
                                rest_height=0.0)
                rr, cc = footprint_cells(ghost, shape, res)
                if rr.size == 0:
                    continue
                depth[t, rr, cc] = (config.background_depth_mm - obj.thickness
                                    + rng.normal(0.0, config.noise_sigma_mm,
                                                 size=rr.size))
                rgb[t, rr, cc] = obj.color
    return FrameStack(depth=depth, rgb=rgb)


def scene_to_text(scene: Scene) -> str:
    lines = [f"# belt {scene.width_mm} {scene.depth_mm}"]
    for o in scene.objects:
        lines.append(",".join(str(x) for x in (
            o.id, o.cls, o.shape, o.size_x, o.size_y, o.thickness, o.mass,
            o.x, o.y, o.yaw)))
    return "\n".join(lines) + "\n"


def text_to_scene(text: str) -> Scene:
    scene = Scene()
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if parts and parts[0] == "belt":
                scene.width_mm = float(parts[1])
                scene.depth_mm = float(parts[2])
            continue
        f = line.split(",")
        if len(f) != 10:
            raise ValueError(f"bad scene line: {line!r}")
        scene.objects.append(SimObject(
            id=int(f[0]), cls=f[1], shape=f[2], size_x=float(f[3]),
            size_y=float(f[4]), thickness=float(f[5]), mass=float(f[6]),
            x=float(f[7]), y=float(f[8]), yaw=float(f[9]),
            color=class_color(f[1])))
    settle(scene)
    return scene


def save_scene(scene: Scene, path) -> None:
    with open(path, "w") as f:
        f.write(scene_to_text(scene))


def load_scene(path) -> Scene:
    with open(path) as f:
        return text_to_scene(f.read())
