"""The main self-supervised sorting loop: propose, evaluate, select,
execute, read feedback, append training data, retrain.

The pick loop and the trainer are two logical actors; here they are
interleaved in one thread with the same observable ordering (a complete
model pair is published atomically after each retrain and the loop always
reads the latest published pair)."""
from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import feedback, forest, policy
from .feedback import ColorCounts
from .features import (color_feature_matrix, success_feature_matrix,
                       FeatureVector)
from .grasp import (GraspRectangle, GripperGeometry, apply_openings,
                    closed_grasps, weighted_sample)
from .heightmap import capture
from .policy import NUM_CLASSES, Proposal
from .simworld import (DropzoneConfig, PileConfig, Scene, SlipModel,
                       execute_grasp, generate_pile, synthesize_dropzone)

DEFAULT_SAMPLE = 2000


@dataclass
class ExperimentConfig:
    pick_budget: int = 500
    belt_width_mm: float = 1000.0
    belt_depth_mm: float = 750.0
    camera_height_mm: float = 2000.0
    occlusion_depth_step_mm: float = 20.0
    # pile generation / refresh
    pile_min_objects: int = 6
    pile_max_objects: int = 10
    refresh_min_objects: int = 3
    refresh_skip_limit: int = 5
    object_min_size_mm: float = 60.0
    object_max_size_mm: float = 160.0
    object_min_thickness_mm: float = 25.0
    object_max_thickness_mm: float = 60.0
    density_min: float = 0.3
    density_max: float = 3.0
    disc_fraction: float = 0.3
    # gripper + proposal generation
    finger_thickness_mm: float = 30.0
    finger_width_mm: float = 80.0
    min_opening_mm: float = 20.0
    max_opening_mm: float = 250.0
    num_angles: int = 16
    grasp_sample: int = 80
    max_extra_opening_mm: float = 20.0
    # policy
    skip_threshold: float = 0.1
    skip_probability: float = 0.95
    purity_center: float = 0.8
    purity_slope: float = 20.0
    pixel_scale: float = 5000.0
    # learning
    learning_enabled: bool = True
    retrain_every: int = 5
    trees_success: int = 40
    trees_color: int = 40
    k_success: int = 0   # 0 = ceil(sqrt(d))
    k_color: int = 0     # 0 = all features
    n_min_success: int = 5
    n_min_color: int = 2
    robot_fault_prob: float = 0.0
    # slip model (tuned so a perfect policy clears 0.9 success)
    base_slip: float = 0.02
    slip_per_kg: float = 0.05
    grip_penalty: float = 0.8
    slip_cap: float = 0.9
    # drop zone camera
    dropzone_frames: int = 50
    dropzone_width_px: int = 160
    dropzone_height_px: int = 120
    dropzone_bg_depth_mm: float = 1200.0
    dropzone_noise_mm: float = 1.5

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#")[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key = value")
                key, _, value = line.partition("=")
                key, value = key.strip(), value.strip()
                if key not in fields:
                    raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
                ftype = fields[key].type
                if ftype == "int":
                    kwargs[key] = int(value)
                elif ftype == "float":
                    kwargs[key] = float(value)
                elif ftype == "bool":
                    if value.lower() not in ("true", "false"):
                        raise ValueError(f"{path}:{lineno}: bad bool {value!r}")
                    kwargs[key] = value.lower() == "true"
                else:
                    kwargs[key] = value
        return cls(**kwargs)

    def gripper(self) -> GripperGeometry:
        return GripperGeometry(
            finger_thickness=self.finger_thickness_mm,
            finger_width=self.finger_width_mm,
            min_opening=self.min_opening_mm,
            max_opening=self.max_opening_mm)

    def pile(self) -> PileConfig:
        return PileConfig(
            min_objects=self.pile_min_objects,
            max_objects=self.pile_max_objects,
            min_size=self.object_min_size_mm,
            max_size=self.object_max_size_mm,
            min_thickness=self.object_min_thickness_mm,
            max_thickness=self.object_max_thickness_mm,
            density_min=self.density_min, density_max=self.density_max,
            disc_fraction=self.disc_fraction)

    def slip(self) -> SlipModel:
        return SlipModel(base=self.base_slip, per_kg=self.slip_per_kg,
                         grip_penalty=self.grip_penalty, cap=self.slip_cap)

    def dropzone(self) -> DropzoneConfig:
        return DropzoneConfig(
            frames=self.dropzone_frames, height_px=self.dropzone_height_px,
            width_px=self.dropzone_width_px,
            background_depth_mm=self.dropzone_bg_depth_mm,
            noise_sigma_mm=self.dropzone_noise_mm)

    def forest_params(self, kind: str) -> forest.ForestParams:
        if kind == "classifier":
            return forest.ForestParams(
                n_trees=self.trees_success,
                k_features=self.k_success or None,
                n_min=self.n_min_success)
        return forest.ForestParams(
            n_trees=self.trees_color,
            k_features=self.k_color or None,
            n_min=self.n_min_color)


@dataclass
class TrainingExample:
    success_features: np.ndarray
    color_features: np.ndarray
    counts: np.ndarray  # (4,) observed pixels

    @property
    def succeeded(self) -> bool:
        return bool(self.counts.sum() > 0)


@dataclass
class ModelPair:
    """Published model snapshot; `color` may be a Forest, None (null model:
    all mass on the unknown pseudo-class) or "uniform" (no-learning baseline
    spreading mass over the real classes)."""

    success: forest.Forest | None = None
    color: forest.Forest | str | None = None
    version: int = 0

    def success_probabilities(self, X: np.ndarray) -> np.ndarray:
        if self.success is None:
            return np.ones(X.shape[0])
        probs = self.success.predict_many(X)
        idx = np.nonzero(self.success.classes == 1)[0]
        if idx.size == 0:
            return np.zeros(X.shape[0])
        return probs[:, idx[0]]

    def color_proportions(self, X: np.ndarray) -> np.ndarray:
        if self.color is None:
            out = np.zeros((X.shape[0], NUM_CLASSES))
            out[:, policy.UNKNOWN_CLASS] = 1.0
            return out
        if self.color == "uniform":
            out = np.full((X.shape[0], NUM_CLASSES), 1.0 / (NUM_CLASSES - 1))
            out[:, policy.UNKNOWN_CLASS] = 0.0
            return out
        return self.color.predict_many(X)


@dataclass
class PickRecord:
    tick: int
    executed: bool
    center_x: float = 0.0
    center_y: float = 0.0
    angle: float = 0.0
    inner_span: float = 0.0
    extra_opening: float = 0.0
    z: float = 0.0
    p_success: float = 0.0
    predicted: np.ndarray = field(default_factory=lambda: np.zeros(4))
    target: int = -1
    counts: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=np.int64))
    succeeded: bool = False


def proposed_grasps(scene: Scene, gripper: GripperGeometry,
                    rng: np.random.Generator,
                    sample: int = DEFAULT_SAMPLE,
                    num_angles: int = 16,
                    max_extra_opening: float | None = None,
                    camera_x: float | None = None,
                    camera_height: float = 2000.0,
                    occlusion_depth_step_mm: float = 20.0) -> list[Proposal]:
    """Capture the scene and run the full fixed-function proposal pipeline:
    closed grasps, weighted sampling, extra openings, features."""
    if camera_x is None:
        camera_x = scene.width_mm / 2.0
    hm, rgb, um = capture(scene, camera_x, camera_height, occlusion_depth_step_mm)
    cache: dict = {}
    cands = closed_grasps(hm, gripper, num_angles, cache)
    sampled = weighted_sample(cands, sample, rng)
    opened = apply_openings(sampled, hm, gripper, max_extra_opening, cache)
    if not opened:
        return []
    Xs = success_feature_matrix(opened, hm, rgb, um)
    Xc = color_feature_matrix(opened, hm, rgb)
    return [Proposal(g, FeatureVector(Xs[i], "success"),
                     FeatureVector(Xc[i], "color"))
            for i, g in enumerate(opened)]


def train(data: list[TrainingExample], config: ExperimentConfig,
          rng: np.random.Generator, version: int = 1) -> ModelPair:
    """Retrain both models from scratch on all accumulated data.

    The classifier sees every example; the color regressor sees only
    successful picks, with counts normalized to proportions."""
    if not data:
        return ModelPair(version=version)
    Xs = np.vstack([ex.success_features for ex in data])
    ys = np.array([1 if ex.succeeded else 0 for ex in data])
    success = forest.fit(Xs, ys, "classifier",
                         config.forest_params("classifier"), rng)
    successes = [ex for ex in data if ex.succeeded]
    color = None
    if successes:
        Xc = np.vstack([ex.color_features for ex in successes])
        counts = np.vstack([ex.counts for ex in successes]).astype(float)
        Yc = counts / counts.sum(axis=1, keepdims=True)
        color = forest.fit(Xc, Yc, "regressor",
                           config.forest_params("regressor"), rng)
    return ModelPair(success=success, color=color, version=version)


def run(config: ExperimentConfig, rng: np.random.Generator,
        on_retrain=None) -> list[PickRecord]:
    """Run the sorting loop until `pick_budget` grasps have been executed.

    Deterministic for a fixed config + generator seed.  `on_retrain` is
    called with (executed_count, ModelPair) after each publish, e.g. for
    checkpointing."""
    r_pile, r_sample, r_policy, r_sim, r_frames, r_train = rng.spawn(6)
    gripper = config.gripper()
    pile_cfg = config.pile()
    slip = config.slip()
    dz_cfg = config.dropzone()
    scene = Scene(width_mm=config.belt_width_mm, depth_mm=config.belt_depth_mm)
    if config.learning_enabled:
        models = ModelPair()
    else:
        models = ModelPair(color="uniform")
    data: list[TrainingExample] = []
    records: list[PickRecord] = []
    next_id = 0
    consecutive_skips = 0
    executed = 0
    tick = 0
    while executed < config.pick_budget:
        if (len(scene.objects) < config.refresh_min_objects
                or consecutive_skips >= config.refresh_skip_limit):
            before = len(scene.objects)
            generate_pile(pile_cfg, r_pile, scene, next_id)
            next_id += len(scene.objects) - before
            consecutive_skips = 0
        proposals = proposed_grasps(
            scene, gripper, r_sample, config.grasp_sample, config.num_angles,
            config.max_extra_opening_mm,
            camera_x=scene.width_mm / 2.0,
            camera_height=config.camera_height_mm,
            occlusion_depth_step_mm=config.occlusion_depth_step_mm)
        evaluated = policy.evaluate(models, proposals, config.pixel_scale,
                                    config.purity_center, config.purity_slope)
        decision = policy.select(evaluated, r_policy, config.skip_threshold,
                                 config.skip_probability)
        if decision.skip:
            rec = PickRecord(tick=tick, executed=False)
            if decision.evaluated is not None:
                _fill_prediction(rec, decision.evaluated)
            records.append(rec)
            consecutive_skips += 1
            tick += 1
            continue
        consecutive_skips = 0
        outcome = execute_grasp(scene, decision.grasp, gripper, r_sim, slip)
        if outcome.gripper_closed_to <= 0:
            counts = np.zeros(4, dtype=np.int64)
        else:
            stack = synthesize_dropzone(outcome, dz_cfg, r_frames)
            counts = feedback.result(stack).counts
        rec = PickRecord(tick=tick, executed=True, counts=counts,
                         succeeded=bool(counts.sum() > 0))
        _fill_prediction(rec, decision.evaluated)
        records.append(rec)
        executed += 1
        tick += 1
        # the pick-sequence-failed-before-release branch appends no example
        if r_sim.random() >= config.robot_fault_prob:
            chosen = proposals[decision.index]
            data.append(TrainingExample(
                success_features=chosen.success_features.values,
                color_features=chosen.color_features.values,
                counts=counts))
        if config.learning_enabled and executed % config.retrain_every == 0:
            models = train(data, config, r_train, version=models.version + 1)
            if on_retrain is not None:
                on_retrain(executed, models)
    return records


def _fill_prediction(rec: PickRecord, ev: policy.EvaluatedGrasp) -> None:
    g = ev.grasp
    rec.center_x, rec.center_y, rec.angle = g.center_x, g.center_y, g.angle
    rec.inner_span, rec.extra_opening, rec.z = g.inner_span, g.extra_opening, g.z
    rec.p_success = ev.p_success
    rec.predicted = ev.expected_colors
    rec.target = ev.target


def block_metrics(records: list[PickRecord], block_size: int = 25):
    """(block index, success rate, purity) per complete block of executed
    picks; purity is None for blocks with no observed pixels."""
    executed = [r for r in records if r.executed]
    blocks = []
    for b in range(len(executed) // block_size):
        chunk = executed[b * block_size:(b + 1) * block_size]
        rate = sum(r.succeeded for r in chunk) / block_size
        target_px = sum(int(r.counts[r.target]) for r in chunk if r.target >= 0)
        total_px = sum(int(r.counts.sum()) for r in chunk)
        purity = target_px / total_px if total_px > 0 else None
        blocks.append((b, rate, purity))
    return blocks


LOG_COLUMNS = ("tick,executed,center_x,center_y,angle,inner_span,extra_opening,"
               "z,p_success,pred_red,pred_yellow,pred_bluegreen,pred_unknown,"
               "target,obs_red,obs_yellow,obs_bluegreen,obs_unknown,succeeded")


def write_log(records: list[PickRecord], path) -> None:
    with open(path, "w") as f:
        f.write(LOG_COLUMNS + "\n")
        for r in records:
            row = [str(r.tick), str(int(r.executed)),
                   *(f"{v:.6f}" for v in (r.center_x, r.center_y, r.angle,
                                          r.inner_span, r.extra_opening, r.z,
                                          r.p_success)),
                   *(f"{v:.3f}" for v in r.predicted),
                   str(r.target),
                   *(str(int(v)) for v in r.counts),
                   str(int(r.succeeded))]
            f.write(",".join(row) + "\n")


def read_log(path) -> list[PickRecord]:
    records = []
    with open(path) as f:
        header = f.readline().strip()
        if header != LOG_COLUMNS:
            raise ValueError(f"{path}: unrecognized log header")
        for line in f:
            v = line.strip().split(",")
            records.append(PickRecord(
                tick=int(v[0]), executed=bool(int(v[1])),
                center_x=float(v[2]), center_y=float(v[3]), angle=float(v[4]),
                inner_span=float(v[5]), extra_opening=float(v[6]),
                z=float(v[7]), p_success=float(v[8]),
                predicted=np.array([float(x) for x in v[9:13]]),
                target=int(v[13]),
                counts=np.array([int(x) for x in v[14:18]], dtype=np.int64),
                succeeded=bool(int(v[18]))))
    return records
