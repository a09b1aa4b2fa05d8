import math

import numpy as np
import pytest

from pilesort.feedback import result
from pilesort.grasp import GraspRectangle, GripperGeometry
from pilesort.simworld import (CLASSES, DropzoneConfig, GraspOutcome,
                               PileConfig, Scene, SimObject, SlipModel,
                               class_color, execute_grasp, footprint_cells,
                               generate_pile, load_scene, save_scene,
                               scene_surfaces, settle, synthesize_dropzone,
                               text_to_scene, scene_to_text)


def box(oid, x, y, sx=100, sy=100, th=40, cls="red", yaw=0.0, mass=1.0):
    return SimObject(oid, cls, "box", sx, sy, th, mass, x, y, yaw)


class TestFootprint:
    def test_box_area(self):
        scene = Scene(width_mm=500, depth_mm=500)
        rr, cc = footprint_cells(box(0, 250, 250), scene.grid_shape())
        # 100x100 mm at 5 mm/px -> about 21x21 sampled cells
        assert abs(rr.size - 441) <= 44

    def test_disc_area(self):
        scene = Scene(width_mm=500, depth_mm=500)
        disc = SimObject(0, "red", "disc", 100, 100, 40, 1.0, 250, 250, 0.0)
        rr, cc = footprint_cells(disc, scene.grid_shape())
        assert abs(rr.size - math.pi * 10 ** 2) <= 40

    def test_rotation_invariant_area(self):
        scene = Scene(width_mm=500, depth_mm=500)
        a = footprint_cells(box(0, 250, 250, yaw=0.0), scene.grid_shape())[0].size
        b = footprint_cells(box(0, 250, 250, yaw=0.7), scene.grid_shape())[0].size
        assert abs(a - b) / a < 0.1

    def test_off_belt_empty(self):
        scene = Scene(width_mm=500, depth_mm=500)
        rr, cc = footprint_cells(box(0, -400, -400), scene.grid_shape())
        assert rr.size == 0


class TestSettle:
    def test_single_on_belt(self):
        scene = Scene(objects=[box(0, 500, 500)], width_mm=1000, depth_mm=1000)
        settle(scene)
        assert scene.objects[0].rest_height == 0.0
        assert scene.objects[0].top == 40.0

    def test_stacking(self):
        scene = Scene(objects=[box(0, 500, 500, th=30),
                               box(1, 520, 500, th=25)],
                      width_mm=1000, depth_mm=1000)
        settle(scene)
        assert scene.objects[0].rest_height == 0.0
        assert scene.objects[1].rest_height == 30.0
        assert scene.objects[1].top == 55.0

    def test_disjoint_objects_all_on_belt(self):
        scene = Scene(objects=[box(0, 200, 200), box(1, 800, 800)],
                      width_mm=1000, depth_mm=1000)
        settle(scene)
        assert all(o.rest_height == 0.0 for o in scene.objects)

    def test_tower(self):
        objs = [box(i, 500, 500, th=20) for i in range(4)]
        scene = Scene(objects=objs, width_mm=1000, depth_mm=1000)
        settle(scene)
        assert [o.rest_height for o in objs] == [0.0, 20.0, 40.0, 60.0]


class TestSurfaces:
    def test_heights_and_colors(self):
        a = box(0, 300, 300, th=30)
        a.color = (200, 0, 0)
        b = box(1, 330, 300, th=25)
        b.color = (0, 200, 0)
        scene = Scene(objects=[a, b], width_mm=600, depth_mm=600)
        settle(scene)
        heights, rgb = scene_surfaces(scene)
        assert heights.max() == 55.0
        # the stacked object's color wins where both overlap
        assert (rgb[60, 66] == (0, 200, 0)).all()
        assert heights[0, 0] == 0.0


class TestGeneratePile:
    def test_counts_and_fields(self):
        rng = np.random.default_rng(0)
        cfg = PileConfig()
        for _ in range(20):
            scene = generate_pile(cfg, rng, Scene(width_mm=1000, depth_mm=800))
            assert cfg.min_objects <= len(scene.objects) <= cfg.max_objects
            for o in scene.objects:
                assert o.cls in CLASSES
                assert cfg.min_size <= o.size_x <= cfg.max_size
                assert cfg.min_thickness <= o.thickness <= cfg.max_thickness
                assert 0 <= o.x <= 1000 and 0 <= o.y <= 800
                assert o.mass > 0

    def test_mass_formula(self):
        rng = np.random.default_rng(1)
        cfg = PileConfig(density_min=1.0, density_max=1.0, disc_fraction=0.0)
        scene = generate_pile(cfg, rng, Scene(width_mm=1000, depth_mm=800))
        for o in scene.objects:
            assert o.mass == pytest.approx(o.size_x * o.size_y * o.thickness * 1e-6)

    def test_ids_continue(self):
        rng = np.random.default_rng(2)
        scene = generate_pile(PileConfig(), rng, Scene(width_mm=1000, depth_mm=800))
        n = len(scene.objects)
        scene = generate_pile(PileConfig(), rng, scene, next_id=n)
        ids = [o.id for o in scene.objects]
        assert ids == list(range(len(ids)))

    def test_colors_classifiable(self):
        # jittered colors must still land in their own feedback color box
        from pilesort.feedback import classify_pixels, default_hsv_boxes
        rng = np.random.default_rng(3)
        boxes = default_hsv_boxes()
        for _ in range(300):
            for i, cls in enumerate(CLASSES):
                px = np.array([class_color(cls, rng)], dtype=np.uint8)
                counts = classify_pixels(px, boxes)
                assert counts[i] == 1, (cls, px)


class TestSlipModel:
    def test_monotone_in_mass(self):
        m = SlipModel(base=0.1, per_kg=0.05)
        assert m.probability(2.0, 1.0) == pytest.approx(0.2)
        assert m.probability(5.0, 1.0) > m.probability(1.0, 1.0)

    def test_grip_penalty(self):
        m = SlipModel(base=0.0, per_kg=0.0, grip_penalty=0.4)
        assert m.probability(1.0, 1.0) == 0.0
        assert m.probability(1.0, 0.5) == pytest.approx(0.2)

    def test_cap(self):
        m = SlipModel(base=0.5, per_kg=1.0, cap=0.9)
        assert m.probability(100.0, 0.0) == 0.9


class TestExecuteGrasp:
    @staticmethod
    def _lone_scene():
        scene = Scene(objects=[box(0, 500, 500, sx=80, sy=80, th=40)],
                      width_mm=1000, depth_mm=1000)
        settle(scene)
        return scene

    def test_clean_pick(self):
        scene = self._lone_scene()
        g = GraspRectangle(500, 500, 0.0, 100, 80, 0.0)
        out = execute_grasp(scene, g, GripperGeometry(),
                            np.random.default_rng(0), SlipModel(base=0.0, per_kg=0.0))
        assert [o.id for o in out.picked] == [0]
        assert out.success_before_release
        assert scene.objects == []
        assert out.gripper_closed_to == pytest.approx(85.0, abs=5.0)

    def test_miss(self):
        scene = self._lone_scene()
        g = GraspRectangle(150, 150, 0.0, 100, 80, 0.0)
        out = execute_grasp(scene, g, GripperGeometry(), np.random.default_rng(0))
        assert out.picked == [] and not out.success_before_release
        assert len(scene.objects) == 1

    def test_z_above_object_grabs_nothing(self):
        scene = self._lone_scene()
        g = GraspRectangle(500, 500, 0.0, 100, 80, 60.0)
        out = execute_grasp(scene, g, GripperGeometry(), np.random.default_rng(0))
        assert out.picked == []

    def test_certain_slip(self):
        scene = self._lone_scene()
        g = GraspRectangle(500, 500, 0.0, 100, 80, 0.0)
        out = execute_grasp(scene, g, GripperGeometry(), np.random.default_rng(0),
                            SlipModel(base=1.0, cap=1.0))
        assert out.picked == [] and [o.id for o in out.slipped] == [0]
        assert not out.success_before_release
        assert scene.objects == []  # slipped objects still leave the pile

    def test_out_of_bounds_center(self):
        scene = self._lone_scene()
        g = GraspRectangle(-50, 500, 0.0, 100, 80, 0.0)
        out = execute_grasp(scene, g, GripperGeometry(), np.random.default_rng(0))
        assert out.picked == [] and len(scene.objects) == 1

    def test_opening_limits_multigrab(self):
        scene = Scene(objects=[box(0, 480, 500, sx=60, sy=60),
                               box(1, 560, 500, sx=60, sy=60)],
                      width_mm=1000, depth_mm=1000)
        settle(scene)
        slip = SlipModel(base=0.0, per_kg=0.0)
        narrow = GraspRectangle(520, 500, 0.0, 70, 80, 0.0)
        wide = GraspRectangle(520, 500, 0.0, 160, 80, 0.0)
        s1 = Scene(objects=[box(0, 480, 500, sx=60, sy=60),
                            box(1, 560, 500, sx=60, sy=60)],
                   width_mm=1000, depth_mm=1000)
        settle(s1)
        out_n = execute_grasp(s1, narrow, GripperGeometry(),
                              np.random.default_rng(0), slip)
        out_w = execute_grasp(scene, wide, GripperGeometry(),
                              np.random.default_rng(0), slip)
        assert len(out_n.picked) == 1
        assert len(out_w.picked) == 2

    def test_tallest_wins_contested_opening(self):
        base = box(0, 500, 500, sx=120, sy=120, th=30)
        top = box(1, 500, 500, sx=60, sy=60, th=30)
        scene = Scene(objects=[base, top], width_mm=1000, depth_mm=1000)
        settle(scene)
        g = GraspRectangle(500, 500, 0.0, 70, 80, 40.0)  # above the base top
        out = execute_grasp(scene, g, GripperGeometry(), np.random.default_rng(0),
                            SlipModel(base=0.0, per_kg=0.0))
        assert [o.id for o in out.picked] == [1]
        assert [o.id for o in scene.objects] == [0]


class TestDropzone:
    def test_empty_outcome_is_background(self):
        stack = synthesize_dropzone(GraspOutcome(), DropzoneConfig(),
                                    np.random.default_rng(0))
        assert stack.depth.shape == (50, 120, 160)
        assert abs(stack.depth.mean() - 1200.0) < 1.0
        assert result(stack).counts.tolist() == [0, 0, 0, 0]

    def test_delivered_object_is_seen(self):
        obj = box(0, 0, 0, sx=100, sy=100, th=40)
        obj.color = class_color("red")
        out = GraspOutcome(picked=[obj], success_before_release=True)
        stack = synthesize_dropzone(out, DropzoneConfig(), np.random.default_rng(1))
        counts = result(stack).counts
        assert counts[0] > 0
        assert counts[0] > counts[1] + counts[2] + counts[3]

    def test_counts_near_silhouette(self):
        obj = box(0, 0, 0, sx=120, sy=90, th=45)
        obj.color = class_color("bluegreen")
        out = GraspOutcome(picked=[obj], success_before_release=True)
        stack = synthesize_dropzone(out, DropzoneConfig(), np.random.default_rng(2))
        counts = result(stack).counts
        silhouette = 120 * 90 / 25.0  # px at 5 mm resolution
        assert abs(counts.sum() - silhouette) / silhouette < 0.15
        assert counts[2] / counts.sum() > 0.9

    def test_two_objects_two_lanes(self):
        a = box(0, 0, 0, sx=100, sy=100, th=40)
        a.color = class_color("red")
        b = box(1, 0, 0, sx=100, sy=100, th=40, cls="yellow")
        b.color = class_color("yellow")
        out = GraspOutcome(picked=[a, b], success_before_release=True)
        stack = synthesize_dropzone(out, DropzoneConfig(), np.random.default_rng(3))
        counts = result(stack).counts
        assert counts[0] > 0 and counts[1] > 0


class TestSceneSerialization:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        scene = generate_pile(PileConfig(), rng, Scene(width_mm=900, depth_mm=700))
        path = tmp_path / "scene.txt"
        save_scene(scene, path)
        loaded = load_scene(path)
        assert loaded.width_mm == 900 and loaded.depth_mm == 700
        assert len(loaded.objects) == len(scene.objects)
        for a, b in zip(scene.objects, loaded.objects):
            assert (a.id, a.cls, a.shape) == (b.id, b.cls, b.shape)
            assert a.x == b.x and a.y == b.y and a.yaw == b.yaw
            assert a.mass == b.mass and a.thickness == b.thickness
            assert a.rest_height == b.rest_height

    def test_bad_line(self):
        with pytest.raises(ValueError):
            text_to_scene("# belt 100 100\n1,red,box,10\n")

    def test_header_optional_defaults(self):
        scene = text_to_scene("")
        assert scene.width_mm == 2000.0 and scene.objects == []
