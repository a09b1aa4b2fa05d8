import math

import numpy as np
import pytest

from pilesort.heightmap import (Heightmap, capture, maximum_filter,
                                maximum_filter_array, rotate_heightmap)
from pilesort.simworld import Scene, SimObject, settle


def naive_max_filter(a, kw, kh):
    rows, cols = a.shape
    out = np.empty_like(a)
    lw, lh = (kw - 1) // 2, (kh - 1) // 2
    for r in range(rows):
        for c in range(cols):
            r0, r1 = max(0, r - lh), min(rows, r + (kh - 1 - lh) + 1)
            c0, c1 = max(0, c - lw), min(cols, c + (kw - 1 - lw) + 1)
            out[r, c] = a[r0:r1, c0:c1].max()
    return out


class TestRotate:
    def test_identity_angle(self):
        rng = np.random.default_rng(0)
        h = Heightmap(rng.integers(0, 100, (20, 30)).astype(float))
        r = rotate_heightmap(h, 0.0)
        assert np.array_equal(r.data, h.data)

    def test_flat_map_stays_flat(self):
        h = Heightmap(np.full((20, 20), 0.0))
        for angle in (0.3, math.pi / 4, 1.2):
            r = rotate_heightmap(h, angle)
            assert (r.data == 0.0).all()

    def test_center_peak_quarter_turn(self):
        data = np.zeros((21, 21))
        data[10, 10] = 50.0
        r = rotate_heightmap(Heightmap(data), math.pi / 2)
        rows, cols = r.data.shape
        assert r.data[rows // 2, cols // 2] == 50.0
        assert r.data.sum() == 50.0

    def test_round_trip_recovers_interior_features(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            data = np.zeros((40, 40))
            r0, c0 = rng.integers(12, 22, 2)
            data[r0:r0 + 6, c0:c0 + 6] = 80.0
            angle = rng.uniform(0.1, math.pi - 0.1)
            back = rotate_heightmap(rotate_heightmap(Heightmap(data), angle),
                                    -angle).data
            rows, cols = back.shape
            rr0 = (rows - 40) // 2
            cc0 = (cols - 40) // 2
            crop = back[rr0:rr0 + 40, cc0:cc0 + 40]
            # nearest-neighbor: allow a 1-px boundary band to disagree
            interior = data[r0 + 1:r0 + 5, c0 + 1:c0 + 5]
            got = crop[r0 + 1:r0 + 5, c0 + 1:c0 + 5]
            assert np.array_equal(got, interior)


class TestMaximumFilter:
    def test_flat(self):
        h = Heightmap(np.full((10, 12), 7.0))
        assert np.array_equal(maximum_filter(h, 3, 5).data, h.data)

    def test_kernel_one_is_identity(self):
        rng = np.random.default_rng(1)
        h = Heightmap(rng.random((15, 9)))
        assert np.array_equal(maximum_filter(h, 1, 1).data, h.data)

    def test_peak_dilation(self):
        data = np.zeros((9, 9))
        data[4, 4] = 100.0
        out = maximum_filter(Heightmap(data), 3, 3).data
        expected = np.zeros((9, 9))
        expected[3:6, 3:6] = 100.0
        assert np.array_equal(out, expected)

    def test_matches_naive_on_random_maps(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            a = rng.integers(0, 50, (int(rng.integers(1, 32)),
                                     int(rng.integers(1, 32)))).astype(float)
            kw = int(rng.integers(1, 9))
            kh = int(rng.integers(1, 9))
            assert np.array_equal(maximum_filter_array(a, kw, kh),
                                  naive_max_filter(a, kw, kh))

    def test_growing_property(self):
        rng = np.random.default_rng(4)
        a = rng.random((20, 20)) * 100
        small = maximum_filter_array(a, 3, 3)
        big = maximum_filter_array(a, 5, 7)
        assert (small >= a).all()
        assert (big >= small).all()

    def test_bad_kernel_rejected(self):
        with pytest.raises(ValueError):
            maximum_filter_array(np.zeros((4, 4)), 0, 1)


def los_visible(heights, row, col, cam_col, cam_height):
    """Independent per-ray oracle: sample the camera ray densely and check
    the surface never rises above it."""
    h = heights[row, col]
    steps = 200
    for t in np.linspace(0.0, 1.0, steps + 1)[1:-1]:
        x = cam_col + t * (col - cam_col)
        ray_h = cam_height + t * (h - cam_height)
        surf = heights[row, int(round(x))]
        if surf > ray_h + 1e-6:
            return False
    return True


class TestCapture:
    def test_empty_scene(self):
        scene = Scene(width_mm=500, depth_mm=400)
        hm, rgb, um = capture(scene, 250)
        assert (hm.data == 0).all()
        assert not um.data.any()

    def test_box_under_camera_has_no_unknown(self):
        scene = Scene(width_mm=500, depth_mm=400)
        scene.objects.append(SimObject(0, "red", "box", 100, 100, 100, 0.5,
                                       250, 200, 0.0))
        settle(scene)
        hm, rgb, um = capture(scene, 250)
        assert hm.data.max() == 100.0
        assert not um.data.any()

    def test_offset_box_shadow_matches_ray_oracle(self):
        scene = Scene(width_mm=1000, depth_mm=300)
        scene.objects.append(SimObject(0, "red", "box", 100, 100, 200, 1.0,
                                       800, 150, 0.0))
        settle(scene)
        hm, rgb, um = capture(scene, 100)
        assert um.data.any()
        assert (hm.data[um.data] == 200.0).all()
        from pilesort.simworld import scene_surfaces
        heights, _ = scene_surfaces(scene)
        cam_col = 100 / 5.0
        rows, cols = um.data.shape
        for row in range(27, 33):
            for col in range(140, cols):
                visible = los_visible(heights, row, col, cam_col, 2000.0)
                occluded_drop = (not visible
                                 and heights[row, col] < 200.0 - 20.0)
                assert um.data[row, col] == occluded_drop, (row, col)
