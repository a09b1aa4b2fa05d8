"""Grid containers and image operations used by the grasp search and simulation.

All grids are numpy arrays indexed [row, col]; world coordinates are
x = col * resolution, y = row * resolution, in millimetres.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

RESOLUTION_MM = 5.0
BELT_GRAY = (110, 110, 110)

DEFAULT_CAMERA_HEIGHT_MM = 2000.0
DEFAULT_OCCLUSION_STEP_MM = 20.0


@dataclass
class Heightmap:
    """Dense top-down grid of surface heights in mm above the belt."""

    data: np.ndarray
    resolution: float = RESOLUTION_MM

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError("heightmap data must be 2D")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass
class RgbMap:
    """Companion RGB grid, uint8 triples in [0, 255]."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.uint8)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ValueError("rgb data must be (rows, cols, 3)")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass
class UnknownMask:
    """True where the cell is occluded; the heightmap then stores the maximum
    possible height of the hidden volume."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=bool)
        if self.data.ndim != 2:
            raise ValueError("mask data must be 2D")


def rotated_shape(shape: tuple[int, int], angle: float) -> tuple[int, int]:
    """Bounding-box shape of a grid of `shape` rotated by `angle`."""
    rows, cols = shape
    c, s = abs(math.cos(angle)), abs(math.sin(angle))
    return (int(math.ceil(rows * c + cols * s)),
            int(math.ceil(rows * s + cols * c)))


def rotate_array(a: np.ndarray, angle: float, pad=0.0) -> np.ndarray:
    """Rotate grid content by `angle` so that lines at that angle in the input
    become horizontal rows; nearest-neighbor, out-of-bounds reads `pad`."""
    rows, cols = a.shape[:2]
    out_rows, out_cols = rotated_shape((rows, cols), angle)
    cy, cx = (rows - 1) / 2.0, (cols - 1) / 2.0
    ocy, ocx = (out_rows - 1) / 2.0, (out_cols - 1) / 2.0
    rr, cc = np.meshgrid(np.arange(out_rows), np.arange(out_cols), indexing="ij")
    dx = cc - ocx
    dy = rr - ocy
    c, s = math.cos(angle), math.sin(angle)
    # output -> input is the forward rotation (input -> output is R(-angle))
    src_x = np.rint(cx + c * dx - s * dy).astype(np.int64)
    src_y = np.rint(cy + s * dx + c * dy).astype(np.int64)
    inside = (src_x >= 0) & (src_x < cols) & (src_y >= 0) & (src_y < rows)
    out_shape = (out_rows, out_cols) + a.shape[2:]
    out = np.full(out_shape, pad, dtype=a.dtype)
    out[inside] = a[src_y[inside], src_x[inside]]
    return out


def rotate_heightmap(h: Heightmap, angle: float) -> Heightmap:
    """Rotate a heightmap by `angle` in [0, pi); belt level outside the map."""
    return Heightmap(rotate_array(h.data, angle, pad=0.0), h.resolution)


@njit(cache=True)
def _slide_max_rows(a, k):
    """Sliding-window maximum along each row via a monotonic deque; the
    window of width k is centered (extra element on the right for even k)
    and clamped at the borders. O(1) amortized per output element."""
    n_rows, n_cols = a.shape
    left = (k - 1) // 2
    out = np.empty_like(a)
    idx = np.empty(n_cols, np.int64)
    for r in range(n_rows):
        head = 0
        tail = 0
        p = 0
        for j in range(n_cols):
            while tail > head and a[r, idx[tail - 1]] <= a[r, j]:
                tail -= 1
            idx[tail] = j
            tail += 1
            # emit every position whose window right end has arrived
            # (or is clamped by the array end)
            while p < n_cols and (j - p >= k - 1 - left or j == n_cols - 1):
                while idx[head] < p - left:
                    head += 1
                out[r, p] = a[r, idx[head]]
                p += 1
    return out


def maximum_filter(h: Heightmap, kernel_w: int, kernel_h: int) -> Heightmap:
    """Windowed maximum with a centered kernel_w x kernel_h kernel."""
    out = maximum_filter_array(h.data, kernel_w, kernel_h)
    return Heightmap(out, h.resolution)


def maximum_filter_array(a: np.ndarray, kernel_w: int, kernel_h: int) -> np.ndarray:
    if kernel_w < 1 or kernel_h < 1:
        raise ValueError("kernel dims must be >= 1")
    a = np.ascontiguousarray(a, dtype=np.float64)
    if kernel_w > 1:
        a = _slide_max_rows(a, kernel_w)
    if kernel_h > 1:
        a = _slide_max_rows(np.ascontiguousarray(a.T), kernel_h).T
    return np.ascontiguousarray(a)


@njit(cache=True)
def _shadow_march(heights, cam_col, cam_height, depth_step, out_h, unknown):
    """Per-row line-of-sight march away from the camera nadir column.

    A cell is occluded when the ray from the camera to it passes below an
    earlier, taller surface; occluded cells whose hidden drop exceeds
    depth_step are flagged unknown and raised to the occluder height."""
    n_rows, n_cols = heights.shape
    for r in range(n_rows):
        for direction in (1, -1):
            best_slope = 1e30  # min downward slope seen so far
            occ_h = 0.0
            k = 1
            while True:
                x = int(round(cam_col)) + direction * k
                if x < 0 or x >= n_cols:
                    break
                dist = abs(x - cam_col)
                h = heights[r, x]
                slope = (cam_height - h) / dist
                if slope <= best_slope + 1e-12:
                    best_slope = slope
                    occ_h = h
                elif occ_h - h > depth_step:
                    unknown[r, x] = True
                    out_h[r, x] = occ_h
                k += 1


def capture(scene, camera_x: float,
            camera_height: float = DEFAULT_CAMERA_HEIGHT_MM,
            occlusion_depth_step_mm: float = DEFAULT_OCCLUSION_STEP_MM,
            resolution: float = RESOLUTION_MM):
    """Orthographic top-down capture of a simulated scene.

    Returns (Heightmap, RgbMap, UnknownMask).  The unknown mask comes from a
    2D shadow ray-march per row from a virtual camera at horizontal position
    camera_x (mm) and the configured height above the belt; occluded cells
    are raised to their occluder's height (the maximum possible height).
    """
    from .simworld import scene_surfaces

    heights, rgb = scene_surfaces(scene, resolution)
    out_h = heights.copy()
    unknown = np.zeros(heights.shape, dtype=bool)
    _shadow_march(heights, camera_x / resolution, camera_height,
                  occlusion_depth_step_mm, out_h, unknown)
    return Heightmap(out_h, resolution), RgbMap(rgb), UnknownMask(unknown)
