"""Exhaustive closed-grasp search over a heightmap.

A closed grasp is a pair of finger placements such that the material between
the fingers rises strictly above both contact heights.  The 1D search runs in
amortized linear time with a monotonic stack of rising steps; the 2D search
scans all rows of rotated, maximum-filtered heightmaps for a set of discrete
directions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit

from .heightmap import (Heightmap, RESOLUTION_MM, maximum_filter_array,
                        rotate_array, rotated_shape)

DEFAULT_NUM_ANGLES = 16
MIN_WEIGHT = 1e-9


class Grasp1D(NamedTuple):
    i0: int
    i1: int
    z: float
    v: float


@dataclass
class GraspRectangle:
    """Oriented grasp hypothesis in heightmap-frame millimetres.

    The short sides of the rectangle are the inner faces of the two fingers;
    inner_span is the distance between them, z the grasp height and value a
    rudimentary quality metric used for weighted sampling."""

    center_x: float
    center_y: float
    angle: float
    inner_span: float
    finger_width: float
    z: float
    extra_opening: float = 0.0
    value: float = 0.0


@dataclass
class GripperGeometry:
    """Two-finger gripper geometry, all lengths in mm.

    opening_curve maps commanded opening to (per-finger horizontal inner-face
    offset, fingertip height lift), both measured from the minimum-opening
    position.  The default is a linear offset with lift = 0.15 * offset; a
    piecewise-linear table of (opening, offset, lift) rows may be supplied."""

    finger_thickness: float = 30.0
    finger_width: float = 80.0
    min_opening: float = 20.0
    max_opening: float = 400.0
    opening_curve: Sequence[tuple[float, float, float]] | None = None

    def __post_init__(self):
        if not (0 < self.min_opening < self.max_opening):
            raise ValueError("need 0 < min_opening < max_opening")

    def curve(self, opening: float) -> tuple[float, float]:
        if self.opening_curve is None:
            offset = max(0.0, opening - self.min_opening) / 2.0
            return offset, 0.15 * offset
        table = np.asarray(self.opening_curve, dtype=float)
        offset = float(np.interp(opening, table[:, 0], table[:, 1]))
        lift = float(np.interp(opening, table[:, 0], table[:, 2]))
        return offset, lift


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@njit(cache=True)
def _closed_grasps_1d(h, d_min, d_max):
    n = h.shape[0]
    stack = np.empty(n, np.int64)
    sp = 0
    out = np.empty((2 * n + 4, 4), np.float64)
    m = 0
    for i in range(1, n):
        if h[i] > h[i - 1]:
            stack[sp] = i - 1
            sp += 1
        elif h[i] < h[i - 1]:
            while sp > 0:
                top = stack[sp - 1]
                d = i - top
                if d_min <= d <= d_max:
                    z = max(h[top], h[i])
                    v = h[top + 1] - h[top] + h[i - 1] - h[i]
                    out[m, 0] = top
                    out[m, 1] = i
                    out[m, 2] = z
                    out[m, 3] = v
                    m += 1
                if h[i] > h[top]:
                    break
                sp -= 1
                # A popped side at exactly h[i] sits in the interior of any
                # deeper pair at this i, so no deeper pair can stay closed.
                if h[i] == h[top]:
                    break
    return out[:m]


def closed_grasps_1d(h, d_min: int, d_max: int) -> list[Grasp1D]:
    """All (i0, i1, z, v) with d_min <= i1-i0 <= d_max and every interior
    height strictly above z = max(h[i0], h[i1])."""
    if d_min < 1 or d_max < d_min:
        raise ValueError("need 1 <= d_min <= d_max")
    arr = np.ascontiguousarray(h, dtype=np.float64)
    if arr.shape[0] < 2:
        raise ValueError("array length must be >= 2")
    raw = _closed_grasps_1d(arr, d_min, d_max)
    return [Grasp1D(int(r[0]), int(r[1]), float(r[2]), float(r[3])) for r in raw]


def _filter_kernel(g: GripperGeometry, res: float) -> tuple[int, int]:
    kw = max(1, int(math.ceil(g.finger_thickness / res)))
    kh = max(1, int(math.ceil(g.finger_width / res)))
    return kw, kh


def _d_bounds(g: GripperGeometry, res: float) -> tuple[int, int, int]:
    ft_px = max(1, _round_half_up(g.finger_thickness / res))
    d_min = max(ft_px + 1, _round_half_up((g.min_opening + g.finger_thickness) / res))
    d_max = _round_half_up((g.max_opening + g.finger_thickness) / res)
    return ft_px, d_min, d_max


def _rotated_filtered(h: Heightmap, g: GripperGeometry, angle: float) -> np.ndarray:
    kw, kh = _filter_kernel(g, h.resolution)
    return maximum_filter_array(rotate_array(h.data, angle), kw, kh)


def closed_grasps(h: Heightmap, g: GripperGeometry,
                  num_angles: int = DEFAULT_NUM_ANGLES,
                  cache: dict | None = None) -> list[GraspRectangle]:
    """Exhaustive closed-grasp search over num_angles discrete directions.

    Candidates are collected in angle-then-row-then-column order; rectangles
    whose centers un-rotate to outside the map are discarded.  `cache` (angle
    -> rotated+filtered map) is filled in so apply_openings can reuse it."""
    if num_angles < 1:
        raise ValueError("num_angles must be >= 1")
    res = h.resolution
    ft_px, d_min, d_max = _d_bounds(g, res)
    rows, cols = h.data.shape
    cy, cx = (rows - 1) / 2.0, (cols - 1) / 2.0
    out: list[GraspRectangle] = []
    for k in range(num_angles):
        angle = k * math.pi / num_angles
        hf = _rotated_filtered(h, g, angle)
        if cache is not None:
            cache[angle] = hf
        r_rows, r_cols = hf.shape
        ocy, ocx = (r_rows - 1) / 2.0, (r_cols - 1) / 2.0
        c, s = math.cos(angle), math.sin(angle)
        for y in range(r_rows):
            for x0, x1, z, v in _closed_grasps_1d(hf[y], d_min, d_max):
                span = (x1 - x0 - ft_px) * res
                if not (g.min_opening <= span <= g.max_opening):
                    continue
                dx = (x0 + x1) / 2.0 - ocx
                dy = y - ocy
                gx = cx + c * dx - s * dy
                gy = cy + s * dx + c * dy
                if not (0 <= gx <= cols - 1 and 0 <= gy <= rows - 1):
                    continue
                out.append(GraspRectangle(
                    center_x=gx * res, center_y=gy * res, angle=angle,
                    inner_span=span, finger_width=g.finger_width,
                    z=float(z), extra_opening=0.0, value=float(v)))
    return out


def weighted_sample(cands: list[GraspRectangle], n: int,
                    rng: np.random.Generator) -> list[GraspRectangle]:
    """Sample up to n distinct candidates with probability proportional to
    value (nonpositive values get a tiny epsilon weight); deterministic under
    a fixed seed.  Output is ordered by descending sampling key."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(cands) <= n:
        return list(cands)
    w = np.array([c.value for c in cands], dtype=float)
    w[w <= 0.0] = MIN_WEIGHT
    # Efraimidis-Spirakis keys, in log space for tiny weights
    keys = np.log(rng.random(len(cands))) / w
    order = np.argsort(-keys, kind="stable")[:n]
    return [cands[i] for i in order]


def apply_openings(grasps: list[GraspRectangle], h: Heightmap,
                   g: GripperGeometry,
                   max_extra_opening: float | None = None,
                   cache: dict | None = None) -> list[GraspRectangle]:
    """Duplicate each closed grasp for every extra opening (in 1-px steps)
    allowed by the heightmap; z is raised by the minimum amount that clears
    the opened fingers, and a variant is kept only if the grasp remains
    closed at the original contact position.  e = 0 is always kept."""
    if not grasps:
        return []
    res = h.resolution
    ft_px, _, _ = _d_bounds(g, res)
    rows, cols = h.data.shape
    cy, cx = (rows - 1) / 2.0, (cols - 1) / 2.0
    cache = {} if cache is None else cache
    out: list[GraspRectangle] = []
    for gr in grasps:
        hf = cache.get(gr.angle)
        if hf is None:
            hf = cache[gr.angle] = _rotated_filtered(h, g, gr.angle)
        r_rows, r_cols = hf.shape
        ocy, ocx = (r_rows - 1) / 2.0, (r_cols - 1) / 2.0
        c, s = math.cos(gr.angle), math.sin(gr.angle)
        dx = gr.center_x / res - cx
        dy = gr.center_y / res - cy
        # inverse of the un-rotation used in closed_grasps
        rx = ocx + c * dx + s * dy
        ry = ocy + -s * dx + c * dy
        row = min(max(int(round(ry)), 0), r_rows - 1)
        half = gr.inner_span / res / 2.0 + ft_px / 2.0
        i0 = int(round(rx - half))
        i1 = int(round(rx + half))
        hrow = hf[row]
        inner_l = hrow[i0 + 1] if 0 <= i0 + 1 < r_cols else 0.0
        inner_r = hrow[i1 - 1] if 0 <= i1 - 1 < r_cols else 0.0
        base_off, base_lift = g.curve(gr.inner_span)
        limit = g.max_opening - gr.inner_span
        if max_extra_opening is not None:
            limit = min(limit, max_extra_opening)
        e = 0.0
        while e <= limit + 1e-9:
            off, lift = g.curve(gr.inner_span + e)
            d_off = off - base_off
            d_lift = lift - base_lift
            d_px = _round_half_up(d_off / res)
            xl, xr = i0 - d_px, i1 + d_px
            hl = hrow[xl] if 0 <= xl < r_cols else 0.0
            hr = hrow[xr] if 0 <= xr < r_cols else 0.0
            z_new = max(gr.z, hl - d_lift, hr - d_lift)
            if e == 0.0 or (z_new < inner_l and z_new < inner_r):
                out.append(GraspRectangle(
                    center_x=gr.center_x, center_y=gr.center_y,
                    angle=gr.angle, inner_span=gr.inner_span,
                    finger_width=gr.finger_width,
                    z=gr.z if e == 0.0 else z_new,
                    extra_opening=e, value=gr.value))
            e += res
    return out
