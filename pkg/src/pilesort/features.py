"""Deterministic feature extraction for the grasp-success and color models.

Each grasp contributes 80x39-pixel slices of the heightmap, RGB image and
unknown mask, rotated into the grasp frame (long axis along the opening
direction) and anchored at the left finger, center or right finger.  Slices
are average-pooled to a fixed size and flattened; a few scalar descriptors
of the grasp are appended.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grasp import GraspRectangle
from .heightmap import BELT_GRAY, Heightmap, RgbMap, UnknownMask, RESOLUTION_MM

SLICE_LEN = 80    # along the opening direction
SLICE_WIDE = 39   # across the fingers

SUCCESS_LAYOUT_LEN = 3 * 5 * (20 * 10) + 6
COLOR_LAYOUT_LEN = 4 * (10 * 5) + 6

ANCHORS = ("left", "center", "right")


@dataclass
class FeatureVector:
    values: np.ndarray
    layout_id: str  # "success" | "color"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        expected = SUCCESS_LAYOUT_LEN if self.layout_id == "success" else COLOR_LAYOUT_LEN
        if self.values.shape != (expected,):
            raise ValueError(f"bad {self.layout_id} layout length {self.values.shape}")


def _sample_indices(grasps: list[GraspRectangle], anchor: str, resolution: float):
    """Nearest-neighbor source indices for the (N, 39, 80) slice grid of each
    grasp, plus the inside-map mask (bounds applied by the caller)."""
    n = len(grasps)
    cx = np.array([g.center_x for g in grasps])
    cy = np.array([g.center_y for g in grasps])
    ang = np.array([g.angle for g in grasps])
    span = np.array([g.inner_span for g in grasps])
    if anchor == "left":
        u0 = -span / 2.0
    elif anchor == "right":
        u0 = span / 2.0
    elif anchor == "center":
        u0 = np.zeros(n)
    else:
        raise ValueError(f"unknown anchor {anchor!r}")
    u = (np.arange(SLICE_LEN) - (SLICE_LEN - 1) / 2.0) * resolution
    v = (np.arange(SLICE_WIDE) - (SLICE_WIDE - 1) / 2.0) * resolution
    uu = u[None, None, :] + u0[:, None, None]
    vv = v[None, :, None]
    c = np.cos(ang)[:, None, None]
    s = np.sin(ang)[:, None, None]
    x = cx[:, None, None] + uu * c - vv * s
    y = cy[:, None, None] + uu * s + vv * c
    cols = np.rint(x / resolution).astype(np.int64)
    rows = np.rint(y / resolution).astype(np.int64)
    return rows, cols


def _gather(map2d: np.ndarray, rows, cols, pad):
    n_rows, n_cols = map2d.shape[:2]
    outside = (rows < 0) | (rows >= n_rows) | (cols < 0) | (cols >= n_cols)
    flat = (np.clip(rows, 0, n_rows - 1) * n_cols
            + np.clip(cols, 0, n_cols - 1)).ravel()
    if map2d.ndim == 2:
        out = map2d.ravel().take(flat).reshape(rows.shape)
    else:
        out = map2d.reshape(-1, map2d.shape[2]).take(flat, axis=0).reshape(
            rows.shape + (map2d.shape[2],))
    out = out.astype(np.float64, copy=False)
    out[outside] = pad
    return out


def extract_slice(map2d: np.ndarray, grasp: GraspRectangle, anchor: str,
                  resolution: float = RESOLUTION_MM, pad=0.0) -> np.ndarray:
    """39x80 window of `map2d` rotated into the grasp frame, centered at the
    requested anchor; outside-map samples read `pad`."""
    rows, cols = _sample_indices([grasp], anchor, resolution)
    return _gather(np.asarray(map2d), rows, cols, pad)[0]


def _pool(patches: np.ndarray, factor: int) -> np.ndarray:
    """Average-pool (..., 39, 80) patches by `factor` to a fixed output size;
    the last pooling row averages the remaining source rows (39 is not a
    multiple of the factor, 80 always is)."""
    lead = patches.shape[:-2]
    n_col_groups = SLICE_LEN // factor
    x = patches.reshape(lead + (SLICE_WIDE, n_col_groups, factor)).sum(axis=-1)
    full = SLICE_WIDE // factor
    tail = SLICE_WIDE - full * factor
    main = x[..., :full * factor, :].reshape(
        lead + (full, factor, n_col_groups)).sum(axis=-2)
    out_rows = full + (1 if tail else 0)
    summed = np.empty(lead + (out_rows, n_col_groups))
    summed[..., :full, :] = main
    row_sizes = np.full(out_rows, factor, dtype=np.float64)
    if tail:
        summed[..., full, :] = x[..., full * factor:, :].sum(axis=-2)
        row_sizes[full] = tail
    return summed / (row_sizes[:, None] * factor)


def _scalars(grasps: list[GraspRectangle]) -> np.ndarray:
    return np.array([[g.inner_span, g.extra_opening, g.z,
                      g.center_x, g.center_y, g.angle] for g in grasps])


def success_feature_matrix(grasps: list[GraspRectangle], hm: Heightmap,
                           rgb: RgbMap, um: UnknownMask) -> np.ndarray:
    """(N, 3006) success-model features: for each anchor, pooled 20x10 blocks
    of height-minus-z, RGB in [0,1], and unknown mask, then 6 scalars."""
    if not grasps:
        return np.empty((0, SUCCESS_LAYOUT_LEN))
    res = hm.resolution
    z = np.array([g.z for g in grasps])[:, None, None]
    blocks = []
    for anchor in ANCHORS:
        rows, cols = _sample_indices(grasps, anchor, res)
        hslice = _gather(hm.data, rows, cols, 0.0) - z
        rgbslice = _gather(rgb.data, rows, cols, BELT_GRAY) / 255.0
        uslice = _gather(um.data, rows, cols, 0.0)
        for chan in (hslice, rgbslice[..., 0], rgbslice[..., 1],
                     rgbslice[..., 2], uslice):
            blocks.append(_pool(chan, 4).reshape(len(grasps), -1))
    blocks.append(_scalars(grasps))
    return np.concatenate(blocks, axis=1)


def color_feature_matrix(grasps: list[GraspRectangle], hm: Heightmap,
                         rgb: RgbMap) -> np.ndarray:
    """(N, 206) color-model features: center-anchored pooled 10x5 blocks of
    height-minus-z and RGB, then the same 6 scalars."""
    if not grasps:
        return np.empty((0, COLOR_LAYOUT_LEN))
    res = hm.resolution
    z = np.array([g.z for g in grasps])[:, None, None]
    rows, cols = _sample_indices(grasps, "center", res)
    hslice = _gather(hm.data, rows, cols, 0.0) - z
    rgbslice = _gather(rgb.data, rows, cols, BELT_GRAY) / 255.0
    blocks = []
    for chan in (hslice, rgbslice[..., 0], rgbslice[..., 1], rgbslice[..., 2]):
        blocks.append(_pool(chan, 8).reshape(len(grasps), -1))
    blocks.append(_scalars(grasps))
    return np.concatenate(blocks, axis=1)


def success_features(grasp: GraspRectangle, hm: Heightmap, rgb: RgbMap,
                     um: UnknownMask) -> FeatureVector:
    return FeatureVector(success_feature_matrix([grasp], hm, rgb, um)[0], "success")


def color_features(grasp: GraspRectangle, hm: Heightmap, rgb: RgbMap) -> FeatureVector:
    return FeatureVector(color_feature_matrix([grasp], hm, rgb)[0], "color")
