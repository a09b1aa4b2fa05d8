"""Drop-zone feedback: turn a stack of depth+RGB frames into per-class
pixel counts.

Background is the per-pixel 20th percentile of depth over time (nearest
rank), foreground is anything at least 6 mm closer to the camera, frame
scores are the foreground volume above background min-filtered over a
9-frame window, and the best frame's foreground pixels are tallied into
HSV color boxes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from matplotlib.colors import rgb_to_hsv

CLASS_NAMES = ("red", "yellow", "bluegreen", "unknown")

DEPTH_MARGIN_MM = 6.0
SCORE_WINDOW = 9
BACKGROUND_PERCENTILE = 0.2
ROI_BORDER_PX = 10


@dataclass
class HsvBox:
    """Rectangular HSV region; hue in degrees, possibly wrapping over 0."""

    name: str
    hue_ranges: tuple[tuple[float, float], ...]
    s_min: float = 0.35
    v_min: float = 0.25

    def contains(self, h, s, v):
        hit = np.zeros(h.shape, dtype=bool)
        for lo, hi in self.hue_ranges:
            hit |= (h >= lo) & (h <= hi)
        return hit & (s >= self.s_min) & (v >= self.v_min)


def default_hsv_boxes() -> list[HsvBox]:
    return [
        HsvBox("red", ((0.0, 20.0), (340.0, 360.0))),
        HsvBox("yellow", ((40.0, 80.0),)),
        HsvBox("bluegreen", ((150.0, 260.0),)),
    ]


@dataclass
class FrameStack:
    """Ordered drop-zone frames; depth in mm from the camera."""

    depth: np.ndarray  # (frames, rows, cols)
    rgb: np.ndarray    # (frames, rows, cols, 3) uint8
    roi: tuple[int, int, int, int] | None = None  # (r0, c0, r1, c1) exclusive

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float64)
        self.rgb = np.asarray(self.rgb, dtype=np.uint8)
        if self.depth.ndim != 3 or self.rgb.shape != self.depth.shape + (3,):
            raise ValueError("depth/rgb shape mismatch")
        if self.roi is None:
            rows, cols = self.depth.shape[1:]
            b = min(ROI_BORDER_PX, rows // 4, cols // 4)
            self.roi = (b, b, rows - b, cols - b)


@dataclass
class ColorCounts:
    counts: np.ndarray  # (4,) nonnegative ints: red, yellow, bluegreen, unknown

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (4,) or (self.counts < 0).any():
            raise ValueError("counts must be 4 nonnegative integers")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def background_level(depth_frames: np.ndarray,
                     percentile: float = BACKGROUND_PERCENTILE) -> np.ndarray:
    """Per-pixel nearest-rank percentile of the depth time series
    (rank = ceil(p*n), 1-based, ascending)."""
    depth_frames = np.asarray(depth_frames, dtype=np.float64)
    n = depth_frames.shape[0]
    if n < 2:
        raise ValueError("need at least 2 frames")
    rank = int(np.ceil(percentile * n))
    return np.sort(depth_frames, axis=0)[rank - 1]


def classify_pixels(rgb_pixels: np.ndarray, hsv_boxes: list[HsvBox]) -> np.ndarray:
    """Tally (n, 3) uint8 pixels into the box classes plus unknown."""
    counts = np.zeros(4, dtype=np.int64)
    if rgb_pixels.size == 0:
        return counts
    hsv = rgb_to_hsv(rgb_pixels.astype(np.float64) / 255.0)
    h = hsv[..., 0] * 360.0
    s = hsv[..., 1]
    v = hsv[..., 2]
    assigned = np.zeros(h.shape, dtype=bool)
    for i, box in enumerate(hsv_boxes):
        hit = box.contains(h, s, v) & ~assigned
        counts[i] = hit.sum()
        assigned |= hit
    counts[3] = (~assigned).sum()
    return counts


def result(stack: FrameStack, hsv_boxes: list[HsvBox] | None = None,
           depth_margin_mm: float = DEPTH_MARGIN_MM,
           score_window: int = SCORE_WINDOW) -> ColorCounts:
    """Pixel counts per target color from the best (most foreground volume,
    noise-suppressed) frame of the stack."""
    hsv_boxes = hsv_boxes if hsv_boxes is not None else default_hsv_boxes()
    bg = background_level(stack.depth)
    fg = stack.depth <= (bg - depth_margin_mm)[None, :, :]
    r0, c0, r1, c1 = stack.roi
    roi_mask = np.zeros(bg.shape, dtype=bool)
    roi_mask[r0:r1, c0:c1] = True
    volume = (bg[None, :, :] - stack.depth) * fg * roi_mask[None, :, :]
    scores = volume.sum(axis=(1, 2))
    n = len(scores)
    half_lo = (score_window - 1) // 2
    half_hi = score_window // 2
    filtered = np.array([scores[max(0, i - half_lo):min(n, i + half_hi + 1)].min()
                         for i in range(n)])
    best = int(np.argmax(filtered))
    mask = fg[best] & roi_mask
    return ColorCounts(classify_pixels(stack.rgb[best][mask], hsv_boxes))
