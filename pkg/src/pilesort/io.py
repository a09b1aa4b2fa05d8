"""File formats for CLI interchange: HMAP text heightmaps, binary PPM (P6)
RGB maps and PBM (P4) masks, plus drop-zone frame directories."""
from __future__ import annotations

import glob
import os

import numpy as np

from .heightmap import Heightmap, RgbMap, UnknownMask
from .feedback import FrameStack


def write_hmap(h: Heightmap, path) -> None:
    with open(path, "w") as f:
        f.write(f"HMAP {h.width} {h.height} {h.resolution:g}\n")
        for row in h.data:
            f.write(" ".join(f"{v:.10g}" for v in row) + "\n")


def read_hmap(path) -> Heightmap:
    with open(path) as f:
        header = f.readline().split()
        if len(header) != 4 or header[0] != "HMAP":
            raise ValueError(f"{path}: not an HMAP file")
        width, height = int(header[1]), int(header[2])
        resolution = float(header[3])
        values = np.loadtxt(f, dtype=np.float64, ndmin=2)
    if values.shape != (height, width):
        values = values.reshape(height, width)
    return Heightmap(values, resolution)


def write_ppm(rgb: RgbMap, path) -> None:
    with open(path, "wb") as f:
        f.write(f"P6\n{rgb.width} {rgb.height}\n255\n".encode())
        f.write(rgb.data.tobytes())


def _read_pnm_header(f, magic: bytes):
    if f.readline().strip() != magic:
        raise ValueError(f"expected {magic.decode()} file")
    fields = []
    while len(fields) < 2:
        line = f.readline()
        if not line:
            raise ValueError("truncated PNM header")
        text = line.split(b"#")[0]
        fields.extend(int(t) for t in text.split())
    return fields[0], fields[1]


def read_ppm(path) -> RgbMap:
    with open(path, "rb") as f:
        width, height = _read_pnm_header(f, b"P6")
        if int(f.readline().split()[0]) != 255:
            raise ValueError("only maxval 255 supported")
        data = np.frombuffer(f.read(width * height * 3), dtype=np.uint8)
    return RgbMap(data.reshape(height, width, 3))


def write_pbm(mask: UnknownMask, path) -> None:
    rows, cols = mask.data.shape
    with open(path, "wb") as f:
        f.write(f"P4\n{cols} {rows}\n".encode())
        f.write(np.packbits(mask.data, axis=1).tobytes())


def read_pbm(path) -> UnknownMask:
    with open(path, "rb") as f:
        width, height = _read_pnm_header(f, b"P4")
        row_bytes = (width + 7) // 8
        data = np.frombuffer(f.read(row_bytes * height), dtype=np.uint8)
    bits = np.unpackbits(data.reshape(height, row_bytes), axis=1)[:, :width]
    return UnknownMask(bits.astype(bool))


def write_frames(stack: FrameStack, directory) -> None:
    """One depth_NNN.hmap (mm depth) plus rgb_NNN.ppm per frame."""
    os.makedirs(directory, exist_ok=True)
    for i in range(stack.depth.shape[0]):
        write_hmap(Heightmap(np.maximum(stack.depth[i], 0.0)),
                   os.path.join(directory, f"depth_{i:03d}.hmap"))
        write_ppm(RgbMap(stack.rgb[i]), os.path.join(directory, f"rgb_{i:03d}.ppm"))


def read_frames(directory) -> FrameStack:
    depth_paths = sorted(glob.glob(os.path.join(directory, "depth_*.hmap")))
    rgb_paths = sorted(glob.glob(os.path.join(directory, "rgb_*.ppm")))
    if not depth_paths or len(depth_paths) != len(rgb_paths):
        raise ValueError(f"{directory}: need matching depth_*.hmap / rgb_*.ppm files")
    depth = np.stack([read_hmap(p).data for p in depth_paths])
    rgb = np.stack([read_ppm(p).data for p in rgb_paths])
    return FrameStack(depth=depth, rgb=rgb)
