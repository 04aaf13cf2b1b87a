"""Voxel grids, Morton ordering, level-of-detail and octree occupancy streams.

Frames are stored as numpy arrays sorted by Morton code. The code of a voxel
interleaves the bits of its coordinates with x as the most significant bit of
every triple, so the low three bits of a code are the child index
``4*dx + 2*dy + dz`` inside the parent, and ``code >> 3`` is the parent code.
Downsampling, child-mask extraction and octree coding all reduce to linear
passes over the sorted code array.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import (
    CorruptStreamError,
    DepthUnderflowError,
    EmptyFrameError,
    ParameterError,
)

MAX_DEPTH = 20
CHILD_OFFSETS = np.array([[(c >> 2) & 1, (c >> 1) & 1, c & 1] for c in range(8)], dtype=np.int64)

_BIT_INDEX = np.arange(8, dtype=np.uint8)


# ----------------------------------------------------------------------------
# Morton codes
# ----------------------------------------------------------------------------

def _spread(v):
    v = v.astype(np.uint64) & np.uint64(0x1FFFFF)
    v = (v | (v << np.uint64(32))) & np.uint64(0x1F00000000FFFF)
    v = (v | (v << np.uint64(16))) & np.uint64(0x1F0000FF0000FF)
    v = (v | (v << np.uint64(8))) & np.uint64(0x100F00F00F00F00F)
    v = (v | (v << np.uint64(4))) & np.uint64(0x10C30C30C30C30C3)
    v = (v | (v << np.uint64(2))) & np.uint64(0x1249249249249249)
    return v


def _compact(v):
    v = v & np.uint64(0x1249249249249249)
    v = (v ^ (v >> np.uint64(2))) & np.uint64(0x10C30C30C30C30C3)
    v = (v ^ (v >> np.uint64(4))) & np.uint64(0x100F00F00F00F00F)
    v = (v ^ (v >> np.uint64(8))) & np.uint64(0x1F0000FF0000FF)
    v = (v ^ (v >> np.uint64(16))) & np.uint64(0x1F00000000FFFF)
    v = (v ^ (v >> np.uint64(32))) & np.uint64(0x1FFFFF)
    return v


def morton_encode(coords) -> np.ndarray:
    """Morton codes (int64) for an (N, 3) array of non-negative coordinates."""
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    code = (_spread(coords[:, 0]) << np.uint64(2)) | (_spread(coords[:, 1]) << np.uint64(1)) | _spread(coords[:, 2])
    return code.astype(np.int64)


def morton_decode(codes) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64).astype(np.uint64)
    out = np.empty((codes.shape[0], 3), dtype=np.int64)
    out[:, 0] = _compact(codes >> np.uint64(2))
    out[:, 1] = _compact(codes >> np.uint64(1))
    out[:, 2] = _compact(codes)
    return out


def _check_depth(depth, lo=1, hi=MAX_DEPTH):
    if not isinstance(depth, (int, np.integer)) or not lo <= depth <= hi:
        raise ParameterError(f"depth must be an integer in [{lo}, {hi}], got {depth!r}")
    return int(depth)


def _mean_colors(colors, inverse, count):
    """Per-group channel means rounded half away from zero (values are non-negative)."""
    sums = np.zeros((count, 3), dtype=np.int64)
    np.add.at(sums, inverse, colors.astype(np.int64))
    n = np.bincount(inverse, minlength=count).astype(np.int64)[:, None]
    return ((2 * sums + n) // (2 * n)).astype(np.uint8)


# ----------------------------------------------------------------------------
# Domain types
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class BBox:
    """Axis-aligned cube: ``min`` corner and ``edge`` length in world units."""

    min: tuple
    edge: float

    def __post_init__(self):
        if not self.edge > 0:
            raise ParameterError(f"bbox edge must be positive, got {self.edge}")
        object.__setattr__(self, "min", tuple(float(v) for v in self.min))
        object.__setattr__(self, "edge", float(self.edge))

    @property
    def max(self):
        return tuple(m + self.edge for m in self.min)

    @classmethod
    def enclosing(cls, points) -> "BBox":
        """Tight box around ``points`` expanded to a cube on its longest axis."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if len(points) == 0:
            return cls((0.0, 0.0, 0.0), 1.0)
        lo = points.min(axis=0)
        edge = float((points.max(axis=0) - lo).max())
        return cls(tuple(lo), edge if edge > 0 else 1.0)

    @classmethod
    def union(cls, boxes: Sequence["BBox"]) -> "BBox":
        lo = np.min([b.min for b in boxes], axis=0)
        hi = np.max([b.max for b in boxes], axis=0)
        return cls(tuple(lo), float((hi - lo).max()))


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    colors: Optional[np.ndarray] = None
    bbox: Optional[BBox] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if self.colors is not None:
            cols = np.asarray(self.colors)
            if cols.shape != pts.shape:
                raise ParameterError(f"colors shape {cols.shape} does not match points {pts.shape}")
            if cols.size and (cols.min() < 0 or cols.max() > 255):
                raise ParameterError("colors must lie in 0..255")
            object.__setattr__(self, "colors", cols.astype(np.uint8))
        if self.bbox is None:
            object.__setattr__(self, "bbox", BBox.enclosing(pts))
        elif len(pts):
            lo = np.asarray(self.bbox.min)
            if (pts < lo).any() or (pts > lo + self.bbox.edge).any():
                raise ParameterError("points lie outside the bounding box")

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        if (self.colors is None) != (other.colors is None):
            return False
        return (
            np.array_equal(self.points, other.points)
            and (self.colors is None or np.array_equal(self.colors, other.colors))
        )


@dataclass(frozen=True, eq=False)
class VoxelFrame:
    """Voxelized frame at octree depth ``depth``.

    ``voxels`` is an (N, 3) int64 array in strictly increasing Morton order and
    ``colors`` an optional aligned (N, 3) uint8 array. Use :meth:`from_coords`
    to build a frame from unordered coordinates.
    """

    depth: int
    voxels: np.ndarray
    colors: Optional[np.ndarray] = None

    def __post_init__(self):
        depth = _check_depth(self.depth)
        object.__setattr__(self, "depth", depth)
        vox = np.array(self.voxels, dtype=np.int64).reshape(-1, 3)
        if vox.size and (vox.min() < 0 or vox.max() >= (1 << depth)):
            raise ParameterError(f"voxel coordinate outside [0, 2^{depth})")
        vox.flags.writeable = False
        object.__setattr__(self, "voxels", vox)
        if self.colors is not None:
            cols = np.array(self.colors).reshape(-1, 3)
            if cols.shape != vox.shape:
                raise ParameterError(f"colors shape {cols.shape} does not match voxels {vox.shape}")
            cols = cols.astype(np.uint8)
            cols.flags.writeable = False
            object.__setattr__(self, "colors", cols)
        if len(self.codes) > 1 and not (np.diff(self.codes) > 0).all():
            raise ParameterError("voxels must be strictly increasing in Morton order")

    @classmethod
    def from_codes(cls, depth, codes, colors=None) -> "VoxelFrame":
        return cls(depth, morton_decode(codes), colors)

    @classmethod
    def from_coords(cls, depth, coords, colors=None) -> "VoxelFrame":
        """Sort arbitrary integer coordinates into Morton order, merging duplicates.

        Colors of merged duplicates are averaged like in :func:`voxelize`.
        """
        depth = _check_depth(depth)
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
        if coords.size and (coords.min() < 0 or coords.max() >= (1 << depth)):
            raise ParameterError(f"voxel coordinate outside [0, 2^{depth})")
        codes, inverse = np.unique(morton_encode(coords), return_inverse=True)
        merged = None
        if colors is not None:
            merged = _mean_colors(np.asarray(colors).reshape(-1, 3), inverse.ravel(), len(codes))
        return cls.from_codes(depth, codes, merged)

    @classmethod
    def empty(cls, depth, with_colors=False) -> "VoxelFrame":
        return cls(depth, np.zeros((0, 3), np.int64), np.zeros((0, 3), np.uint8) if with_colors else None)

    @cached_property
    def codes(self) -> np.ndarray:
        codes = morton_encode(self.voxels)
        codes.flags.writeable = False
        return codes

    @property
    def has_colors(self) -> bool:
        return self.colors is not None

    @property
    def size(self) -> int:
        return 1 << self.depth

    def __len__(self):
        return len(self.voxels)

    def contains(self, coords) -> np.ndarray:
        """Occupancy test for an (M, 3) array; out-of-range coordinates are unoccupied."""
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
        inside = ((coords >= 0) & (coords < self.size)).all(axis=1)
        found = np.zeros(len(coords), dtype=bool)
        if inside.any() and len(self.codes):
            q = morton_encode(coords[inside])
            idx = np.minimum(np.searchsorted(self.codes, q), len(self.codes) - 1)
            found[inside] = self.codes[idx] == q
        return found

    def same_geometry(self, other: "VoxelFrame") -> bool:
        return self.depth == other.depth and np.array_equal(self.voxels, other.voxels)

    def without_colors(self) -> "VoxelFrame":
        return VoxelFrame(self.depth, self.voxels)

    def __eq__(self, other):
        if not isinstance(other, VoxelFrame):
            return NotImplemented
        if not self.same_geometry(other) or self.has_colors != other.has_colors:
            return False
        return self.colors is None or np.array_equal(self.colors, other.colors)

    def __repr__(self):
        return f"VoxelFrame(depth={self.depth}, voxels={len(self)}, colors={self.has_colors})"


@dataclass(frozen=True, eq=False)
class OctreeStream:
    """Breadth-first child masks for levels 1..depth, parents in Morton order."""

    depth: int
    masks: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "depth", _check_depth(self.depth))
        masks = np.array(self.masks, dtype=np.uint8).ravel()
        masks.flags.writeable = False
        object.__setattr__(self, "masks", masks)

    def __eq__(self, other):
        if not isinstance(other, OctreeStream):
            return NotImplemented
        return self.depth == other.depth and np.array_equal(self.masks, other.masks)

    def level_offsets(self) -> list[int]:
        """Start offset of each level in ``masks`` plus the end offset of the last."""
        offsets = [0]
        n = 1
        for level in range(self.depth):
            start = offsets[-1]
            end = start + n
            if end > len(self.masks):
                raise CorruptStreamError(
                    f"level {level + 1} needs {n} masks but only {len(self.masks) - start} remain", start
                )
            offsets.append(end)
            n = int(np.bitwise_count(self.masks[start:end]).sum())
        return offsets

    def truncate(self, levels: int) -> "OctreeStream":
        """Prefix of the stream describing the frame at depth ``levels``."""
        _check_depth(levels, 1, self.depth)
        return OctreeStream(levels, self.masks[: self.level_offsets()[levels]])


# ----------------------------------------------------------------------------
# Operations
# ----------------------------------------------------------------------------

def voxelize(cloud: PointCloud, depth: int, bbox: Optional[BBox] = None) -> VoxelFrame:
    """Quantize a point cloud into the 2^depth grid spanning ``bbox`` (default ``cloud.bbox``).

    Points on the max faces clamp into the last cell. Points sharing a cell are
    merged and their colors averaged.
    """
    depth = _check_depth(depth)
    box = bbox if bbox is not None else cloud.bbox
    if len(cloud) == 0:
        return VoxelFrame.empty(depth, cloud.colors is not None)
    scale = (1 << depth) / box.edge
    idx = np.floor((cloud.points - np.asarray(box.min)) * scale)
    idx = np.clip(idx, 0, (1 << depth) - 1).astype(np.int64)
    return VoxelFrame.from_coords(depth, idx, cloud.colors)


def downsample(frame: VoxelFrame) -> VoxelFrame:
    """One level coarser: parents of all occupied voxels, colors averaged over children."""
    if frame.depth < 2:
        raise DepthUnderflowError(f"cannot downsample a depth-{frame.depth} frame")
    parents = frame.codes >> 3
    if len(parents) == 0:
        return VoxelFrame.empty(frame.depth - 1, frame.has_colors)
    starts = _group_starts(parents)
    colors = None
    if frame.has_colors:
        inverse = np.cumsum(np.r_[True, parents[1:] != parents[:-1]]) - 1
        colors = _mean_colors(frame.colors, inverse, len(starts))
    return VoxelFrame.from_codes(frame.depth - 1, parents[starts], colors)


def _group_starts(sorted_keys):
    if len(sorted_keys) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.flatnonzero(np.r_[True, sorted_keys[1:] != sorted_keys[:-1]])


def child_masks(frame: VoxelFrame) -> tuple[np.ndarray, np.ndarray]:
    """Parent Morton codes (depth - 1) and their uint8 child masks, parents sorted."""
    parents = frame.codes >> 3
    if len(parents) == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.uint8)
    starts = _group_starts(parents)
    bits = np.left_shift(1, frame.codes & 7).astype(np.uint8)
    return parents[starts], np.bitwise_or.reduceat(bits, starts).astype(np.uint8)


def child_mask_of(frame: VoxelFrame, parent) -> int:
    """8-bit occupancy of the children of ``parent``; bit ``4*dx + 2*dy + dz``."""
    if frame.depth < 1:
        raise DepthUnderflowError("frame has no parent level")
    parent = np.asarray(parent, dtype=np.int64).reshape(1, 3)
    kids = 2 * parent + CHILD_OFFSETS
    occupied = frame.contains(kids)
    return int(np.sum(occupied.astype(np.int64) << np.arange(8)))


def naive_upsample(frame: VoxelFrame) -> VoxelFrame:
    """Replace every voxel by its 8 children, each inheriting the parent color."""
    depth = _check_depth(frame.depth, 1, MAX_DEPTH - 1)
    codes = ((frame.codes[:, None] << 3) | np.arange(8, dtype=np.int64)).ravel()
    colors = np.repeat(frame.colors, 8, axis=0) if frame.has_colors else None
    return VoxelFrame.from_codes(depth + 1, codes, colors)


def octree_encode(frame: VoxelFrame) -> OctreeStream:
    if len(frame) == 0:
        raise EmptyFrameError("cannot octree-encode an empty frame")
    per_depth = [np.asarray(frame.codes)]
    for _ in range(frame.depth):
        per_depth.append(per_depth[-1][_group_starts(per_depth[-1] >> 3)] >> 3)
    per_depth.reverse()
    masks = []
    for level in range(1, frame.depth + 1):
        kids = per_depth[level]
        starts = _group_starts(kids >> 3)
        bits = np.left_shift(1, kids & 7).astype(np.uint8)
        masks.append(np.bitwise_or.reduceat(bits, starts))
    return OctreeStream(frame.depth, np.concatenate(masks))


def octree_decode(stream: OctreeStream, levels: Optional[int] = None) -> VoxelFrame:
    """Rebuild the frame geometry, optionally from only the first ``levels`` levels.

    A full decode must consume every mask; a partial decode ignores what follows.
    """
    levels = stream.depth if levels is None else _check_depth(levels, 1, stream.depth)
    masks = stream.masks
    codes = np.zeros(1, dtype=np.int64)
    pos = 0
    for level in range(1, levels + 1):
        n = len(codes)
        if pos + n > len(masks):
            raise CorruptStreamError(
                f"level {level} needs {n} masks but only {len(masks) - pos} remain", pos
            )
        m = masks[pos:pos + n]
        zero = np.flatnonzero(m == 0)
        if len(zero):
            raise CorruptStreamError(f"zero mask for occupied parent at level {level}", pos + int(zero[0]))
        occupied = ((m[:, None] >> _BIT_INDEX) & 1).astype(bool)
        codes = ((codes[:, None] << 3) | np.arange(8, dtype=np.int64))[occupied]
        pos += n
    if levels == stream.depth and pos != len(masks):
        raise CorruptStreamError(f"{len(masks) - pos} trailing masks after level {levels}", pos)
    return VoxelFrame.from_codes(levels, codes)
