"""Example-based super-resolution of low-resolution voxel frames.

Every occupied voxel of the low-resolution target is matched against the
occupied voxels of the downsampled reference frames that lie inside a
Chebyshev window around the same coordinate. Similarity is the Hamming
distance between 26-neighbor occupancy descriptors. The child mask of the
winning reference voxel (read from the full-resolution reference) becomes the
child mask of the target voxel.

Candidates are ranked by (cost, squared distance, Morton code, reference
position), a strict total order, so the result does not depend on the order
in which candidates are visited.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ParameterError
from .voxel import VoxelFrame, child_masks, downsample, morton_encode

NEIGHBOR_OFFSETS = np.array(
    [o for o in itertools.product((-1, 0, 1), repeat=3) if o != (0, 0, 0)], dtype=np.int64
)
DESCRIPTOR_BITS = 26
FULL_MASK = 0xFF

_NO_COST = DESCRIPTOR_BITS + 1
_INT64_MAX = np.iinfo(np.int64).max
# low-resolution depths up to this use a dense occupancy grid (8^7 entries)
DENSE_LOOKUP_MAX_DEPTH = 7


@dataclass(frozen=True)
class MatchParams:
    window: int = 4

    def __post_init__(self):
        if not isinstance(self.window, (int, np.integer)) or self.window < 0:
            raise ParameterError(f"window must be a non-negative integer, got {self.window!r}")


@dataclass(frozen=True)
class MatchResult:
    candidate: tuple
    cost: int
    tie_distance: int
    reference: int = 0


def descriptors(frame: VoxelFrame, coords) -> np.ndarray:
    """26-bit neighborhood descriptors (int64) for an (N, 3) coordinate array."""
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    out = np.zeros(len(coords), dtype=np.int64)
    for bit, off in enumerate(NEIGHBOR_OFFSETS):
        out |= frame.contains(coords + off).astype(np.int64) << bit
    return out


def neighborhood(frame: VoxelFrame, coord) -> int:
    return int(descriptors(frame, coord)[0])


def match_cost(a: int, b: int) -> int:
    return (int(a) ^ int(b)).bit_count()


def _window_offsets(window):
    r = np.arange(-window, window + 1, dtype=np.int64)
    grid = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
    return grid, (grid * grid).sum(axis=1)


@dataclass
class _Matches:
    ref: np.ndarray     # reference position, -1 where no candidate
    index: np.ndarray   # voxel index inside that downsampled reference
    cost: np.ndarray
    dist: np.ndarray
    code: np.ndarray


def _search(target_low: VoxelFrame, coords: np.ndarray, refs_low: Sequence[VoxelFrame], window: int) -> _Matches:
    n = len(coords)
    best = _Matches(
        ref=np.full(n, -1, np.int64),
        index=np.full(n, -1, np.int64),
        cost=np.full(n, _NO_COST, np.int64),
        dist=np.full(n, _INT64_MAX, np.int64),
        code=np.full(n, _INT64_MAX, np.int64),
    )
    if n == 0:
        return best
    target_desc = descriptors(target_low, coords)
    offsets, sq_dists = _window_offsets(window)
    size = target_low.size
    for r, ref in enumerate(refs_low):
        if len(ref) == 0:
            continue
        ref_desc = descriptors(ref, ref.voxels)
        ref_codes = np.asarray(ref.codes)
        lookup = _dense_index(ref) if ref.depth <= DENSE_LOOKUP_MAX_DEPTH else None
        for off, dist in zip(offsets, sq_dists):
            cand = coords + off
            inside = np.flatnonzero(((cand >= 0) & (cand < size)).all(axis=1))
            if len(inside) == 0:
                continue
            c = cand[inside]
            if lookup is not None:
                idx = lookup[(c[:, 0] << (2 * ref.depth)) | (c[:, 1] << ref.depth) | c[:, 2]]
                hit = idx >= 0
            else:
                q = morton_encode(c)
                idx = np.minimum(np.searchsorted(ref_codes, q), len(ref_codes) - 1)
                hit = ref_codes[idx] == q
            rows = inside[hit]
            if len(rows) == 0:
                continue
            idx = idx[hit]
            cost = np.bitwise_count(target_desc[rows] ^ ref_desc[idx]).astype(np.int64)
            code = ref_codes[idx]
            bc, bd, bm = best.cost[rows], best.dist[rows], best.code[rows]
            better = (cost < bc) | ((cost == bc) & ((dist < bd) | ((dist == bd) & (code < bm))))
            rows, idx = rows[better], idx[better]
            best.ref[rows] = r
            best.index[rows] = idx
            best.cost[rows] = cost[better]
            best.dist[rows] = dist
            best.code[rows] = code[better]
    return best


def _dense_index(frame: VoxelFrame) -> np.ndarray:
    """Flat x-major grid holding each occupied cell's voxel index, -1 elsewhere."""
    d = frame.depth
    lookup = np.full(1 << (3 * d), -1, dtype=np.int64)
    v = frame.voxels
    lookup[(v[:, 0] << (2 * d)) | (v[:, 1] << d) | v[:, 2]] = np.arange(len(v))
    return lookup


def find_best_match(target_low: VoxelFrame, coord, ref_low: VoxelFrame,
                    params: MatchParams = MatchParams()) -> Optional[MatchResult]:
    """Best candidate in ``ref_low`` for the voxel ``coord`` of ``target_low``, or None."""
    if target_low.depth != ref_low.depth:
        raise ParameterError(f"depth mismatch: target {target_low.depth}, reference {ref_low.depth}")
    coords = np.asarray(coord, dtype=np.int64).reshape(1, 3)
    m = _search(target_low, coords, [ref_low], params.window)
    if m.ref[0] < 0:
        return None
    cand = tuple(int(v) for v in ref_low.voxels[m.index[0]])
    return MatchResult(cand, int(m.cost[0]), int(m.dist[0]), 0)


def super_resolve(target_low: VoxelFrame, refs_full: Sequence[VoxelFrame],
                  params: MatchParams = MatchParams()) -> VoxelFrame:
    """Infer the depth J frame from a depth J-1 target and depth J references.

    Voxels without any candidate in the window fall back to all eight children.
    Children inherit the color of their low-resolution parent.
    """
    refs_full = list(refs_full)
    if not refs_full:
        raise ParameterError("at least one reference frame is required")
    for i, ref in enumerate(refs_full):
        if ref.depth != target_low.depth + 1:
            raise ParameterError(
                f"reference {i} has depth {ref.depth}, expected {target_low.depth + 1}"
            )
    refs_low = [downsample(ref) for ref in refs_full]
    ref_masks = [child_masks(ref)[1] for ref in refs_full]

    matches = _search(target_low, np.asarray(target_low.voxels), refs_low, params.window)
    masks = np.full(len(target_low), FULL_MASK, dtype=np.uint8)
    for r, rm in enumerate(ref_masks):
        sel = matches.ref == r
        masks[sel] = rm[matches.index[sel]]

    occupied = ((masks[:, None] >> np.arange(8, dtype=np.uint8)) & 1).astype(bool)
    codes = ((np.asarray(target_low.codes)[:, None] << 3) | np.arange(8, dtype=np.int64))[occupied]
    colors = None
    if target_low.has_colors:
        colors = np.repeat(target_low.colors, occupied.sum(axis=1), axis=0)
    return VoxelFrame.from_codes(target_low.depth + 1, codes, colors)
