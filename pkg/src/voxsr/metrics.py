"""Projection-based color PSNR and point-to-point (D1) geometry PSNR."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ParameterError
from .voxel import VoxelFrame, _group_starts

AXES = ("X", "Y", "Z")
DIRECTIONS = ("+", "-")
FACES = tuple((a, d) for a in AXES for d in DIRECTIONS)
GRAY = 128
PEAK = 255.0


def face_id(axis, direction) -> str:
    return f"{axis}{direction}"


@dataclass(frozen=True, eq=False)
class FaceImage:
    """Orthographic render of a frame onto one face of its bounding cube.

    Pixel ``(i, j)`` indexes the two remaining axes in x, y, z order. ``depth``
    is the distance of the visible voxel from the face (-1 where empty) and
    ``color`` is zero where empty.
    """

    axis: str
    direction: str
    size: int
    color: np.ndarray
    occupancy: np.ndarray
    depth: np.ndarray

    @property
    def id(self):
        return face_id(self.axis, self.direction)


@dataclass(frozen=True)
class MetricReport:
    per_face_psnr: dict
    per_face_mse: dict
    mean_psnr: float
    occupancy_agreement: float


def project_face(frame: VoxelFrame, axis: str, direction: str) -> FaceImage:
    if axis not in AXES or direction not in DIRECTIONS:
        raise ParameterError(f"unknown face {axis}{direction}")
    a = AXES.index(axis)
    u, v = [k for k in range(3) if k != a]
    size = frame.size
    vox = frame.voxels
    depth = vox[:, a] if direction == "-" else size - 1 - vox[:, a]
    pix = vox[:, u] * size + vox[:, v]

    order = np.lexsort((depth, pix))
    front = order[_group_starts(pix[order])]

    color = np.zeros((size * size, 3), dtype=np.uint8)
    occupancy = np.zeros(size * size, dtype=bool)
    depth_img = np.full(size * size, -1, dtype=np.int64)
    occupancy[pix[front]] = True
    depth_img[pix[front]] = depth[front]
    color[pix[front]] = frame.colors[front] if frame.has_colors else GRAY
    return FaceImage(
        axis, direction, size,
        color.reshape(size, size, 3), occupancy.reshape(size, size), depth_img.reshape(size, size),
    )


def psnr_from_mse(mse: float, peak: float = PEAK) -> float:
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def mean_finite(values) -> float:
    """Mean over finite values; ``inf`` when every value is ``inf``."""
    finite = [v for v in values if math.isfinite(v)]
    if finite:
        return float(np.mean(finite))
    return math.inf if values and all(v == math.inf for v in values) else math.nan


def projection_psnr(a: VoxelFrame, b: VoxelFrame) -> MetricReport:
    """Compare the six face renders of two frames.

    Color error counts only pixels occupied in both renders; the overlap of
    occupied pixels is reported separately as ``occupancy_agreement``.
    """
    if a.depth != b.depth:
        raise ParameterError(f"depth mismatch: {a.depth} vs {b.depth}")
    psnr, mse = {}, {}
    both_total = either_total = 0
    for axis, direction in FACES:
        fa = project_face(a, axis, direction)
        fb = project_face(b, axis, direction)
        both = fa.occupancy & fb.occupancy
        both_total += int(both.sum())
        either_total += int((fa.occupancy | fb.occupancy).sum())
        fid = face_id(axis, direction)
        if not both.any():
            mse[fid] = math.nan
            psnr[fid] = math.inf
            continue
        diff = fa.color[both].astype(np.float64) - fb.color[both].astype(np.float64)
        mse[fid] = float(np.mean(diff * diff))
        psnr[fid] = psnr_from_mse(mse[fid])
    agreement = both_total / either_total if either_total else 1.0
    return MetricReport(psnr, mse, mean_finite(list(psnr.values())), agreement)


def d1_psnr(a: VoxelFrame, b: VoxelFrame) -> float:
    """Symmetric point-to-point geometry PSNR with peak 3 * (2^J - 1)^2."""
    if a.depth != b.depth:
        raise ParameterError(f"depth mismatch: {a.depth} vs {b.depth}")
    if len(a) == 0 or len(b) == 0:
        raise ParameterError("d1 PSNR needs two non-empty frames")
    mse_ab = _nn_mse(a.voxels, b.voxels)
    mse_ba = _nn_mse(b.voxels, a.voxels)
    worst = max(mse_ab, mse_ba)
    if worst == 0:
        return math.inf
    peak_sq = 3.0 * ((1 << a.depth) - 1) ** 2
    return 10.0 * math.log10(peak_sq / worst)


def _nn_mse(src, dst):
    dist, _ = cKDTree(dst).query(src, k=1)
    # integer grid: squared distances are exact integers
    return float(np.mean(np.rint(dist * dist)))
