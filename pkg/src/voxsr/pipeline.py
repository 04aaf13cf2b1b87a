"""Mixed-resolution sequence experiment: super-resolution versus naive upsampling."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .errors import EmptyReportError, ParameterError, VoxsrError
from .io import SequenceManifest, read_ply, read_voxf
from .metrics import d1_psnr, projection_psnr
from .sr import MatchParams, super_resolve
from .voxel import BBox, VoxelFrame, downsample, naive_upsample, voxelize

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "frame_index", "ref_before", "ref_after",
    "sr_proj_psnr_db", "base_proj_psnr_db", "sr_d1_psnr_db", "base_d1_psnr_db", "gain_db",
)
WORKERS_ENV = "VOXSR_WORKERS"


class FrameLoadError(VoxsrError):
    def __init__(self, index, path, reason):
        super().__init__(f"frame {index} ({path}): {reason}")
        self.index = index
        self.path = path


@dataclass(frozen=True)
class GopPattern:
    period: int = 2

    def __post_init__(self):
        if not isinstance(self.period, int) or self.period < 2:
            raise ParameterError(f"GOP period must be an integer >= 2, got {self.period!r}")

    def is_anchor(self, index: int) -> bool:
        return index % self.period == 0

    def anchors_for(self, index: int, n_frames: int) -> tuple[int, Optional[int]]:
        before = (index // self.period) * self.period
        after = before + self.period
        return before, (after if after < n_frames else None)


@dataclass(frozen=True)
class FrameRow:
    frame_index: int
    ref_before: int
    ref_after: Optional[int]
    sr_proj_psnr: float
    base_proj_psnr: float
    sr_d1_psnr: float
    base_d1_psnr: float

    @property
    def gain(self) -> float:
        return self.sr_proj_psnr - self.base_proj_psnr

    @property
    def d1_gain(self) -> float:
        return self.sr_d1_psnr - self.base_d1_psnr

    @property
    def finite(self) -> bool:
        return math.isfinite(self.gain)


@dataclass(frozen=True)
class SequenceReport:
    rows: tuple

    @property
    def excluded(self) -> list[int]:
        """Frame indices whose gain is not finite and is left out of the mean."""
        return [r.frame_index for r in self.rows if not r.finite]

    @property
    def mean_gain(self) -> float:
        gains = [r.gain for r in self.rows if r.finite]
        return sum(gains) / len(gains) if gains else math.nan

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([
                r.frame_index, r.ref_before, "" if r.ref_after is None else r.ref_after,
                format_db(r.sr_proj_psnr), format_db(r.base_proj_psnr),
                format_db(r.sr_d1_psnr), format_db(r.base_d1_psnr), format_db(r.gain),
            ])
        w.writerow(["summary", "", "", "", "", "", "", format_db(self.mean_gain)])
        return buf.getvalue()


def format_db(x: float) -> str:
    return f"{x:.6f}" if math.isfinite(x) else str(x)


def load_frames(manifest: SequenceManifest, depth: int) -> list[VoxelFrame]:
    """Voxelize every manifest entry at ``depth`` inside one shared bounding cube.

    PLY entries are quantized with the union of all PLY bounding boxes. VOXF
    entries are used as stored, downsampled when deeper than ``depth``.
    """
    loaded = []
    for i, path in enumerate(manifest.entries):
        try:
            data = Path(path).read_bytes()
            if Path(path).suffix.lower() == ".voxf":
                loaded.append(read_voxf(data))
            else:
                loaded.append(read_ply(data))
        except (OSError, VoxsrError) as exc:
            raise FrameLoadError(i, path, exc) from exc

    clouds = [c for c in loaded if not isinstance(c, VoxelFrame)]
    bbox = BBox.union([c.bbox for c in clouds]) if clouds else None
    frames = []
    for i, item in enumerate(loaded):
        if isinstance(item, VoxelFrame):
            if item.depth < depth:
                raise FrameLoadError(i, manifest.entries[i], f"stored depth {item.depth} < {depth}")
            while item.depth > depth:
                item = downsample(item)
            frames.append(item)
        else:
            frames.append(voxelize(item, depth, bbox))
    return frames


def evaluate_frame(frames: Sequence[VoxelFrame], index: int, pattern: GopPattern,
                   params: MatchParams) -> FrameRow:
    truth = frames[index]
    before, after = pattern.anchors_for(index, len(frames))
    refs = [frames[before]] + ([frames[after]] if after is not None else [])
    low = downsample(truth)
    sr = super_resolve(low, refs, params)
    base = naive_upsample(low)
    return FrameRow(
        frame_index=index,
        ref_before=before,
        ref_after=after,
        sr_proj_psnr=projection_psnr(sr, truth).mean_psnr,
        base_proj_psnr=projection_psnr(base, truth).mean_psnr,
        sr_d1_psnr=d1_psnr(sr, truth),
        base_d1_psnr=d1_psnr(base, truth),
    )


def default_workers() -> int:
    workers = os.cpu_count() or 1
    cap = os.environ.get(WORKERS_ENV)
    if cap:
        try:
            workers = min(workers, max(1, int(cap)))
        except ValueError:
            raise ParameterError(f"{WORKERS_ENV} must be an integer, got {cap!r}")
    return workers


def simulate_frames(frames: Sequence[VoxelFrame], pattern: GopPattern = GopPattern(),
                    params: MatchParams = MatchParams(), workers: Optional[int] = None) -> SequenceReport:
    low = [i for i in range(len(frames)) if not pattern.is_anchor(i)]
    if not low:
        raise EmptyReportError(f"{len(frames)} frame(s) with period {pattern.period} leave no low-resolution frame")
    workers = max(1, min(workers or default_workers(), len(low)))
    log.info("evaluating %d low-resolution frames with %d worker(s)", len(low), workers)
    if workers == 1:
        rows = [evaluate_frame(frames, i, pattern, params) for i in low]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda i: evaluate_frame(frames, i, pattern, params), low))
    return SequenceReport(tuple(rows))


def gop_simulate(manifest: SequenceManifest, depth: int = 9, pattern: GopPattern = GopPattern(),
                 params: MatchParams = MatchParams(), workers: Optional[int] = None) -> SequenceReport:
    frames = load_frames(manifest, depth)
    return simulate_frames(frames, pattern, params, workers)
