"""Mixed-resolution voxelized point clouds with example-based super-resolution."""

from .errors import VoxsrError
from .io import (
    SequenceManifest,
    load_manifest,
    read_manifest,
    read_ply,
    read_voxf,
    read_voxt,
    write_ply,
    write_voxf,
    write_voxt,
)
from .metrics import FaceImage, MetricReport, d1_psnr, project_face, projection_psnr
from .pipeline import GopPattern, SequenceReport, gop_simulate, simulate_frames
from .sr import MatchParams, MatchResult, find_best_match, match_cost, neighborhood, super_resolve
from .voxel import (
    BBox,
    OctreeStream,
    PointCloud,
    VoxelFrame,
    child_mask_of,
    downsample,
    naive_upsample,
    octree_decode,
    octree_encode,
    voxelize,
)

__version__ = "0.1.0"
