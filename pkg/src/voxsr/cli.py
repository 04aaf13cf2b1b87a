"""``voxsr`` command line. Exit codes: 0 success, 1 usage error, 2 data error."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import io as vio
from .errors import VoxsrError
from .metrics import FACES, d1_psnr, face_id, projection_psnr
from .pipeline import GopPattern, gop_simulate, format_db
from .sr import MatchParams, super_resolve
from .voxel import BBox, downsample, naive_upsample, octree_decode, octree_encode, voxelize

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise UsageError(message)


def _read_frame(path):
    return vio.read_voxf(Path(path).read_bytes())


def cmd_voxelize(args):
    cloud = vio.read_ply(Path(args.input).read_bytes())
    bbox = BBox(tuple(args.bbox[:3]), args.bbox[3]) if args.bbox else None
    vio.atomic_write(args.out, vio.write_voxf(voxelize(cloud, args.depth, bbox)))


def cmd_downsample(args):
    vio.atomic_write(args.out, vio.write_voxf(downsample(_read_frame(args.input))))


def cmd_upsample(args):
    vio.atomic_write(args.out, vio.write_voxf(naive_upsample(_read_frame(args.input))))


def cmd_superres(args):
    refs = [_read_frame(r) for r in args.ref]
    out = super_resolve(_read_frame(args.input), refs, MatchParams(args.window))
    vio.atomic_write(args.out, vio.write_voxf(out))


def cmd_octree(args):
    data = Path(args.input).read_bytes()
    if args.action == "encode":
        vio.atomic_write(args.out, vio.write_voxt(octree_encode(vio.read_voxf(data))))
    else:
        frame = octree_decode(vio.read_voxt(data), args.levels)
        vio.atomic_write(args.out, vio.write_voxf(frame))


def cmd_metric(args):
    a, b = _read_frame(args.a), _read_frame(args.b)
    if args.kind in ("proj", "both"):
        report = projection_psnr(a, b)
        for axis, direction in FACES:
            fid = face_id(axis, direction)
            print(f"face {fid} psnr_db {format_db(report.per_face_psnr[fid])}")
        print(f"mean_psnr_db {format_db(report.mean_psnr)}")
        print(f"occupancy_agreement {report.occupancy_agreement:.6f}")
    if args.kind in ("d1", "both"):
        print(f"d1_psnr_db {format_db(d1_psnr(a, b))}")


def cmd_gop(args):
    manifest = vio.load_manifest(args.manifest)
    report = gop_simulate(manifest, args.depth, GopPattern(args.period), MatchParams(args.window), args.workers)
    vio.atomic_write(args.csv, report.to_csv())
    if report.excluded:
        print(f"non-finite gain (excluded from mean): frames {report.excluded}", file=sys.stderr)
    print(f"mean_gain_db {format_db(report.mean_gain)}")


def _non_negative(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def build_parser():
    p = _Parser(prog="voxsr", description="Mixed-resolution voxel point clouds and example-based super-resolution.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("voxelize", help="quantize a PLY point cloud into a VOXF frame")
    s.add_argument("input")
    s.add_argument("--depth", type=int, default=9)
    s.add_argument("--bbox", type=float, nargs=4, metavar=("MINX", "MINY", "MINZ", "EDGE"),
                   help="bounding cube to quantize in (default: the cloud's own)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_voxelize)

    for name, func, text in (("downsample", cmd_downsample, "halve the resolution of a VOXF frame"),
                             ("upsample", cmd_upsample, "naive 8-child upsampling of a VOXF frame")):
        s = sub.add_parser(name, help=text)
        s.add_argument("input")
        s.add_argument("--out", required=True)
        s.set_defaults(func=func)

    s = sub.add_parser("superres", help="super-resolve a low-resolution VOXF frame from references")
    s.add_argument("input")
    s.add_argument("--ref", action="append", required=True, help="full-resolution reference (repeatable)")
    s.add_argument("--window", type=_non_negative, default=4)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_superres)

    s = sub.add_parser("octree", help="convert between VOXF frames and VOXT octree streams")
    s.add_argument("action", choices=("encode", "decode"))
    s.add_argument("input")
    s.add_argument("--levels", type=int, default=None, help="decode only the first LEVELS levels")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_octree)

    s = sub.add_parser("metric", help="compare two VOXF frames")
    s.add_argument("a")
    s.add_argument("b")
    s.add_argument("--kind", choices=("proj", "d1", "both"), default="proj")
    s.set_defaults(func=cmd_metric)

    s = sub.add_parser("gop", help="run the mixed-resolution sequence experiment")
    s.add_argument("--manifest", required=True)
    s.add_argument("--depth", type=int, default=9)
    s.add_argument("--period", type=int, default=2)
    s.add_argument("--window", type=_non_negative, default=4)
    s.add_argument("--csv", required=True)
    s.add_argument("--workers", type=int, default=None, help="worker threads (default: CPUs, capped by VOXSR_WORKERS)")
    s.set_defaults(func=cmd_gop)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (VoxsrError, OSError) as exc:
        print(f"voxsr: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
