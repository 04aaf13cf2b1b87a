"""Readers and writers: PLY point clouds, VOXF frames, VOXT octree streams, manifests.

VOXF layout (little-endian)::

    "VOXF" | u8 version=1 | u8 depth | u8 flags (bit0: colors) | u64 count
    count * (u32 x, u32 y, u32 z [, u8 r, u8 g, u8 b])

VOXT layout (little-endian)::

    "VOXT" | u8 version=1 | u8 depth | u64 mask count | mask bytes
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import (
    BadMagicError,
    CorruptFileError,
    CorruptStreamError,
    CoordinateRangeError,
    EmptyManifestError,
    MortonOrderError,
    ParseError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from .voxel import MAX_DEPTH, OctreeStream, PointCloud, VoxelFrame, morton_encode

PathLike = Union[str, os.PathLike]

# ----------------------------------------------------------------------------
# PLY
# ----------------------------------------------------------------------------

PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}
PLY_FORMATS = ("ascii", "binary_little_endian")


@dataclass
class _Element:
    name: str
    count: int
    line: int
    properties: list  # (name, numpy type code or None for lists, header line)

    @property
    def has_lists(self):
        return any(t is None for _, t, _ in self.properties)

    def dtype(self):
        return np.dtype([(name, "<" + t) for name, t, _ in self.properties])


def _parse_header(data: bytes):
    if not (data.startswith(b"ply\n") or data.startswith(b"ply\r\n")):
        raise ParseError("missing PLY magic", "header line 1")
    end = data.find(b"end_header")
    if end < 0:
        raise ParseError("missing end_header", "end of header")
    nl = data.find(b"\n", end)
    body_start = len(data) if nl < 0 else nl + 1
    lines = data[:body_start].decode("ascii", errors="replace").splitlines()

    fmt = None
    elements = []
    for lineno, raw in enumerate(lines[1:], start=2):
        parts = raw.split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        where = f"header line {lineno}"
        key = parts[0]
        if key == "format":
            if len(parts) != 3 or parts[1] not in PLY_FORMATS or parts[2] != "1.0":
                raise ParseError(f"unsupported format {' '.join(parts[1:])!r}", where)
            fmt = parts[1]
        elif key == "element":
            if len(parts) != 3 or not parts[2].isdigit():
                raise ParseError(f"malformed element line {raw!r}", where)
            elements.append(_Element(parts[1], int(parts[2]), lineno, []))
        elif key == "property":
            if not elements:
                raise ParseError("property before any element", where)
            if len(parts) == 5 and parts[1] == "list":
                elements[-1].properties.append((parts[4], None, lineno))
            elif len(parts) == 3 and parts[1] in PLY_TYPES:
                elements[-1].properties.append((parts[2], PLY_TYPES[parts[1]], lineno))
            else:
                raise ParseError(f"malformed property line {raw!r}", where)
        elif key == "end_header":
            break
        else:
            raise ParseError(f"unknown header keyword {key!r}", where)
    if fmt is None:
        raise ParseError("missing format line", "header")
    return fmt, elements, body_start


def _vertex_layout(elements):
    vertex = next((e for e in elements if e.name == "vertex"), None)
    if vertex is None:
        raise ParseError("no vertex element", "header")
    if vertex.has_lists:
        line = next(ln for _, t, ln in vertex.properties if t is None)
        raise ParseError("list properties on vertex are not supported", f"header line {line}")
    types = {name: (t, ln) for name, t, ln in vertex.properties}
    for axis in "xyz":
        if axis not in types:
            raise ParseError(f"vertex has no {axis!r} property", f"header line {vertex.line}")
        if types[axis][0] not in ("f4", "f8"):
            raise ParseError(f"property {axis!r} must be float or double", f"header line {types[axis][1]}")
    color_names = [c for c in ("red", "green", "blue") if c in types]
    if color_names and len(color_names) != 3:
        raise ParseError("partial color properties", f"header line {vertex.line}")
    for c in color_names:
        if types[c][0] != "u1":
            raise ParseError(f"property {c!r} must be uchar", f"header line {types[c][1]}")
    return vertex, bool(color_names)


def read_ply(data: bytes) -> PointCloud:
    fmt, elements, body_start = _parse_header(data)
    vertex, has_color = _vertex_layout(elements)
    if fmt == "binary_little_endian":
        table = _read_binary_vertices(data, body_start, elements, vertex)
    else:
        table = _read_ascii_vertices(data, body_start, elements, vertex)
    points = np.stack([table[a].astype(np.float64) for a in "xyz"], axis=1)
    colors = np.stack([table[c] for c in ("red", "green", "blue")], axis=1) if has_color else None
    return PointCloud(points, colors)


def _read_binary_vertices(data, offset, elements, vertex):
    for element in elements:
        if element is vertex:
            break
        if element.has_lists:
            raise ParseError(
                f"cannot skip list element {element.name!r} before vertex", f"header line {element.line}"
            )
        offset += element.count * element.dtype().itemsize
    dtype = vertex.dtype()
    need = vertex.count * dtype.itemsize
    have = len(data) - offset
    if have < need:
        raise ParseError(
            f"element count mismatch: {vertex.count} vertices need {need} bytes, body has {max(have, 0)}",
            f"byte offset {offset}",
        )
    if vertex is elements[-1] and have > need:
        raise ParseError(
            f"element count mismatch: {have - need} bytes after {vertex.count} vertices",
            f"byte offset {offset + need}",
        )
    return np.frombuffer(data, dtype=dtype, count=vertex.count, offset=offset)


def _read_ascii_vertices(data, body_start, elements, vertex):
    lines = data[body_start:].decode("ascii", errors="replace").splitlines()
    header_lines = data[:body_start].count(b"\n")
    rows = [(i, ln) for i, ln in enumerate(lines) if ln.strip()]
    skip = 0
    for element in elements:
        if element is vertex:
            break
        skip += element.count
    dtype = vertex.dtype()
    width = len(vertex.properties)
    chunk = rows[skip:skip + vertex.count]
    if len(chunk) < vertex.count:
        raise ParseError(
            f"element count mismatch: expected {vertex.count} vertices, found {len(chunk)}",
            f"line {header_lines + len(lines) + 1}",
        )
    if vertex is elements[-1] and len(rows) > skip + vertex.count:
        extra = rows[skip + vertex.count][0]
        raise ParseError(
            f"element count mismatch: data beyond {vertex.count} vertices", f"line {header_lines + extra + 1}"
        )
    table = np.empty(vertex.count, dtype=dtype)
    tokens = []
    for i, ln in chunk:
        parts = ln.split()
        if len(parts) != width:
            raise ParseError(f"expected {width} values, got {len(parts)}", f"line {header_lines + i + 1}")
        tokens.append(parts)
    try:
        values = np.array(tokens, dtype=np.float64).reshape(-1, width)
    except ValueError as exc:
        raise ParseError(f"non-numeric vertex value ({exc})", "vertex body") from exc
    for k, (name, t, _) in enumerate(vertex.properties):
        col = values[:, k]
        if t[0] in "iu":
            info = np.iinfo(np.dtype(t))
            bad = np.flatnonzero((col != np.floor(col)) | (col < info.min) | (col > info.max))
            if len(bad):
                raise ParseError(
                    f"value {col[bad[0]]!r} invalid for property {name!r}",
                    f"line {header_lines + chunk[bad[0]][0] + 1}",
                )
        table[name] = col.astype(t)
    return table


def write_ply(cloud: PointCloud, format: str = "binary_little_endian") -> bytes:
    if format not in PLY_FORMATS:
        raise ValueError(f"unknown PLY format {format!r}")
    has_color = cloud.colors is not None
    header = ["ply", f"format {format} 1.0", f"element vertex {len(cloud)}",
              "property float x", "property float y", "property float z"]
    if has_color:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header.append("end_header")
    head = ("\n".join(header) + "\n").encode("ascii")

    pts = cloud.points.astype(np.float32)
    if format == "binary_little_endian":
        fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
        if has_color:
            fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
        table = np.empty(len(cloud), dtype=fields)
        for k, a in enumerate("xyz"):
            table[a] = pts[:, k]
        if has_color:
            for k, c in enumerate(("red", "green", "blue")):
                table[c] = cloud.colors[:, k]
        return head + table.tobytes()

    out = []
    for i in range(len(cloud)):
        # %.9g round-trips every float32
        row = "%.9g %.9g %.9g" % tuple(float(v) for v in pts[i])
        if has_color:
            row += " %d %d %d" % tuple(int(c) for c in cloud.colors[i])
        out.append(row)
    return head + ("\n".join(out) + ("\n" if out else "")).encode("ascii")


# ----------------------------------------------------------------------------
# VOXF / VOXT
# ----------------------------------------------------------------------------

VOXF_MAGIC = b"VOXF"
VOXT_MAGIC = b"VOXT"
VERSION = 1
_VOXF_HEADER = struct.Struct("<4sBBBQ")
_VOXT_HEADER = struct.Struct("<4sBBQ")
_GEOM = [("x", "<u4"), ("y", "<u4"), ("z", "<u4")]
_RGB = [("r", "u1"), ("g", "u1"), ("b", "u1")]


def write_voxf(frame: VoxelFrame) -> bytes:
    flags = 1 if frame.has_colors else 0
    table = np.empty(len(frame), dtype=_GEOM + (_RGB if flags else []))
    for k, a in enumerate("xyz"):
        table[a] = frame.voxels[:, k]
    if flags:
        for k, c in enumerate("rgb"):
            table[c] = frame.colors[:, k]
    return _VOXF_HEADER.pack(VOXF_MAGIC, VERSION, frame.depth, flags, len(frame)) + table.tobytes()


def _check_common_header(data, header, magic):
    if len(data) < header.size:
        raise TruncatedFileError(f"header needs {header.size} bytes, file has {len(data)}", len(data))
    if data[:4] != magic:
        raise BadMagicError(f"bad magic {data[:4]!r}, expected {magic!r}", 0)
    if data[4] != VERSION:
        raise UnsupportedVersionError(f"unsupported version {data[4]}", 4)
    if not 1 <= data[5] <= MAX_DEPTH:
        raise CorruptFileError(f"depth {data[5]} outside [1, {MAX_DEPTH}]", 5)


def read_voxf(data: bytes) -> VoxelFrame:
    _check_common_header(data, _VOXF_HEADER, VOXF_MAGIC)
    _, _, depth, flags, count = _VOXF_HEADER.unpack_from(data)
    if flags & ~1:
        raise CorruptFileError(f"unknown flag bits {flags:#04x}", 6)
    dtype = np.dtype(_GEOM + (_RGB if flags & 1 else []))
    start = _VOXF_HEADER.size
    need = count * dtype.itemsize
    if len(data) - start < need:
        raise TruncatedFileError(f"{count} records need {need} bytes, body has {len(data) - start}", len(data))
    if len(data) - start > need:
        raise CorruptFileError(f"{len(data) - start - need} trailing bytes", start + need)
    table = np.frombuffer(data, dtype=dtype, count=count, offset=start)
    voxels = np.stack([table[a].astype(np.int64) for a in "xyz"], axis=1)
    bad = np.flatnonzero((voxels >= (1 << depth)).any(axis=1))
    if len(bad):
        raise CoordinateRangeError(
            f"record {bad[0]} has a coordinate >= 2^{depth}", start + int(bad[0]) * dtype.itemsize
        )
    codes = morton_encode(voxels)
    bad = np.flatnonzero(np.diff(codes) <= 0)
    if len(bad):
        i = int(bad[0]) + 1
        raise MortonOrderError(f"record {i} is not after record {i - 1} in Morton order", start + i * dtype.itemsize)
    colors = np.stack([table[c] for c in "rgb"], axis=1) if flags & 1 else None
    return VoxelFrame(depth, voxels, colors)


def write_voxt(stream: OctreeStream) -> bytes:
    return _VOXT_HEADER.pack(VOXT_MAGIC, VERSION, stream.depth, len(stream.masks)) + stream.masks.tobytes()


def read_voxt(data: bytes) -> OctreeStream:
    _check_common_header(data, _VOXT_HEADER, VOXT_MAGIC)
    _, _, depth, count = _VOXT_HEADER.unpack_from(data)
    start = _VOXT_HEADER.size
    if len(data) - start < count:
        raise TruncatedFileError(f"{count} masks declared, body has {len(data) - start}", len(data))
    if len(data) - start > count:
        raise CorruptFileError(f"{len(data) - start - count} trailing bytes", start + count)
    stream = OctreeStream(depth, np.frombuffer(data, dtype=np.uint8, offset=start))
    try:
        offsets = stream.level_offsets()
    except CorruptStreamError as exc:
        raise CorruptFileError(f"corrupt octree: {exc}", start + (exc.offset or 0)) from exc
    zero = np.flatnonzero(stream.masks == 0)
    if len(zero):
        raise CorruptFileError("zero child mask", start + int(zero[0]))
    if offsets[-1] != count:
        raise CorruptFileError(f"{count - offsets[-1]} masks beyond level {depth}", start + offsets[-1])
    return stream


# ----------------------------------------------------------------------------
# Manifests and file helpers
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class SequenceManifest:
    entries: tuple
    base_dir: Path

    def __len__(self):
        return len(self.entries)


def read_manifest(text: str, base_dir: PathLike = ".") -> SequenceManifest:
    base = Path(base_dir)
    entries = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        p = Path(line)
        entries.append(p if p.is_absolute() else base / p)
    if not entries:
        raise EmptyManifestError("manifest lists no frames")
    return SequenceManifest(tuple(entries), base)


def load_manifest(path: PathLike) -> SequenceManifest:
    path = Path(path)
    return read_manifest(path.read_text(encoding="utf-8"), path.parent)


def atomic_write(path: PathLike, data: Union[bytes, str]) -> None:
    """Write via a temporary file in the target directory and rename over ``path``."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
