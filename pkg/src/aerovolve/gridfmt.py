"""Binary and wire formats for labeled voxel grids.

File format: fixed little-endian header (magic, version, resolution, pitch,
origin, body crc32) followed by one label byte per voxel in x-fastest
order.  Wire format: the same byte stream run-length encoded as
(label u8, count u32le) pairs, carried base64 inside JSON frames.
"""

from __future__ import annotations

import base64
import struct
import zlib

import numpy as np

from .voxelizer import VoxelGrid

MAGIC = b"AVXG"
VERSION = 1
_HEADER = struct.Struct("<4sII d 3d I")  # magic, version, resolution, pitch, origin, crc


def grid_bytes(grid: VoxelGrid) -> bytes:
    """Flatten labels to the canonical x-fastest byte order."""
    return grid.labels.ravel(order="F").astype(np.uint8).tobytes()


def grid_crc(grid: VoxelGrid) -> int:
    return zlib.crc32(grid_bytes(grid))


def write_grid(grid: VoxelGrid, path) -> None:
    body = grid_bytes(grid)
    header = _HEADER.pack(MAGIC, VERSION, grid.resolution, grid.voxel_pitch,
                          *map(float, grid.origin), zlib.crc32(body))
    with open(path, "wb") as f:
        f.write(header)
        f.write(body)


def read_grid(path) -> VoxelGrid:
    with open(path, "rb") as f:
        raw = f.read()
    magic, version, res, pitch, ox, oy, oz, crc = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError("not a voxel grid file")
    if version != VERSION:
        raise ValueError(f"unsupported grid format version {version}")
    body = raw[_HEADER.size:]
    if len(body) != res**3:
        raise ValueError("truncated grid body")
    if zlib.crc32(body) != crc:
        raise ValueError("grid body checksum mismatch")
    labels = np.frombuffer(body, dtype=np.uint8).reshape((res,) * 3, order="F").copy()
    return VoxelGrid(labels=labels, voxel_pitch=pitch, origin=np.array([ox, oy, oz]))


def rle_encode(data: bytes) -> bytes:
    arr = np.frombuffer(data, dtype=np.uint8)
    if arr.size == 0:
        return b""
    edges = np.flatnonzero(np.diff(arr)) + 1
    starts = np.concatenate(([0], edges))
    ends = np.concatenate((edges, [arr.size]))
    counts = (ends - starts).astype("<u4")
    values = arr[starts]
    out = np.empty(values.size, dtype=[("v", "u1"), ("n", "<u4")])
    out["v"] = values
    out["n"] = counts
    return out.tobytes()


def rle_decode(packed: bytes) -> bytes:
    if not packed:
        return b""
    if len(packed) % 5:
        raise ValueError("malformed run-length stream")
    runs = np.frombuffer(packed, dtype=[("v", "u1"), ("n", "<u4")])
    return np.repeat(runs["v"], runs["n"]).tobytes()


def encode_payload(grid: VoxelGrid) -> dict:
    """Wire description of a grid: RLE body plus integrity checksum."""
    body = grid_bytes(grid)
    return {
        "resolution": grid.resolution,
        "pitch": grid.voxel_pitch,
        "origin": [float(v) for v in grid.origin],
        "encoding": "rle",
        "payload_b64": base64.b64encode(rle_encode(body)).decode("ascii"),
        "crc32": zlib.crc32(body),
    }


def decode_payload(msg: dict) -> VoxelGrid:
    body = rle_decode(base64.b64decode(msg["payload_b64"]))
    if zlib.crc32(body) != msg["crc32"]:
        raise ValueError("payload checksum mismatch")
    res = int(msg["resolution"])
    labels = np.frombuffer(body, dtype=np.uint8).reshape((res,) * 3, order="F").copy()
    return VoxelGrid(labels=labels, voxel_pitch=float(msg["pitch"]),
                     origin=np.asarray(msg["origin"], dtype=float))
