import numpy as np
import pytest

from aerovolve import anatomy as an
from aerovolve.anatomy import EnvelopeSpec, TailTopology
from aerovolve.gridfmt import (
    decode_payload, encode_payload, grid_bytes, read_grid, rle_decode,
    rle_encode, write_grid,
)
from aerovolve.voxelizer import voxelize

ENV = EnvelopeSpec(60, 25, 66)


class Mission:
    mass = 12000.0


def sample_grid(seed=0, res=48):
    rng = np.random.default_rng(seed)
    ng = an.seed_individual(TailTopology.CONVENTIONAL, Mission(), rng)
    return voxelize(an.decode(ng, ENV), ENV, res)


def test_rle_roundtrip_random():
    rng = np.random.default_rng(1)
    for _ in range(20):
        data = rng.integers(0, 6, size=rng.integers(1, 5000), dtype=np.uint8).tobytes()
        assert rle_decode(rle_encode(data)) == data


def test_rle_empty():
    assert rle_encode(b"") == b""
    assert rle_decode(b"") == b""


def test_rle_malformed_length():
    with pytest.raises(ValueError):
        rle_decode(b"\x01\x02\x03")


def test_rle_compresses_real_grids():
    grid = sample_grid()
    raw = grid_bytes(grid)
    packed = rle_encode(raw)
    assert len(packed) < 0.2 * len(raw)


def test_grid_file_roundtrip(tmp_path):
    grid = sample_grid(seed=2)
    path = tmp_path / "g.avxg"
    write_grid(grid, path)
    back = read_grid(path)
    assert np.array_equal(back.labels, grid.labels)
    assert back.voxel_pitch == pytest.approx(grid.voxel_pitch)
    assert np.allclose(back.origin, grid.origin)


def test_grid_file_detects_corruption(tmp_path):
    grid = sample_grid(seed=3)
    path = tmp_path / "g.avxg"
    write_grid(grid, path)
    blob = bytearray(path.read_bytes())
    blob[-1] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(ValueError):
        read_grid(path)


def test_grid_file_rejects_other_files(tmp_path):
    path = tmp_path / "not_a_grid"
    path.write_bytes(b"hello world" * 10)
    with pytest.raises(ValueError):
        read_grid(path)


def test_payload_roundtrip_with_checksum():
    grid = sample_grid(seed=4)
    msg = encode_payload(grid)
    assert msg["encoding"] == "rle"
    back = decode_payload(msg)
    assert np.array_equal(back.labels, grid.labels)


def test_payload_checksum_mismatch_raises():
    grid = sample_grid(seed=5)
    msg = encode_payload(grid)
    msg["crc32"] ^= 1
    with pytest.raises(ValueError):
        decode_payload(msg)


def test_x_fastest_byte_order():
    grid = sample_grid(seed=6, res=16)
    raw = np.frombuffer(grid_bytes(grid), dtype=np.uint8)
    # walking the stream advances x first: stream[i] == labels[i % r, (i//r) % r, i//r^2]
    r = grid.resolution
    idx = np.arange(raw.size)
    assert np.array_equal(
        raw, grid.labels[idx % r, (idx // r) % r, idx // (r * r)])
