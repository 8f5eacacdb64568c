import numpy as np
import pytest

from lapanet import io

from conftest import crandn


@pytest.mark.parametrize("dtype", ["<f8", "<c16", "<i4", "u1", "<f4", "<c8", "<i8", "?"])
def test_cxa_roundtrip(dtype, rng):
    arr = (rng.standard_normal((3, 4, 5)) * 10).astype(dtype)
    back = io.loads_cxa(io.dumps_cxa(arr))
    assert back.dtype == np.dtype(dtype) and np.array_equal(back, arr)


def test_cxa_header_layout(rng):
    buf = io.dumps_cxa(crandn(rng, 2, 3))
    assert buf[:8] == b"\x89CXA\r\n\x1a\n"
    assert buf[8:12] == (1).to_bytes(4, "little")
    assert buf[16:20] == (2).to_bytes(4, "little")
    assert len(buf) == 20 + 8 + 4 + 6 * 16


def test_cxa_scalar_and_empty():
    assert io.loads_cxa(io.dumps_cxa(np.float64(3.5))) == 3.5
    assert io.loads_cxa(io.dumps_cxa(np.zeros((0, 4)))).shape == (0, 4)


def test_cxa_rejects_bad_streams():
    good = io.dumps_cxa(np.arange(4.0))
    with pytest.raises(io.CXAError):
        io.loads_cxa(b"nope" * 10)
    with pytest.raises(io.CXAError):
        io.loads_cxa(good[:-1])
    with pytest.raises(io.CXAError):
        io.loads_cxa(good[:8] + (2).to_bytes(4, "little") + good[12:])
    with pytest.raises(io.CXAError):
        io.dumps_cxa(np.array(["a"]))


def test_bundle(tmp_path, rng):
    tensors = {"enc/w": rng.standard_normal((2, 3)).astype(np.float32), "b": np.arange(3)}
    io.save_bundle(tmp_path / "ck", tensors)
    back = io.load_bundle(tmp_path / "ck")
    assert set(back) == set(tensors)
    assert all(np.array_equal(back[k], tensors[k]) for k in tensors)


def test_pgm_ppm(tmp_path, rng):
    img = rng.random((5, 7))
    io.write_pgm(tmp_path / "a.pgm", img, comment="scale 0..1")
    g = io.read_pnm(tmp_path / "a.pgm")
    assert g.shape == (5, 7) and g.min() == 0 and g.max() == 255
    rgb = rng.integers(0, 256, (4, 3, 3), dtype=np.uint8)
    io.write_ppm(tmp_path / "b.ppm", rgb)
    assert np.array_equal(io.read_pnm(tmp_path / "b.ppm"), rgb)


def test_to_uint8_constant():
    assert not io.to_uint8(np.full((2, 2), 3.0)).any()


def test_kv_roundtrip(tmp_path):
    d = {"a": 1, "b": 0.1, "c": [1, 2.5], "d": True, "e": "cartesian", "f": [3]}
    io.write_kv(tmp_path / "c.txt", d)
    assert io.read_kv(tmp_path / "c.txt") == d


def test_kv_comments_and_errors(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("# header\nx = 2  # two\n\n")
    assert io.read_kv(p) == {"x": 2}
    p.write_text("oops\n")
    with pytest.raises(ValueError):
        io.read_kv(p)
