"""Emitted tensors must be float32 and loadable by the band toolkit."""

import numpy as np
import pytest

from feature_exporter.pzt import load, save_f32

import bandkit.tensors as bk


def test_roundtrip_own_reader(tmp_path):
    arr = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    path = tmp_path / "t.pzt"
    save_f32(arr, path)
    back = load(path)
    assert back.dtype == np.float32
    assert np.array_equal(back, arr)


def test_always_f32(tmp_path):
    arr = np.linspace(0, 1, 10, dtype=np.float64)
    path = tmp_path / "t.pzt"
    save_f32(arr, path)
    back = load(path)
    assert back.dtype == np.float32
    assert np.allclose(back, arr, atol=1e-7)


def test_primary_toolkit_loads_our_files(tmp_path):
    rng = np.random.Generator(np.random.PCG64(3))
    for shape in ((5,), (2, 3), (1, 16, 8, 8), (4, 64)):
        arr = rng.normal(size=shape).astype(np.float32)
        path = tmp_path / f"r{len(shape)}.pzt"
        save_f32(arr, path)
        got = bk.load_tensor(str(path))
        assert got.dtype == np.float32
        assert got.shape == shape
        assert np.array_equal(got, arr)


def test_we_read_primary_files(tmp_path):
    arr = np.random.Generator(np.random.PCG64(4)).normal(size=(3, 5))
    path = tmp_path / "p.pzt"
    bk.save_tensor(arr, str(path))
    got = load(path)
    assert got.dtype == np.float64
    assert np.array_equal(got, arr)


def test_rank_bounds(tmp_path):
    with pytest.raises(ValueError):
        save_f32(np.zeros((1,) * 9), tmp_path / "bad.pzt")
    bad = tmp_path / "junk.pzt"
    bad.write_bytes(b"XXXX" + bytes(12))
    with pytest.raises(ValueError):
        load(bad)
