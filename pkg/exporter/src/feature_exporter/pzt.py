"""Minimal PZT tensor writer.

The consuming toolkit defines the format; this is an independent encoder
for it. Layout (little-endian): magic "PZT1", one dtype byte (1 = f32,
2 = f64), one rank byte (1..8), two zero pad bytes, rank u32 dims, then
the row-major payload. Everything this package emits is float32.
"""

import struct

import numpy as np

_MAGIC = b"PZT1"
_DTYPE_F32 = 1
_DTYPE_F64 = 2


def save_f32(arr: np.ndarray, path) -> None:
    """Write ``arr`` as a float32 PZT file (values are cast if needed)."""
    arr = np.ascontiguousarray(np.asarray(arr), dtype=np.float32)
    if not 1 <= arr.ndim <= 8:
        raise ValueError(f"rank {arr.ndim} outside 1..8")
    header = _MAGIC + struct.pack("<BBxx", _DTYPE_F32, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes())


def load(path) -> np.ndarray:
    """Read a PZT file back; used only to sanity-check our own output."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:4]!r}")
    code, ndim = struct.unpack_from("<BBxx", raw, 4)
    dtype = {_DTYPE_F32: np.float32, _DTYPE_F64: np.float64}.get(code)
    if dtype is None or not 1 <= ndim <= 8:
        raise ValueError(f"{path}: bad dtype/rank bytes ({code}, {ndim})")
    dims = struct.unpack_from(f"<{ndim}I", raw, 8)
    payload = raw[8 + 4 * ndim:]
    arr = np.frombuffer(payload, dtype=np.dtype(dtype).newbyteorder("<"))
    return arr.reshape(dims).astype(dtype, copy=False)
