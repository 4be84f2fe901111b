"""Tensor file format and portable random number generation.

Tensors are plain numpy arrays in float32 or float64. The on-disk format
(extension ``.pzt``) is little-endian throughout:

    bytes 0-3   magic "PZT1"
    byte  4     dtype code: 1 = float32, 2 = float64
    byte  5     ndim (1..8)
    bytes 6-7   zero padding
    then        ndim x uint32 dimension sizes
    then        row-major element payload, no alignment padding

Randomness comes from a counter-based generator fully specified here so a
given seed yields the same stream on every platform and run; the interpreter
or numpy default generators are deliberately not used anywhere.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"PZT1"

_DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODES_BY_KIND = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_LEAF = 0xD1B54A32D192ED03


class PZTError(Exception):
    """Base class for tensor file problems."""


class PZTFormatError(PZTError):
    """Malformed header field (magic, dtype code, ndim, padding, dims)."""


class PZTLengthError(PZTError):
    """File shorter or longer than its header declares."""


def _check_saveable(t: np.ndarray):
    if t.dtype not in _CODES_BY_KIND:
        raise ValueError(f"unsupported dtype {t.dtype}; expected float32 or float64")
    if not 1 <= t.ndim <= 8:
        raise ValueError(f"ndim {t.ndim} outside 1..8")
    if any(d < 1 for d in t.shape):
        raise ValueError(f"zero-sized dimension in shape {t.shape}")
    if any(d > 0xFFFFFFFF for d in t.shape):
        raise ValueError(f"dimension too large for uint32 in shape {t.shape}")


def save_tensor(t: np.ndarray, path):
    """Write array ``t`` to ``path`` in the PZT layout described above."""
    t = np.ascontiguousarray(t)
    _check_saveable(t)
    code = _CODES_BY_KIND[t.dtype]
    header = MAGIC + struct.pack("<BBH", code, t.ndim, 0)
    dims = struct.pack(f"<{t.ndim}I", *t.shape)
    payload = t.astype(_DTYPE_CODES[code], copy=False).tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(dims)
        fh.write(payload)


def load_tensor(path) -> np.ndarray:
    """Read a PZT file back into a numpy array, dtype preserved."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise PZTLengthError(f"{path}: truncated header ({len(raw)} bytes, need 8)")
    if raw[:4] != MAGIC:
        raise PZTFormatError(f"{path}: bad magic {raw[:4]!r}")
    code, ndim, pad = struct.unpack("<BBH", raw[4:8])
    if code not in _DTYPE_CODES:
        raise PZTFormatError(f"{path}: bad dtype code {code}")
    if not 1 <= ndim <= 8:
        raise PZTFormatError(f"{path}: bad ndim {ndim}")
    if pad != 0:
        raise PZTFormatError(f"{path}: nonzero header padding {pad}")
    dims_end = 8 + 4 * ndim
    if len(raw) < dims_end:
        have = (len(raw) - 8) // 4
        raise PZTLengthError(
            f"{path}: truncated dimension list: declared {ndim} dims, found {have}"
        )
    shape = struct.unpack(f"<{ndim}I", raw[8:dims_end])
    if any(d < 1 for d in shape):
        raise PZTFormatError(f"{path}: zero-sized dimension in {shape}")
    dtype = _DTYPE_CODES[code]
    n = 1
    for d in shape:
        n *= d
    expected = dims_end + n * dtype.itemsize
    if len(raw) != expected:
        raise PZTLengthError(
            f"{path}: payload is {len(raw) - dims_end} bytes, header declares {n * dtype.itemsize}"
        )
    data = np.frombuffer(raw, dtype=dtype, offset=dims_end).reshape(shape)
    # native byte order, own the memory
    return data.astype(dtype.newbyteorder("="), copy=True)


def _mix64(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


class SeededRng:
    """Counter-based splitmix64 stream.

    Output i is mix64(key + (i+1) * golden) where mix64 is the usual 64-bit
    finalizer, so the stream is a pure function of (seed, counter) and never
    depends on platform state. Gaussian draws use the Box-Muller transform
    with both variates of each pair consumed in order.
    """

    def __init__(self, seed: int):
        self._key = seed & _MASK64
        self._count = 0

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        with np.errstate(over="ignore"):
            state = np.uint64(self._key) + idx * np.uint64(_GOLDEN)
        return _mix64_array(state)

    def uniforms(self, n: int) -> np.ndarray:
        """n doubles uniform on [0, 1), 53-bit resolution."""
        return (self._raw(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def uniform(self) -> float:
        return float(self.uniforms(1)[0])

    def integers(self, n: int, high: int) -> np.ndarray:
        """n ints uniform on {0, ..., high-1}."""
        if high < 1:
            raise ValueError(f"high must be >= 1, got {high}")
        return np.minimum((self.uniforms(n) * high).astype(np.int64), high - 1)

    def gaussian(self, shape, mu: float = 0.0, sigma: float = 1.0,
                 dtype=np.float64) -> np.ndarray:
        """Gaussian draws via Box-Muller; consumes two uniforms per pair."""
        if sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {sigma}")
        shape = tuple(np.atleast_1d(shape).astype(int)) if not np.isscalar(shape) else (int(shape),)
        n = 1
        for d in shape:
            n *= d
        pairs = (n + 1) // 2
        u = self.uniforms(2 * pairs)
        u1 = 1.0 - u[0::2]  # (0, 1]: keeps log finite
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = r * np.cos(2.0 * np.pi * u2)
        out[1::2] = r * np.sin(2.0 * np.pi * u2)
        return (mu + sigma * out[:n]).reshape(shape).astype(dtype, copy=False)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of range(n), driven by this stream."""
        perm = np.arange(n)
        if n > 1:
            u = self.uniforms(n - 1)
            for i in range(n - 1, 0, -1):
                j = min(int(u[n - 1 - i] * (i + 1)), i)
                perm[i], perm[j] = perm[j], perm[i]
        return perm

    def substream(self, index: int) -> "SeededRng":
        """Independent child stream for item ``index``; order-insensitive."""
        child = _mix64((self._key + ((index + 1) * _LEAF & _MASK64)) & _MASK64)
        return SeededRng(child)


def gaussian_tensor(rng: SeededRng, shape, mu: float = 0.0, sigma: float = 1.0,
                    dtype=np.float64) -> np.ndarray:
    """Tensor of Gaussian draws from ``rng``; see SeededRng.gaussian."""
    return rng.gaussian(shape, mu, sigma, dtype)
