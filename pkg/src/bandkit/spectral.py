"""Orthonormal 2D discrete Fourier transform over the trailing two axes.

Both directions carry a 1/sqrt(H*W) factor, so the transform is unitary and
energy is preserved exactly (Parseval). Spectra are unshifted: the DC
coefficient sits at index [0, 0]. Internals run in double precision whatever
the input dtype; callers that need float32 cast the results back.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SymmetryError(ValueError):
    """Inverse transform of a spectrum that is not conjugate-symmetric."""


@dataclass(frozen=True)
class Spectrum:
    """Complex frequency-domain tensor, DC at index [..., 0, 0].

    values : complex128 ndarray, shape [..., H, W]
    scaling : always "orthonormal"; recorded so files and call sites cannot
        silently disagree about normalization.
    """

    values: np.ndarray
    scaling: str = field(default="orthonormal")

    @property
    def shape(self):
        return self.values.shape

    @property
    def re(self) -> np.ndarray:
        return self.values.real

    @property
    def im(self) -> np.ndarray:
        return self.values.imag


def dft2(x: np.ndarray) -> Spectrum:
    """Forward orthonormal DFT of the trailing two axes.

    Leading axes are transformed independently. Input may be float32 or
    float64; computation is complex128 either way.
    """
    x = np.asarray(x)
    if x.ndim < 2:
        raise ValueError(f"need at least 2 dimensions, got shape {x.shape}")
    vals = np.fft.fft2(x.astype(np.float64, copy=False), axes=(-2, -1), norm="ortho")
    return Spectrum(vals)


def idft2(s: Spectrum, imag_tol: float | None = None) -> np.ndarray:
    """Inverse orthonormal DFT, returning the real part.

    If ``imag_tol`` is given and the largest leftover imaginary magnitude
    exceeds it, the spectrum was not conjugate-symmetric and a SymmetryError
    is raised instead of silently discarding structure.
    """
    x, residue = idft2_with_residue(s)
    if imag_tol is not None and residue > imag_tol:
        raise SymmetryError(
            f"imaginary residue {residue:.3e} exceeds tolerance {imag_tol:.3e}"
        )
    return x


def idft2_with_residue(s: Spectrum) -> tuple[np.ndarray, float]:
    """Inverse transform plus the max |imaginary part| it discarded."""
    if s.scaling != "orthonormal":
        raise ValueError(f"unknown scaling {s.scaling!r}")
    full = np.fft.ifft2(s.values, axes=(-2, -1), norm="ortho")
    residue = float(np.max(np.abs(full.imag))) if full.size else 0.0
    return full.real.copy(), residue


def total_energy(x: np.ndarray) -> float:
    """Sum of squared elements, accumulated in double precision."""
    x = np.asarray(x, dtype=np.float64)
    return float(np.sum(x * x))


def spectral_energy(s: Spectrum) -> float:
    """Sum of squared coefficient magnitudes; equals total_energy(idft2(s))."""
    v = s.values
    return float(np.sum(v.real * v.real + v.imag * v.imag))
