"""Iterative residual split of a latent grid into frequency bands.

Each step projects the running residual onto one ring mask and subtracts the
projection, so input = sum(bands) + final_residual holds exactly by
telescoping whatever the masks are. A binary partition of unity (zero taper)
is consumed completely and leaves a residual at rounding level. Tapered
partitions do not: an overlap bin shared (a, 1-a) between neighbours retains
an a(1-a) fraction of its amplitude after both passes, so the residual norm
grows like sqrt(taper) and only the zero-taper case is negligible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .masks import BandMaskSet
from .spectral import Spectrum, dft2, idft2

# leftover imaginary magnitude allowed when projecting real tensors
PROJECT_IMAG_TOL = 1e-5


@dataclass
class BandStack:
    """Ordered band tensors plus what the split left behind.

    bands : list of [B, C, H, W] tensors, band 0 holding the lowest ring.
    final_residual : same shape, the input minus every extracted band.
    mask_set : the masks that produced the stack.
    """

    bands: list[np.ndarray]
    final_residual: np.ndarray
    mask_set: BandMaskSet

    @property
    def k(self) -> int:
        return len(self.bands)


def band_sum(bands: list[np.ndarray]) -> np.ndarray:
    """Sum of band tensors in ascending band order (fixed accumulation)."""
    acc = bands[0].copy()
    for b in bands[1:]:
        acc += b
    return acc


def project_band(x: np.ndarray, mask: np.ndarray,
                 imag_tol: float = PROJECT_IMAG_TOL) -> np.ndarray:
    """Keep only the frequencies that ``mask`` passes.

    x : real tensor [..., H, W]; trailing axes must match the mask grid.
    Transforms, multiplies by the real symmetric mask, and inverts; the
    result is cast back to the dtype of ``x``. An asymmetric mask shows up
    as an imaginary residue above ``imag_tol`` and raises SymmetryError.
    """
    x = np.asarray(x)
    if x.ndim < 2:
        raise ValueError(f"need at least 2 dimensions, got shape {x.shape}")
    if x.shape[-2:] != mask.shape:
        raise ValueError(
            f"trailing axes {x.shape[-2:]} do not match mask grid {mask.shape}"
        )
    spec = dft2(x)
    out = idft2(Spectrum(spec.values * mask), imag_tol=imag_tol)
    return out.astype(x.dtype, copy=False)


def iterative_split(z: np.ndarray, mask_set: BandMaskSet) -> BandStack:
    """Split ``z`` into mask_set.k bands by repeated project-and-subtract.

    The residual chain is kept in the dtype of ``z``, so the telescoped
    identity sum(bands) + final_residual == z holds to that dtype's
    round-off regardless of mask choice.
    """
    z = np.asarray(z)
    if z.ndim < 2:
        raise ValueError(f"need at least 2 dimensions, got shape {z.shape}")
    if z.shape[-2:] != mask_set.grid:
        raise ValueError(
            f"trailing axes {z.shape[-2:]} do not match mask grid {mask_set.grid}"
        )
    residual = z.copy()
    bands = []
    for k in range(mask_set.k):
        band = project_band(residual, mask_set.masks[k])
        bands.append(band)
        residual = residual - band
    return BandStack(bands=bands, final_residual=residual, mask_set=mask_set)


def recompose(stack: BandStack, drop_residual: bool = False) -> np.ndarray:
    """Rebuild the split input: sum of bands, plus the residual by default."""
    out = band_sum(stack.bands)
    if not drop_residual:
        out = out + stack.final_residual
    return out


def split_adjoint(band_grads: list[np.ndarray], residual_grad: np.ndarray | None,
                  mask_set: BandMaskSet) -> np.ndarray:
    """Adjoint of iterative_split as a map from band cotangents to input space.

    The split is linear and each projector is self-adjoint (real symmetric
    mask under a unitary transform), so the reverse pass reapplies the same
    masks while running the telescope backwards.
    """
    if len(band_grads) != mask_set.k:
        raise ValueError(f"expected {mask_set.k} band gradients, got {len(band_grads)}")
    if residual_grad is None:
        acc = np.zeros_like(band_grads[-1])
    else:
        acc = residual_grad.copy()
    for k in range(mask_set.k - 1, -1, -1):
        acc = acc + project_band(band_grads[k] - acc, mask_set.masks[k])
    return acc
