"""Radial frequency masks: concentric ring partitions and low/high-pass pairs.

Every mask lives on the unshifted frequency grid of a H x W transform and is
indexed by a normalized radius. Per-axis frequencies wrap the usual way
(fu = u/H for u <= H/2, else (u-H)/H) and the radius sqrt(fu^2 + fv^2) is
divided by sqrt(0.5) so the spectrum corner lands at exactly 1.0; the axis
Nyquist bins sit near 0.7071. Transitions are raised-cosine ramps of
half-width ``taper`` centred on each edge, so masks are smooth, symmetric
under frequency negation, and adjacent rings sum to one across a shared edge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BandMaskSet:
    """K ring masks for one grid size.

    masks : float64 [K, H, W]; mask k peaks inside ring k and decays to zero
        beyond its edges plus/minus taper. The DC bin belongs to mask 0.
    edges : float64 [K+1], equally spaced on [0, 1].
    normalized : True when the set was pointwise divided by its sum so the
        masks form an exact partition of unity.
    """

    masks: np.ndarray
    edges: np.ndarray
    taper: float
    normalized: bool

    @property
    def k(self) -> int:
        return self.masks.shape[0]

    @property
    def grid(self) -> tuple[int, int]:
        return self.masks.shape[1], self.masks.shape[2]


@dataclass(frozen=True)
class CutoffMaskPair:
    """Complementary low-pass / high-pass masks at one cutoff.

    lp + hp == 1 everywhere by construction; lp is nonincreasing and hp
    nondecreasing in normalized radius.
    """

    lp: np.ndarray
    hp: np.ndarray
    cutoff: float
    taper: float


def normalized_radius(h: int, w: int) -> np.ndarray:
    """Radius grid in [0, 1], DC at [0, 0], spectrum corner at exactly 1."""
    if h < 1 or w < 1:
        raise ValueError(f"grid sides must be >= 1, got {h}x{w}")
    fu = np.fft.fftfreq(h)[:, None]
    fv = np.fft.fftfreq(w)[None, :]
    return np.sqrt(fu * fu + fv * fv) / np.sqrt(0.5)


def _rising_edge(r: np.ndarray, edge: float, taper: float) -> np.ndarray:
    """0 below edge-taper, 1 above edge+taper, raised-cosine between."""
    if taper == 0.0:
        return np.where(r >= edge, 1.0, 0.0)
    # subnormal taper can overflow the divide; clip still lands on 0/1
    with np.errstate(over="ignore"):
        t = np.clip((r - (edge - taper)) / (2.0 * taper), 0.0, 1.0)
    return 0.5 * (1.0 - np.cos(np.pi * t))


def ring_masks(h: int, w: int, k: int, taper: float = 0.04,
               normalized: bool = False) -> BandMaskSet:
    """Build K concentric ring masks with equally spaced edges on [0, 1].

    Parameters
    ----------
    h, w : transform grid sides.
    k : number of rings, >= 1. k == 1 gives a single all-ones mask.
    taper : raised-cosine half-width; must satisfy 0 <= taper < (1/k)/2 so
        neighbouring transitions cannot overlap.
    normalized : divide the stack pointwise by its sum, making the set an
        exact partition of unity.
    """
    if k < 1:
        raise ValueError(f"band count must be >= 1, got {k}")
    width = 1.0 / k
    if not 0.0 <= taper < width / 2.0:
        raise ValueError(
            f"taper {taper} outside [0, {width / 2.0}) for {k} bands"
        )
    r = normalized_radius(h, w)
    edges = np.linspace(0.0, 1.0, k + 1)
    masks = np.empty((k, h, w), dtype=np.float64)
    for i in range(k):
        rise = 1.0 if i == 0 else _rising_edge(r, edges[i], taper)
        fall = 1.0 if i == k - 1 else 1.0 - _rising_edge(r, edges[i + 1], taper)
        masks[i] = rise * fall
    if normalized:
        total = masks.sum(axis=0)
        masks = masks / total
    return BandMaskSet(masks=masks, edges=edges, taper=float(taper),
                       normalized=normalized)


def cutoff_masks(h: int, w: int, rho: float, taper: float = 0.04) -> CutoffMaskPair:
    """Low/high-pass pair with a raised-cosine step at normalized radius rho.

    rho must lie in (0, 1]. rho == 1 short-circuits to the identity filter
    (lp all ones) since no representable frequency lies beyond the corner.
    """
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"cutoff must be in (0, 1], got {rho}")
    if taper < 0.0:
        raise ValueError(f"taper must be >= 0, got {taper}")
    if rho == 1.0:
        lp = np.ones((h, w), dtype=np.float64)
    else:
        r = normalized_radius(h, w)
        lp = 1.0 - _rising_edge(r, rho, taper)
    return CutoffMaskPair(lp=lp, hp=1.0 - lp, cutoff=float(rho), taper=float(taper))
