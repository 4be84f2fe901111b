"""Reconstruction and band-restricted alignment losses."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .splitflow import BandStack


@dataclass(frozen=True)
class LossReport:
    """One step's loss components; total = l_pix + lambda_sem * l_sem."""

    l_pix: float
    l_sem: float
    lambda_sem: float
    k_base: int
    total: float


def make_report(l_pix: float, l_sem: float, lambda_sem: float = 1.0,
                k_base: int = 1) -> LossReport:
    total = l_pix + lambda_sem * l_sem
    for name, v in (("l_pix", l_pix), ("l_sem", l_sem), ("total", total)):
        if not math.isfinite(v):
            raise ValueError(f"non-finite loss component {name}={v}")
    return LossReport(l_pix=float(l_pix), l_sem=float(l_sem),
                      lambda_sem=float(lambda_sem), k_base=int(k_base),
                      total=float(total))


def pixel_loss(recon: np.ndarray, target: np.ndarray) -> float:
    """Elementwise mean squared error."""
    if recon.shape != target.shape:
        raise ValueError(f"shape mismatch {recon.shape} vs {target.shape}")
    d = recon.astype(np.float64, copy=False) - target.astype(np.float64, copy=False)
    return float(np.mean(d * d))


def semantic_loss(student: BandStack, teacher: BandStack, k_base: int = 1) -> float:
    """Mean over the first ``k_base`` bands of the per-band MSE.

    Bands from k_base upward never enter the sum, so perturbing them leaves
    the value exactly unchanged.
    """
    if student.k != teacher.k:
        raise ValueError(f"band count mismatch {student.k} vs {teacher.k}")
    if not 1 <= k_base <= student.k:
        raise ValueError(f"k_base {k_base} outside 1..{student.k}")
    acc = 0.0
    for k in range(k_base):
        su = student.bands[k]
        te = teacher.bands[k]
        if su.shape != te.shape:
            raise ValueError(f"band {k} shape mismatch {su.shape} vs {te.shape}")
        d = su.astype(np.float64, copy=False) - te.astype(np.float64, copy=False)
        acc += float(np.mean(d * d))
    return acc / k_base
