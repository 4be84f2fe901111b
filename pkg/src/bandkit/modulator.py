"""Band corruption and the convolutional correction that follows it.

Noise injection replaces a random suffix of bands per batch item with pure
Gaussian noise; band 0 and the final residual are never touched. The
spectral transform concatenates all bands channelwise, runs a tiny two-layer
conv net, and adds the result to the plain band sum. Its second conv starts
at exactly zero, so a fresh transform is the identity on the band sum
bit for bit.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .splitflow import BandStack, band_sum
from .tensors import SeededRng, load_tensor, save_tensor

_MODES = ("off", "cutoff")


@dataclass(frozen=True)
class NoisePolicy:
    """How bands get corrupted.

    mode : "off" leaves every band alone; "cutoff" draws, per batch item, a
        keep-count kappa uniform on {1..K} and replaces bands kappa..K-1
        with N(0, sigma^2) noise, sigma uniform on sigma_range.
    """

    mode: str = "off"
    sigma_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        lo, hi = self.sigma_range
        if not 0.0 <= lo <= hi:
            raise ValueError(f"bad sigma range {self.sigma_range}")


@dataclass
class NoiseDraw:
    """One frozen realization of a noise policy for a whole batch.

    keep : int8 [B, K], 1 where the band survives. Column 0 is always 1.
    sigma : float64 [B], drawn per item whether or not it ends up used.
    noise : {(item, band): [C, H, W]} replacement tensors.
    """

    keep: np.ndarray
    sigma: np.ndarray
    noise: dict


def sample_noise(policy: NoisePolicy, rng: SeededRng, batch: int, k: int,
                 band_shape: tuple) -> NoiseDraw:
    """Draw (keep mask, sigma, noise tensors) for a batch.

    Each item uses its own substream of ``rng`` derived from the item index,
    so the draw does not depend on batch processing order. Per item the
    stream is consumed as: kappa, sigma, then replacement tensors in band
    order.
    """
    keep = np.ones((batch, k), dtype=np.int8)
    sigma = np.zeros(batch, dtype=np.float64)
    noise = {}
    if policy.mode == "off":
        return NoiseDraw(keep=keep, sigma=sigma, noise=noise)
    lo, hi = policy.sigma_range
    for i in range(batch):
        sub = rng.substream(i)
        kappa = 1 + int(sub.integers(1, k)[0])
        sigma[i] = lo + sub.uniform() * (hi - lo)
        for band in range(kappa, k):
            keep[i, band] = 0
            noise[(i, band)] = sub.gaussian(band_shape, 0.0, sigma[i])
    return NoiseDraw(keep=keep, sigma=sigma, noise=noise)


def apply_noise(stack: BandStack, draw: NoiseDraw) -> BandStack:
    """Replace dropped bands with the draw's noise tensors.

    Kept bands and the final residual pass through unchanged (same arrays).
    """
    batch = stack.bands[0].shape[0]
    if draw.keep.shape != (batch, stack.k):
        raise ValueError(
            f"draw shaped {draw.keep.shape} does not match stack ({batch}, {stack.k})"
        )
    bands = []
    for band_idx, band in enumerate(stack.bands):
        if draw.keep[:, band_idx].all():
            bands.append(band)
            continue
        out = band.copy()
        for item in range(batch):
            if not draw.keep[item, band_idx]:
                out[item] = draw.noise[(item, band_idx)].astype(band.dtype, copy=False)
        bands.append(out)
    return BandStack(bands=bands, final_residual=stack.final_residual,
                     mask_set=stack.mask_set)


def inject_noise(stack: BandStack, policy: NoisePolicy,
                 rng: SeededRng) -> tuple[BandStack, np.ndarray, np.ndarray]:
    """Sample a draw and apply it; returns (noisy stack, keep mask, sigma)."""
    band_shape = stack.bands[0].shape[1:]
    draw = sample_noise(policy, rng, stack.bands[0].shape[0], stack.k, band_shape)
    return apply_noise(stack, draw), draw.keep, draw.sigma


@dataclass
class ModulatorParams:
    """Two-layer conv correction parameters.

    conv1_w : [C, K*C, kh, kw], conv1_b : [C]
    conv2_w : [C, C, kh, kw],  conv2_b : [C]; both exactly zero at init.
    """

    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray

    @property
    def channels(self) -> int:
        return self.conv1_w.shape[0]

    @property
    def bands(self) -> int:
        return self.conv1_w.shape[1] // self.conv1_w.shape[0]

    @property
    def kernel_size(self) -> int:
        return self.conv1_w.shape[2]


def init_modulator_params(rng: SeededRng, bands: int, channels: int,
                          kernel_size: int = 3) -> ModulatorParams:
    """Fresh parameters: conv1 scaled Gaussian, conv2 identically zero."""
    if kernel_size % 2 != 1:
        raise ValueError(f"kernel size must be odd, got {kernel_size}")
    fan_in = bands * channels * kernel_size * kernel_size
    conv1_w = rng.gaussian((channels, bands * channels, kernel_size, kernel_size),
                           0.0, 1.0 / np.sqrt(fan_in))
    return ModulatorParams(
        conv1_w=conv1_w,
        conv1_b=np.zeros(channels, dtype=np.float64),
        conv2_w=np.zeros((channels, channels, kernel_size, kernel_size), dtype=np.float64),
        conv2_b=np.zeros(channels, dtype=np.float64),
    )


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Stride-1 zero-padded 2D convolution preserving spatial size.

    x : [B, Cin, H, W], w : [Cout, Cin, kh, kw] (odd kernel), b : [Cout].
    """
    kh, kw = w.shape[2], w.shape[3]
    if kh % 2 != 1 or kw % 2 != 1:
        raise ValueError(f"kernel must be odd, got {kh}x{kw}")
    if x.shape[1] != w.shape[1]:
        raise ValueError(f"input channels {x.shape[1]} != kernel fan-in {w.shape[1]}")
    xp = np.pad(x, ((0, 0), (0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    y = np.einsum("bchwij,ocij->bohw", win, w, optimize=True)
    return y + b[None, :, None, None]


def conv2d_backward(dout: np.ndarray, x: np.ndarray,
                    w: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv2d: returns (dx, dw, db) for upstream ``dout``."""
    kh, kw = w.shape[2], w.shape[3]
    xp = np.pad(x, ((0, 0), (0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    dw = np.einsum("bchwij,bohw->ocij", win, dout, optimize=True)
    db = dout.sum(axis=(0, 2, 3))
    w_flip = np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    dx = conv2d(dout, w_flip, np.zeros(w.shape[1], dtype=w.dtype))
    return dx, dw, db


def silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def silu_grad(x: np.ndarray) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


def _transform_with_cache(stack: BandStack, params: ModulatorParams):
    if stack.k != params.bands:
        raise ValueError(f"stack has {stack.k} bands, params expect {params.bands}")
    if stack.bands[0].shape[1] != params.channels:
        raise ValueError(
            f"stack has {stack.bands[0].shape[1]} channels, params expect {params.channels}"
        )
    s = np.concatenate(stack.bands, axis=1)
    pre = conv2d(s, params.conv1_w, params.conv1_b)
    h = silu(pre)
    delta = conv2d(h, params.conv2_w, params.conv2_b)
    q = delta + band_sum(stack.bands)
    cache = {"s": s, "pre": pre, "h": h}
    return q, cache


def spectral_transform(stack: BandStack, params: ModulatorParams) -> np.ndarray:
    """Corrected band recombination: conv correction plus the raw band sum.

    With freshly initialized params the correction is exactly zero and the
    output equals band_sum(stack.bands) bit for bit.
    """
    q, _ = _transform_with_cache(stack, params)
    return q


def transform_backward(dq: np.ndarray, cache: dict, params: ModulatorParams):
    """Reverse pass of the spectral transform.

    Returns (band gradients list, parameter gradient dict). Each band picks
    up the direct band-sum term plus its channel slice of the conv path.
    """
    dh, dw2, db2 = conv2d_backward(dq, cache["h"], params.conv2_w)
    dpre = dh * silu_grad(cache["pre"])
    ds, dw1, db1 = conv2d_backward(dpre, cache["s"], params.conv1_w)
    c = params.channels
    dbands = [dq + ds[:, i * c:(i + 1) * c] for i in range(params.bands)]
    grads = {"conv1_w": dw1, "conv1_b": db1, "conv2_w": dw2, "conv2_b": db2}
    return dbands, grads


_PARAM_FILES = ("conv1_w", "conv1_b", "conv2_w", "conv2_b")


def save_modulator_params(params: ModulatorParams, dirpath):
    """Write one PZT per tensor plus a small text manifest."""
    os.makedirs(dirpath, exist_ok=True)
    for name in _PARAM_FILES:
        save_tensor(getattr(params, name), os.path.join(dirpath, f"{name}.pzt"))
    with open(os.path.join(dirpath, "manifest.txt"), "w") as fh:
        fh.write(f"bands={params.bands}\n")
        fh.write(f"channels={params.channels}\n")
        fh.write(f"kernel_size={params.kernel_size}\n")


def load_modulator_params(dirpath) -> ModulatorParams:
    tensors = {name: load_tensor(os.path.join(dirpath, f"{name}.pzt"))
               for name in _PARAM_FILES}
    return ModulatorParams(**tensors)
