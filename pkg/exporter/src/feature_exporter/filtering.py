"""Low/high-pass filtering in linear pixel space.

Applied to [0, 1] float images before encoder normalization. The math must
agree with the band toolkit's `filter` subcommand on shared vectors, so the
conventions are identical: frequency radius normalized to 1 at the spectrum
corner, a raised-cosine transition of half-width ``taper`` at the cutoff,
and a low-pass at cutoff 1.0 that short-circuits to the identity.
"""

import numpy as np
from PIL import Image


def corner_radius(h: int, w: int) -> np.ndarray:
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    return np.sqrt(fy * fy + fx * fx) / np.sqrt(0.5)


def lowpass_mask(h: int, w: int, rho: float, taper: float) -> np.ndarray:
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"cutoff must be in (0, 1], got {rho}")
    if taper < 0.0:
        raise ValueError(f"taper must be >= 0, got {taper}")
    if rho == 1.0:
        return np.ones((h, w), dtype=np.float64)
    r = corner_radius(h, w)
    if taper == 0.0:
        return np.where(r >= rho, 0.0, 1.0)
    t = np.clip((r - (rho - taper)) / (2.0 * taper), 0.0, 1.0)
    return 1.0 - 0.5 * (1.0 - np.cos(np.pi * t))


def filter_pixels(img: np.ndarray, mode: str, rho: float,
                  taper: float = 0.04, clamp: bool = True) -> np.ndarray:
    """Channelwise spectral filter of a [C, H, W] image in [0, 1].

    mode "lp" keeps frequencies below the cutoff, "hp" the complement.
    An all-pass request (lp at rho 1.0) returns the input untouched so
    filtered and unfiltered exports are identical, not merely close.
    """
    img = np.asarray(img)
    if img.ndim != 3:
        raise ValueError(f"expected [C, H, W], got shape {img.shape}")
    if mode not in ("lp", "hp"):
        raise ValueError(f"mode must be 'lp' or 'hp', got {mode!r}")
    if mode == "lp" and rho == 1.0:
        lowpass_mask(1, 1, rho, taper)  # still validate the arguments
        return img
    lp = lowpass_mask(img.shape[1], img.shape[2], rho, taper)
    mask = lp if mode == "lp" else 1.0 - lp
    spec = np.fft.fft2(img.astype(np.float64), axes=(-2, -1), norm="ortho")
    out = np.fft.ifft2(spec * mask, axes=(-2, -1), norm="ortho").real
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    return out.astype(img.dtype, copy=False)


def load_image(path, size: int) -> np.ndarray:
    """Decode, center-crop to square, resize to ``size``; [3, S, S] in [0, 1]."""
    with Image.open(path) as im:
        im = im.convert("RGB")
        side = min(im.size)
        left = (im.width - side) // 2
        top = (im.height - side) // 2
        im = im.crop((left, top, left + side, top + side))
        im = im.resize((size, size), Image.BILINEAR)
        arr = np.asarray(im, dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)


def write_ppm(path, img: np.ndarray) -> None:
    """Binary P6 PPM, maxval 255, same quantization as the band toolkit."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"expected [3, H, W], got shape {img.shape}")
    scaled = np.clip(np.rint(img.astype(np.float64) * 255.0), 0, 255)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.shape[2]} {img.shape[1]}\n255\n".encode())
        fh.write(scaled.astype(np.uint8).transpose(1, 2, 0).tobytes())


def read_ppm(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)
