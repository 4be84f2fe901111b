"""Desk-scale autoencoder over the band pipeline, trained by hand-written
reverse mode and plain gradient descent.

The model is deliberately tiny: a per-patch linear encoder to a latent grid,
the iterative band split, optional band corruption, the conv correction, and
a per-patch linear decoder. A frozen copy of the initial encoder acts as the
alignment target for the band-restricted loss. Everything runs in float64 so
gradients can be checked against central finite differences.

Stages: 1 trains everything except the encoder (reconstruction only, the
alignment loss is identically zero while the encoder equals its frozen
copy); 2 unfreezes the encoder and adds the alignment loss; 3 keeps the same
objective with band corruption switched on.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .losses import LossReport, make_report, pixel_loss, semantic_loss
from .masks import ring_masks
from .modulator import (ModulatorParams, NoiseDraw, NoisePolicy,
                        _transform_with_cache, apply_noise,
                        init_modulator_params, sample_noise,
                        transform_backward)
from .splitflow import iterative_split, split_adjoint
from .tensors import SeededRng, load_tensor, save_tensor


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class ToyModel:
    patch: int
    channels: int
    bands: int
    taper: float
    kernel_size: int
    enc_w: np.ndarray      # [3*patch^2, channels]
    enc_b: np.ndarray      # [channels]
    teacher_w: np.ndarray  # frozen copy of the initial enc_w
    teacher_b: np.ndarray
    mod: ModulatorParams
    dec_w: np.ndarray      # [channels, 3*patch^2]
    dec_b: np.ndarray      # [3*patch^2]
    mask_set: object

    @property
    def grid(self) -> tuple[int, int]:
        return self.mask_set.grid


@dataclass(frozen=True)
class TrainConfig:
    stage: int
    steps: int
    lr: float
    batch_size: int
    lambda_sem: float = 1.0
    k_base: int = 1
    seed: int = 0
    noise: NoisePolicy = NoisePolicy("off")

    def __post_init__(self):
        if self.stage not in (1, 2, 3):
            raise ValueError(f"stage must be 1, 2 or 3, got {self.stage}")
        if self.stage != 3 and self.noise.mode != "off":
            raise ValueError(f"noise must stay off before stage 3 (stage {self.stage})")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


def init_toy_model(rng: SeededRng, patch: int = 4, channels: int = 8,
                   bands: int = 4, taper: float = 0.04, grid_h: int = 8,
                   grid_w: int = 8, kernel_size: int = 3) -> ToyModel:
    """Fresh model; the teacher starts as an exact copy of the encoder."""
    p = 3 * patch * patch
    enc_w = rng.gaussian((p, channels), 0.0, 1.0 / np.sqrt(p))
    enc_b = np.zeros(channels, dtype=np.float64)
    mod = init_modulator_params(rng, bands, channels, kernel_size)
    dec_w = rng.gaussian((channels, p), 0.0, 1.0 / np.sqrt(channels))
    dec_b = np.zeros(p, dtype=np.float64)
    mask_set = ring_masks(grid_h, grid_w, bands, taper, normalized=True)
    return ToyModel(patch=patch, channels=channels, bands=bands, taper=taper,
                    kernel_size=kernel_size, enc_w=enc_w, enc_b=enc_b,
                    teacher_w=enc_w.copy(), teacher_b=enc_b.copy(), mod=mod,
                    dec_w=dec_w, dec_b=dec_b, mask_set=mask_set)


def patchify(x: np.ndarray, patch: int) -> np.ndarray:
    """[B, C, H, W] -> [B, H/p, W/p, C*p*p]; flatten order (c, dy, dx)."""
    b, c, h, w = x.shape
    if h % patch or w % patch:
        raise ValueError(f"image {h}x{w} not divisible by patch {patch}")
    gh, gw = h // patch, w // patch
    return (x.reshape(b, c, gh, patch, gw, patch)
             .transpose(0, 2, 4, 1, 3, 5)
             .reshape(b, gh, gw, c * patch * patch))


def unpatchify(pt: np.ndarray, patch: int, channels: int = 3) -> np.ndarray:
    """Inverse of patchify."""
    b, gh, gw, _ = pt.shape
    return (pt.reshape(b, gh, gw, channels, patch, patch)
              .transpose(0, 3, 1, 4, 2, 5)
              .reshape(b, channels, gh * patch, gw * patch))


def forward(model: ToyModel, images: np.ndarray,
            policy: NoisePolicy = NoisePolicy("off"),
            rng: SeededRng | None = None, draw: NoiseDraw | None = None,
            lambda_sem: float = 1.0, k_base: int = 1):
    """Run the full pipeline; returns (recon, LossReport, cache).

    Pass ``draw`` to pin a noise realization (gradient checks must hold the
    sample fixed while parameters move); otherwise one is sampled from
    ``rng`` according to ``policy``.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4:
        raise ValueError(f"expected [B, 3, H, W], got shape {images.shape}")
    gh, gw = model.grid
    if images.shape[2] != gh * model.patch or images.shape[3] != gw * model.patch:
        raise ValueError(
            f"image {images.shape[2]}x{images.shape[3]} does not map to grid {gh}x{gw} "
            f"with patch {model.patch}"
        )
    pt = patchify(images, model.patch)
    z = (pt @ model.enc_w + model.enc_b).transpose(0, 3, 1, 2)
    stack_u = iterative_split(z, model.mask_set)
    zt = (pt @ model.teacher_w + model.teacher_b).transpose(0, 3, 1, 2)
    stack_t = iterative_split(zt, model.mask_set)
    l_sem = semantic_loss(stack_u, stack_t, k_base)
    if draw is None:
        if policy.mode != "off" and rng is None:
            raise ValueError("active noise policy needs an rng")
        draw = sample_noise(policy, rng if rng is not None else SeededRng(0),
                            images.shape[0], model.bands, z.shape[1:])
    noisy = apply_noise(stack_u, draw)
    q, tcache = _transform_with_cache(noisy, model.mod)
    qp = q.transpose(0, 2, 3, 1)
    out_pt = qp @ model.dec_w + model.dec_b
    recon = unpatchify(out_pt, model.patch)
    report = make_report(pixel_loss(recon, images), l_sem, lambda_sem, k_base)
    cache = {"images": images, "pt": pt, "stack_u": stack_u, "stack_t": stack_t,
             "draw": draw, "tcache": tcache, "qp": qp, "recon": recon,
             "lambda_sem": lambda_sem, "k_base": k_base}
    return recon, report, cache


def backward(model: ToyModel, cache: dict) -> dict:
    """Gradients of the total loss for every trainable tensor.

    The split segment backpropagates through its adjoint: the same masks
    applied to the gradient, telescoped in reverse. Teacher tensors are
    constants and get no entry.
    """
    images, recon = cache["images"], cache["recon"]
    drecon = (2.0 / images.size) * (recon - images)
    dpt_out = patchify(drecon, model.patch)
    qp = cache["qp"]
    ddec_w = np.einsum("bghc,bghp->cp", qp, dpt_out, optimize=True)
    ddec_b = dpt_out.sum(axis=(0, 1, 2))
    dq = (dpt_out @ model.dec_w.T).transpose(0, 3, 1, 2)
    dbands_noisy, mod_grads = transform_backward(dq, cache["tcache"], model.mod)
    keep = cache["draw"].keep.astype(np.float64)
    dbands = [g * keep[:, k][:, None, None, None]
              for k, g in enumerate(dbands_noisy)]
    stack_u, stack_t = cache["stack_u"], cache["stack_t"]
    k_base = cache["k_base"]
    sem_scale = cache["lambda_sem"] * 2.0 / (k_base * stack_u.bands[0].size)
    for k in range(k_base):
        dbands[k] = dbands[k] + sem_scale * (stack_u.bands[k] - stack_t.bands[k])
    dz = split_adjoint(dbands, None, model.mask_set)
    dzp = dz.transpose(0, 2, 3, 1)
    denc_w = np.einsum("bghp,bghc->pc", cache["pt"], dzp, optimize=True)
    denc_b = dzp.sum(axis=(0, 1, 2))
    return {"enc_w": denc_w, "enc_b": denc_b, "dec_w": ddec_w, "dec_b": ddec_b,
            "conv1_w": mod_grads["conv1_w"], "conv1_b": mod_grads["conv1_b"],
            "conv2_w": mod_grads["conv2_w"], "conv2_b": mod_grads["conv2_b"]}


def trainable_params(model: ToyModel) -> dict:
    """Live references to every trainable tensor (teacher excluded)."""
    return {"enc_w": model.enc_w, "enc_b": model.enc_b,
            "dec_w": model.dec_w, "dec_b": model.dec_b,
            "conv1_w": model.mod.conv1_w, "conv1_b": model.mod.conv1_b,
            "conv2_w": model.mod.conv2_w, "conv2_b": model.mod.conv2_b}


def apply_update(model: ToyModel, grads: dict, lr: float,
                 freeze_encoder: bool = False):
    """One plain gradient-descent step, in place."""
    for name, tensor in trainable_params(model).items():
        if freeze_encoder and name.startswith("enc_"):
            continue
        tensor -= lr * grads[name]


def train(model: ToyModel, images: np.ndarray, schedule: list[TrainConfig],
          log_path=None) -> list[tuple]:
    """Run the stage schedule; returns log rows and optionally writes CSV.

    Rows are (step, stage, l_pix, l_sem, total, corrupted_bands) with a
    global step counter across stages. Stage order must be ascending.
    """
    images = np.asarray(images, dtype=np.float64)
    stages = [c.stage for c in schedule]
    if stages != sorted(stages) or len(set(stages)) != len(stages):
        raise ValueError(f"stages must be strictly ascending, got {stages}")
    n = images.shape[0]
    rows = []
    gstep = 0
    for cfg in schedule:
        if cfg.batch_size > n:
            raise ValueError(f"batch_size {cfg.batch_size} > dataset size {n}")
        stage_rng = SeededRng(cfg.seed)
        data_rng = stage_rng.substream(0)
        noise_root = stage_rng.substream(1)
        perm = np.empty(0, dtype=int)
        cursor = n
        for step in range(cfg.steps):
            if cursor + cfg.batch_size > n:
                perm = data_rng.permutation(n)
                cursor = 0
            batch = images[perm[cursor:cursor + cfg.batch_size]]
            cursor += cfg.batch_size
            draw = sample_noise(cfg.noise, noise_root.substream(step),
                                batch.shape[0], model.bands,
                                (model.channels,) + model.grid)
            try:
                _, report, cache = forward(model, batch, draw=draw,
                                           lambda_sem=cfg.lambda_sem,
                                           k_base=cfg.k_base)
            except ValueError as err:
                raise DivergenceError(f"step {gstep}: {err}") from None
            grads = backward(model, cache)
            apply_update(model, grads, cfg.lr, freeze_encoder=(cfg.stage == 1))
            corrupted = int(draw.keep.size - draw.keep.sum())
            rows.append((gstep, cfg.stage, report.l_pix, report.l_sem,
                         report.total, corrupted))
            gstep += 1
    if log_path is not None:
        write_log_csv(log_path, rows)
    return rows


def write_log_csv(path, rows):
    with open(path, "w") as fh:
        fh.write("step,stage,l_pix,l_sem,total,corrupted_bands\n")
        for step, stage, l_pix, l_sem, total, corrupted in rows:
            fh.write(f"{step},{stage},{l_pix:.12g},{l_sem:.12g},"
                     f"{total:.12g},{corrupted}\n")


def evaluate(model: ToyModel, images: np.ndarray, lambda_sem: float = 1.0,
             k_base: int = 1) -> LossReport:
    """Noise-free losses over a whole dataset."""
    _, report, _ = forward(model, images, lambda_sem=lambda_sem, k_base=k_base)
    return report


def gradient_check(model: ToyModel, images: np.ndarray, draw: NoiseDraw,
                   lambda_sem: float = 1.0, k_base: int = 1,
                   step: float = 1e-5) -> dict:
    """Per-tensor relative error between reverse mode and central differences.

    The noise draw is frozen across every probe so the loss stays a smooth
    function of the parameters. Error is ||ga - gfd|| / max(||ga||, ||gfd||)
    over each tensor.
    """
    def total_loss() -> float:
        _, report, _ = forward(model, images, draw=draw,
                               lambda_sem=lambda_sem, k_base=k_base)
        return report.total

    _, _, cache = forward(model, images, draw=draw,
                          lambda_sem=lambda_sem, k_base=k_base)
    analytic = backward(model, cache)
    errors = {}
    for name, tensor in trainable_params(model).items():
        fd = np.zeros_like(tensor)
        flat = tensor.reshape(-1)
        fd_flat = fd.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            hi = total_loss()
            flat[i] = saved - step
            lo = total_loss()
            flat[i] = saved
            fd_flat[i] = (hi - lo) / (2.0 * step)
        ga = analytic[name]
        denom = max(float(np.linalg.norm(ga)), float(np.linalg.norm(fd)), 1e-12)
        errors[name] = float(np.linalg.norm(ga - fd)) / denom
    return errors


_CKPT_TENSORS = ("enc_w", "enc_b", "teacher_w", "teacher_b", "dec_w", "dec_b",
                 "conv1_w", "conv1_b", "conv2_w", "conv2_b")


def _model_tensors(model: ToyModel) -> dict:
    d = dict(trainable_params(model))
    d["teacher_w"] = model.teacher_w
    d["teacher_b"] = model.teacher_b
    return d


def save_checkpoint(model: ToyModel, dirpath):
    """Directory of PZT tensors plus a manifest of hyperparameters/shapes."""
    os.makedirs(dirpath, exist_ok=True)
    tensors = _model_tensors(model)
    gh, gw = model.grid
    lines = [f"patch={model.patch}", f"channels={model.channels}",
             f"bands={model.bands}", f"taper={model.taper:.12g}",
             f"kernel_size={model.kernel_size}", f"grid_h={gh}", f"grid_w={gw}"]
    for name in _CKPT_TENSORS:
        t = tensors[name]
        save_tensor(t, os.path.join(dirpath, f"{name}.pzt"))
        dims = "x".join(str(d) for d in t.shape)
        lines.append(f"tensor {name} {t.dtype.name} {dims}")
    with open(os.path.join(dirpath, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(dirpath) -> ToyModel:
    meta = {}
    with open(os.path.join(dirpath, "manifest.txt")) as fh:
        for line in fh:
            line = line.strip()
            if "=" in line and not line.startswith("tensor "):
                key, val = line.split("=", 1)
                meta[key] = val
    t = {name: load_tensor(os.path.join(dirpath, f"{name}.pzt"))
         for name in _CKPT_TENSORS}
    mask_set = ring_masks(int(meta["grid_h"]), int(meta["grid_w"]),
                          int(meta["bands"]), float(meta["taper"]),
                          normalized=True)
    mod = ModulatorParams(conv1_w=t["conv1_w"], conv1_b=t["conv1_b"],
                          conv2_w=t["conv2_w"], conv2_b=t["conv2_b"])
    return ToyModel(patch=int(meta["patch"]), channels=int(meta["channels"]),
                    bands=int(meta["bands"]), taper=float(meta["taper"]),
                    kernel_size=int(meta["kernel_size"]), enc_w=t["enc_w"],
                    enc_b=t["enc_b"], teacher_w=t["teacher_w"],
                    teacher_b=t["teacher_b"], mod=mod, dec_w=t["dec_w"],
                    dec_b=t["dec_b"], mask_set=mask_set)


# ---------------------------------------------------------------------------
# run configuration files: flat key=value, comma lists spread across stages

_STAGE_KEYS = ("stage", "steps", "lr", "batch_size", "lambda_sem", "k_base",
               "noise_mode")
_GLOBAL_KEYS = ("seed", "bands", "taper", "n_images", "image_size", "patch",
                "channels", "kernel_size")

_DEFAULTS = {"stage": "1,2,3", "steps": "300,250,120", "lr": "0.3,0.1,0.05",
             "batch_size": "8", "lambda_sem": "1.0", "k_base": "1",
             "noise_mode": "", "seed": "0", "bands": "4", "taper": "0.04",
             "n_images": "64", "image_size": "32", "patch": "4",
             "channels": "8", "kernel_size": "3"}


@dataclass(frozen=True)
class RunSpec:
    """Parsed run configuration: model/dataset hyperparameters + schedule."""

    seed: int
    bands: int
    taper: float
    n_images: int
    image_size: int
    patch: int
    channels: int
    kernel_size: int
    schedule: tuple


def parse_run_config(path) -> RunSpec:
    """Read a flat key=value config.

    Stage-level keys (stage, steps, lr, batch_size, lambda_sem, k_base,
    noise_mode) accept comma-separated per-stage values; single values are
    broadcast over the schedule. noise_mode defaults to off except in
    stage 3 where it defaults to cutoff.
    """
    raw = dict(_DEFAULTS)
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in raw:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            raw[key] = val

    stages = [int(s) for s in raw["stage"].split(",") if s.strip()]
    n_stages = len(stages)

    def spread(key, conv):
        parts = [p.strip() for p in raw[key].split(",")]
        if len(parts) == 1:
            parts = parts * n_stages
        if len(parts) != n_stages:
            raise ValueError(
                f"{key} lists {len(parts)} values for {n_stages} stages"
            )
        return [conv(p) for p in parts]

    steps = spread("steps", int)
    lr = spread("lr", float)
    batch = spread("batch_size", int)
    lam = spread("lambda_sem", float)
    kb = spread("k_base", int)
    if raw["noise_mode"]:
        modes = spread("noise_mode", str)
    else:
        modes = ["cutoff" if s == 3 else "off" for s in stages]
    seed = int(raw["seed"])
    schedule = tuple(
        TrainConfig(stage=stages[i], steps=steps[i], lr=lr[i],
                    batch_size=batch[i], lambda_sem=lam[i], k_base=kb[i],
                    seed=seed, noise=NoisePolicy(modes[i]))
        for i in range(n_stages)
    )
    return RunSpec(seed=seed, bands=int(raw["bands"]), taper=float(raw["taper"]),
                   n_images=int(raw["n_images"]), image_size=int(raw["image_size"]),
                   patch=int(raw["patch"]), channels=int(raw["channels"]),
                   kernel_size=int(raw["kernel_size"]), schedule=schedule)


def build_run(spec: RunSpec):
    """Materialize (model, dataset) for a parsed run configuration."""
    from .analysis import sinusoid_images

    if spec.image_size % spec.patch:
        raise ValueError(
            f"image_size {spec.image_size} not divisible by patch {spec.patch}"
        )
    grid = spec.image_size // spec.patch
    model = init_toy_model(SeededRng(spec.seed), patch=spec.patch,
                           channels=spec.channels, bands=spec.bands,
                           taper=spec.taper, grid_h=grid, grid_w=grid,
                           kernel_size=spec.kernel_size)
    data = sinusoid_images(SeededRng(spec.seed).substream(777),
                           spec.n_images, spec.image_size, spec.image_size)
    return model, data
