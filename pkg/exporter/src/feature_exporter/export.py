"""Batch export: images (+ optional captions) -> PZT grids, embeddings, manifest.

For every (image, cutoff) pair one latent grid file is written, plus one
[N, D] embedding matrix per cutoff and a single text embedding matrix.
Naming matches what the band toolkit's `retrieval --image-dir` expects:
``images_{mode}_{cutoff:.3f}.pzt``. A manifest.json records the model id,
inputs, preprocessing, and the sha256 of every file written.
"""

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .encoders import ExporterError, load_encoder
from .filtering import filter_pixels, load_image
from .pzt import save_f32

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".ppm", ".bmp", ".gif")
FILTER_TAPER = 0.04


@dataclass
class ExportManifest:
    model: str
    mode: str
    cutoffs: list
    images: list
    texts: str | None
    preprocessing: str
    embedding: str
    files: dict = field(default_factory=dict)

    def record(self, out_dir: str, relpath: str, arr: np.ndarray):
        digest = hashlib.sha256()
        with open(os.path.join(out_dir, relpath), "rb") as fh:
            digest.update(fh.read())
        self.files[relpath] = {"sha256": digest.hexdigest(),
                               "dtype": str(arr.dtype),
                               "shape": list(arr.shape)}

    def write(self, out_dir: str):
        path = os.path.join(out_dir, "manifest.json")
        with open(path, "w") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)
            fh.write("\n")


def list_images(images_dir: str) -> list:
    names = sorted(n for n in os.listdir(images_dir)
                   if n.lower().endswith(IMAGE_EXTENSIONS))
    if not names:
        raise ExporterError(f"no images in {images_dir}")
    return names


def embedding_filename(mode: str, rho: float) -> str:
    return f"images_{mode}_{rho:.3f}.pzt"


def export_features(model_id: str, images_dir: str, texts_path: str | None,
                    cutoffs, mode: str, out_dir: str) -> ExportManifest:
    if mode not in ("lp", "hp"):
        raise ValueError(f"mode must be 'lp' or 'hp', got {mode!r}")
    cutoffs = [float(c) for c in cutoffs]
    if not cutoffs:
        raise ValueError("need at least one cutoff")
    encoder = load_encoder(model_id)
    names = list_images(images_dir)

    os.makedirs(os.path.join(out_dir, "grids"), exist_ok=True)
    manifest = ExportManifest(
        model=model_id, mode=mode, cutoffs=cutoffs, images=names,
        texts=os.path.basename(texts_path) if texts_path else None,
        preprocessing=(f"center-crop to square, bilinear resize to "
                       f"{encoder.input_size}, {mode} filter in linear [0,1] "
                       f"pixel space (taper {FILTER_TAPER}) before encoder "
                       f"normalization"),
        embedding=encoder.describe())

    pixels = [load_image(os.path.join(images_dir, n), encoder.input_size)
              for n in names]
    for rho in cutoffs:
        rows = []
        for name, img in zip(names, pixels):
            filtered = filter_pixels(img, mode, rho, FILTER_TAPER)
            grid, emb = encoder.encode(filtered)
            rel = os.path.join(
                "grids", f"{os.path.splitext(name)[0]}_{mode}_{rho:.3f}.pzt")
            save_f32(grid, os.path.join(out_dir, rel))
            manifest.record(out_dir, rel, grid.astype(np.float32))
            rows.append(emb)
        stacked = np.stack(rows).astype(np.float32)
        rel = embedding_filename(mode, rho)
        save_f32(stacked, os.path.join(out_dir, rel))
        manifest.record(out_dir, rel, stacked)

    if texts_path is not None:
        with open(texts_path, encoding="utf-8") as fh:
            lines = [line.rstrip("\n") for line in fh if line.strip()]
        if not lines:
            raise ExporterError(f"no captions in {texts_path}")
        text_emb = encoder.encode_texts(lines).astype(np.float32)
        save_f32(text_emb, os.path.join(out_dir, "text.pzt"))
        manifest.record(out_dir, "text.pzt", text_emb)

    manifest.write(out_dir)
    return manifest
