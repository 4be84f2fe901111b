"""Encoder wrappers: pretrained vision/text models plus a hermetic toy.

Every encoder exposes the same small surface:

    input_size          square pixel size the encoder consumes
    normalize(img)      encoder-specific channel normalization
    encode(img)         -> (grid [1, C, gh, gw], embedding [D]) as float32
    encode_texts(lines) -> [N, D] float32, or ExporterError without a text tower
    describe()          preprocessing/pooling text for the manifest

Images arrive already center-cropped, resized and (optionally) spectrally
filtered in linear [0, 1] space; normalization happens inside the encoder.
"""

import hashlib
import math

import numpy as np

from .filtering import filter_pixels


class ExporterError(RuntimeError):
    """Model unavailable or unusable."""


class LayoutError(ExporterError):
    """Token sequence does not map to a square spatial grid."""


def tokens_to_grid(tokens: np.ndarray, prefix: int,
                   expected_side: int | None = None) -> np.ndarray:
    """[1, T, C] hidden states -> [1, C, side, side], dropping prefix tokens."""
    if tokens.ndim != 3 or tokens.shape[0] != 1:
        raise LayoutError(f"expected [1, T, C] tokens, got {tokens.shape}")
    t = tokens.shape[1] - prefix
    if t <= 0:
        raise LayoutError(
            f"{tokens.shape[1]} tokens cannot hold {prefix} prefix tokens")
    side = math.isqrt(t)
    if side * side != t:
        raise LayoutError(f"{t} patch tokens do not form a square grid")
    if expected_side is not None and side != expected_side:
        raise LayoutError(
            f"grid side {side} does not match expected {expected_side}")
    patches = tokens[:, prefix:, :]
    return (patches.reshape(1, side, side, -1)
                   .transpose(0, 3, 1, 2)
                   .astype(np.float32))


def _content_rng(img: np.ndarray) -> np.random.Generator:
    digest = hashlib.sha256(np.ascontiguousarray(img, dtype=np.float32)
                            .tobytes()).digest()
    return np.random.Generator(np.random.PCG64(
        int.from_bytes(digest[:8], "little")))


class ToyEncoder:
    """Deterministic seeded encoder, no ML stack involved.

    Architecture mirrors a patch transformer's interface: 32x32 input,
    4x4 patches projected to 16 channels (the grid), and a global
    embedding taken from a low-pass view of the image so retrieval under
    spectral filtering behaves like a semantics-first model: stable when
    high frequencies are removed, collapsing when low ones are. A tiny
    content-keyed noise floor keeps embeddings well-defined on blank
    inputs.
    """

    input_size = 32
    patch = 4
    channels = 16
    dim = 64
    _VIEW_CUTOFF = 0.3

    def __init__(self, seed: int):
        self.seed = seed
        rng = np.random.Generator(np.random.PCG64(seed))
        flat = 3 * self.input_size * self.input_size
        pdim = 3 * self.patch * self.patch
        self._proj = rng.normal(0.0, 1.0 / np.sqrt(flat), (self.dim, flat))
        self._patch_proj = rng.normal(0.0, 1.0 / np.sqrt(pdim),
                                      (self.channels, pdim))

    def normalize(self, img: np.ndarray) -> np.ndarray:
        return img

    def encode(self, img: np.ndarray):
        if img.shape != (3, self.input_size, self.input_size):
            raise LayoutError(f"toy encoder takes [3, 32, 32], got {img.shape}")
        floor = 1e-6 * _content_rng(img).normal(0.0, 1.0, self.dim)
        seen = filter_pixels(img.astype(np.float64), "lp", self._VIEW_CUTOFF,
                             taper=0.04, clamp=False)
        emb = self._proj @ seen.ravel() + floor
        g = self.input_size // self.patch
        patches = (seen.reshape(3, g, self.patch, g, self.patch)
                       .transpose(1, 3, 0, 2, 4)
                       .reshape(g * g, -1))
        grid = (patches @ self._patch_proj.T).reshape(1, g, g, self.channels)
        return (grid.transpose(0, 3, 1, 2).astype(np.float32),
                emb.astype(np.float32))

    def encode_texts(self, lines):
        out = np.empty((len(lines), self.dim), dtype=np.float32)
        for i, line in enumerate(lines):
            digest = hashlib.sha256(line.encode("utf-8")).digest()
            rng = np.random.Generator(np.random.PCG64(
                int.from_bytes(digest[:8], "little")))
            v = rng.normal(0.0, 1.0, self.dim)
            out[i] = (v / np.linalg.norm(v)).astype(np.float32)
        return out

    def describe(self) -> str:
        return (f"toy seeded encoder (seed {self.seed}): low-pass 0.3 view, "
                f"dense projection embedding dim {self.dim}, 4x4 patch grid "
                f"{self.channels} channels")


def _projected(out):
    # get_image_features/get_text_features return a plain [B, D] tensor in
    # older transformers and a ModelOutput whose pooler_output holds the
    # projected features in newer ones
    pooled = getattr(out, "pooler_output", None)
    return out if pooled is None else pooled


class HFVisionEncoder:
    """transformers-backed vision encoder, optionally with a CLIP text tower."""

    def __init__(self, model, model_id: str, input_size: int, patch: int,
                 mean, std, prefix_tokens: int = 1, clip=None, tokenizer=None):
        import torch

        self._torch = torch
        self.model = model.eval()
        self.model_id = model_id
        self.input_size = input_size
        self.patch = patch
        self.mean = np.asarray(mean, dtype=np.float64).reshape(3, 1, 1)
        self.std = np.asarray(std, dtype=np.float64).reshape(3, 1, 1)
        self.prefix_tokens = prefix_tokens
        self.clip = clip
        self.tokenizer = tokenizer

    def normalize(self, img: np.ndarray) -> np.ndarray:
        return (img.astype(np.float64) - self.mean) / self.std

    def encode(self, img: np.ndarray):
        torch = self._torch
        x = torch.from_numpy(np.ascontiguousarray(
            self.normalize(img)[None])).float()
        with torch.no_grad():
            if self.clip is not None:
                hidden = self.clip.vision_model(pixel_values=x).last_hidden_state
                emb = _projected(self.clip.get_image_features(pixel_values=x))[0]
            else:
                hidden = self.model(pixel_values=x).last_hidden_state
                emb = hidden[0, self.prefix_tokens:].mean(dim=0)
        grid = tokens_to_grid(hidden.numpy(), self.prefix_tokens,
                              self.input_size // self.patch)
        return grid, emb.numpy().astype(np.float32)

    def encode_texts(self, lines):
        if self.clip is None or self.tokenizer is None:
            raise ExporterError(f"{self.model_id} has no text tower")
        torch = self._torch
        toks = self.tokenizer(list(lines), padding=True, return_tensors="pt")
        with torch.no_grad():
            feats = _projected(self.clip.get_text_features(**toks))
        return feats.numpy().astype(np.float32)

    def describe(self) -> str:
        pooling = ("CLIP projection features"
                   if self.clip is not None else "patch-token mean pooling")
        return (f"{self.model_id}: input {self.input_size}, patch "
                f"{self.patch}, {self.prefix_tokens} prefix token(s) dropped, "
                f"{pooling}")


def _processor_stats(model_id: str):
    from transformers import AutoImageProcessor

    proc = AutoImageProcessor.from_pretrained(model_id)
    size = proc.size
    if isinstance(size, dict):
        size = (size.get("shortest_edge") or size.get("height")
                or next(iter(size.values())))
    return int(size), list(proc.image_mean), list(proc.image_std)


def load_encoder(model_id: str):
    """Resolve a model id: "toy:<seed>" or any transformers checkpoint."""
    if model_id.startswith("toy:"):
        try:
            seed = int(model_id.split(":", 1)[1])
        except ValueError:
            raise ExporterError(f"bad toy model id {model_id!r}") from None
        return ToyEncoder(seed)
    try:
        from transformers import AutoConfig

        config = AutoConfig.from_pretrained(model_id)
        size, mean, std = _processor_stats(model_id)
        if config.model_type == "clip":
            from transformers import AutoTokenizer, CLIPModel

            clip = CLIPModel.from_pretrained(model_id)
            tok = AutoTokenizer.from_pretrained(model_id)
            vision = clip.config.vision_config
            return HFVisionEncoder(clip.vision_model, model_id, size,
                                   vision.patch_size, mean, std,
                                   prefix_tokens=1, clip=clip, tokenizer=tok)
        from transformers import AutoModel

        model = AutoModel.from_pretrained(model_id)
        prefix = 1 + getattr(config, "num_register_tokens", 0)
        return HFVisionEncoder(model, model_id, size, config.patch_size,
                               mean, std, prefix_tokens=prefix)
    except ExporterError:
        raise
    except Exception as err:
        raise ExporterError(f"cannot load model {model_id!r}: {err}") from err
