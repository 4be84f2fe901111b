"""Command line front end.

One binary, long-form flags only. Exit codes: 0 success, 1 usage error
(unknown flags, invalid values), 2 data or file format error, 3 numerical
divergence. All randomness is governed by --seed, and every file or CSV the
commands produce is byte-identical across runs given identical flags.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .analysis import (ImageFormatError, SyntheticRetrievalCorpus,
                       energy_profile, filter_image, read_ppm,
                       retrieval_sweep, write_ppm)
from .masks import ring_masks
from .modulator import sample_noise
from .spectral import SymmetryError
from .splitflow import BandStack, iterative_split, recompose
from .tensors import PZTError, SeededRng, load_tensor, save_tensor
from .toytrain import (DivergenceError, build_run, gradient_check,
                       parse_run_config, save_checkpoint, train)


class _Parser(argparse.ArgumentParser):
    """argparse, except usage problems exit 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _fmt(x: float) -> str:
    return f"{float(x):.12g}"


def _load_grid(path) -> tuple[np.ndarray, tuple]:
    """Load a PZT tensor and view it as [B, C, H, W]; remember the shape."""
    t = load_tensor(path)
    if t.ndim > 4:
        raise ValueError(f"{path}: rank {t.ndim} > 4 not supported here")
    if t.ndim < 2:
        raise ValueError(f"{path}: need at least 2 dimensions")
    original = t.shape
    while t.ndim < 4:
        t = t[None]
    return t, original


def _cutoff_list(text: str) -> list[float]:
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad cutoff list {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty cutoff list")
    return vals


def _cmd_decompose(args) -> int:
    z, original = _load_grid(args.input)
    mask_set = ring_masks(z.shape[2], z.shape[3], args.bands, args.taper,
                          normalized=args.normalized)
    stack = iterative_split(z, mask_set)
    os.makedirs(args.out, exist_ok=True)
    for k, band in enumerate(stack.bands):
        save_tensor(band.reshape(original), os.path.join(args.out, f"band_{k:02d}.pzt"))
    save_tensor(stack.final_residual.reshape(original),
                os.path.join(args.out, "residual.pzt"))
    print(f"wrote {stack.k} bands + residual to {args.out}")
    return 0


def _cmd_recompose(args) -> int:
    names = sorted(n for n in os.listdir(args.indir)
                   if n.startswith("band_") and n.endswith(".pzt"))
    if not names:
        raise ValueError(f"no band_*.pzt files in {args.indir}")
    bands = [load_tensor(os.path.join(args.indir, n)) for n in names]
    shape = bands[0].shape
    grids = [b.reshape((1,) * (4 - b.ndim) + b.shape) if b.ndim < 4 else b
             for b in bands]
    if args.drop_residual:
        residual = np.zeros_like(grids[0])
    else:
        residual = load_tensor(os.path.join(args.indir, "residual.pzt"))
        residual = residual.reshape(grids[0].shape)
    stack = BandStack(bands=grids, final_residual=residual, mask_set=None)
    out = recompose(stack, drop_residual=args.drop_residual)
    save_tensor(out.reshape(shape), args.output)
    print(f"recomposed {len(bands)} bands -> {args.output}")
    return 0


def _cmd_energy(args) -> int:
    t, _ = _load_grid(args.input)
    mask_set = ring_masks(t.shape[2], t.shape[3], args.bands, args.taper,
                          normalized=True)
    profile = energy_profile(t, mask_set)
    lines = ["band_index,edge_lo,edge_hi,energy_fraction"]
    for k, frac in enumerate(profile.fractions):
        lines.append(f"{k},{_fmt(profile.edges[k])},{_fmt(profile.edges[k + 1])},"
                     f"{_fmt(frac)}")
    body = "\n".join(lines) + "\n"
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(body)
    else:
        sys.stdout.write(body)
    return 0


def _cmd_filter(args) -> int:
    img = read_ppm(args.input)
    out = filter_image(img, args.mode, args.cutoff, args.taper)
    write_ppm(args.output, out)
    print(f"{args.mode} cutoff {_fmt(args.cutoff)} -> {args.output}")
    return 0


def _cmd_masks(args) -> int:
    mask_set = ring_masks(args.height, args.width, args.bands, args.taper,
                          normalized=args.normalized)
    save_tensor(mask_set.masks, args.out)
    print(f"wrote {args.bands} masks ({args.height}x{args.width}) to {args.out}")
    return 0


def _embedding_filename(mode: str, rho: float) -> str:
    return f"images_{mode}_{rho:.3f}.pzt"


def _cmd_retrieval(args) -> int:
    if args.synthetic:
        if args.text is not None or args.image_dir is not None:
            raise ValueError("--synthetic conflicts with --text/--image-dir")
        if args.n is None:
            raise ValueError("--synthetic requires --n")
    else:
        if args.n is not None:
            raise ValueError("--n requires --synthetic")
        if args.text is None or args.image_dir is None:
            raise ValueError("pass --text and --image-dir, or --synthetic --n")
    if args.image_dir is not None:
        text_emb = load_tensor(args.text)

        def source(rho: float) -> np.ndarray:
            path = os.path.join(args.image_dir, _embedding_filename(args.mode, rho))
            if not os.path.exists(path):
                raise FileNotFoundError(
                    f"no embedding file for cutoff {rho:.3f}: {path}")
            return load_tensor(path)
    else:
        corpus = SyntheticRetrievalCorpus(args.n, args.seed)
        text_emb = corpus.text_embeddings

        def source(rho: float) -> np.ndarray:
            return corpus.image_embeddings(rho, args.mode)

    curve = retrieval_sweep(text_emb, source, args.cutoffs, args.mode, args.k)
    lines = ["cutoff,mode,recall_at_k"]
    for rho, recall in zip(curve.cutoffs, curve.recall_at_k):
        lines.append(f"{_fmt(rho)},{curve.mode},{_fmt(recall)}")
    body = "\n".join(lines) + "\n"
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(body)
    else:
        sys.stdout.write(body)
    n_pairs = max(len(curve.cutoffs) - 1, 1)
    print(f"{curve.mode} monotonicity violations: "
          f"{round(curve.violation_fraction * n_pairs)}/{n_pairs} "
          f"(max {_fmt(curve.max_violation)})")
    return 0


def _cmd_train_toy(args) -> int:
    spec = parse_run_config(args.config)
    model, data = build_run(spec)
    os.makedirs(args.out_dir, exist_ok=True)
    rows = train(model, data, list(spec.schedule),
                 log_path=os.path.join(args.out_dir, "log.csv"))
    save_checkpoint(model, os.path.join(args.out_dir, "checkpoint"))
    last = rows[-1] if rows else (0, 0, float("nan"), float("nan"), float("nan"), 0)
    print(f"trained {len(rows)} steps; final l_pix {_fmt(last[2])} "
          f"l_sem {_fmt(last[3])} total {_fmt(last[4])}")
    return 0


def _cmd_gradcheck(args) -> int:
    spec = parse_run_config(args.config)
    failed = False
    for cfg in spec.schedule:
        model, data = build_run(spec)
        probe_rng = SeededRng(spec.seed).substream(31)
        # nudge every tensor so no path sits at a degenerate zero
        model.enc_w += probe_rng.gaussian(model.enc_w.shape, 0.0, 0.02)
        model.mod.conv2_w += probe_rng.gaussian(model.mod.conv2_w.shape, 0.0, 0.05)
        model.mod.conv2_b += probe_rng.gaussian(model.mod.conv2_b.shape, 0.0, 0.05)
        batch = data[:2]
        draw = sample_noise(cfg.noise, probe_rng.substream(1), batch.shape[0],
                            model.bands, (model.channels,) + model.grid)
        errors = gradient_check(model, batch, draw, cfg.lambda_sem, cfg.k_base)
        for name, err in errors.items():
            status = "ok" if err < args.tolerance else "FAIL"
            print(f"stage {cfg.stage} {name}: rel_err {err:.3e} {status}")
            if err >= args.tolerance:
                failed = True
    if failed:
        raise DivergenceError(f"gradient check exceeded tolerance {args.tolerance}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bandkit", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="split a latent grid into band files")
    p.add_argument("--input", required=True)
    p.add_argument("--bands", type=int, required=True)
    p.add_argument("--taper", type=float, default=0.04)
    p.add_argument("--normalized", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_decompose)

    p = sub.add_parser("recompose", help="rebuild a tensor from band files")
    p.add_argument("--in", dest="indir", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--drop-residual", action="store_true")
    p.set_defaults(func=_cmd_recompose)

    p = sub.add_parser("energy", help="per-band spectral energy fractions")
    p.add_argument("--input", required=True)
    p.add_argument("--bands", type=int, required=True)
    p.add_argument("--taper", type=float, default=0.04)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=_cmd_energy)

    p = sub.add_parser("filter", help="low/high-pass a PPM image")
    p.add_argument("--input", required=True)
    p.add_argument("--mode", choices=("lp", "hp"), required=True)
    p.add_argument("--cutoff", type=float, required=True)
    p.add_argument("--taper", type=float, default=0.04)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("retrieval", help="recall@k along a cutoff sweep")
    p.add_argument("--text", default=None)
    p.add_argument("--synthetic", action="store_true")
    p.add_argument("--image-dir", default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--mode", choices=("lp", "hp"), required=True)
    p.add_argument("--cutoffs", type=_cutoff_list, required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--csv", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_retrieval)

    p = sub.add_parser("train-toy", help="train the desk-scale autoencoder")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_train_toy)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--config", required=True)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("masks", help="export ring masks as a PZT stack")
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--bands", type=int, required=True)
    p.add_argument("--taper", type=float, default=0.04)
    p.add_argument("--normalized", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_masks)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DivergenceError as err:
        sys.stderr.write(f"bandkit: divergence: {err}\n")
        return 3
    except (PZTError, ImageFormatError, SymmetryError, FileNotFoundError,
            IsADirectoryError, NotADirectoryError) as err:
        sys.stderr.write(f"bandkit: data error: {err}\n")
        return 2
    except OSError as err:
        sys.stderr.write(f"bandkit: i/o error: {err}\n")
        return 2
    except ValueError as err:
        sys.stderr.write(f"bandkit: invalid arguments: {err}\n")
        return 1


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
