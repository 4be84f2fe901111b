"""Command line surface: flags, exit codes, file round trips, byte stability."""

import subprocess
import sys

import numpy as np
import pytest

from bandkit.analysis import SyntheticRetrievalCorpus, read_ppm, write_ppm
from bandkit.cli import build_parser, main
from bandkit.masks import ring_masks
from bandkit.tensors import SeededRng, load_tensor, save_tensor
from bandkit.toytrain import load_checkpoint

SUBCOMMANDS = ("decompose", "recompose", "energy", "filter", "retrieval",
               "train-toy", "gradcheck", "masks")

TINY_RUN_CFG = "\n".join([
    "n_images = 8",
    "image_size = 8",
    "patch = 2",
    "channels = 3",
    "bands = 2",
    "stage = 1,2",
    "steps = 4,4",
    "lr = 0.1,0.1",
    "batch_size = 4",
]) + "\n"


def save_latent(path, seed=0, shape=(2, 3, 16, 16)):
    z = SeededRng(seed).gaussian(shape)
    save_tensor(z, str(path))
    return z


# ---------------------------------------------------------------------------
# parser surface


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    for name in SUBCOMMANDS:
        assert main([name, "--help"]) == 0, name
    capsys.readouterr()


def test_declared_flags_exactly():
    parser = build_parser()
    subs = next(a for a in parser._actions
                if isinstance(a, type(parser._actions[-1]))
                and hasattr(a, "choices") and a.choices)
    expected = {
        "decompose": {"--input", "--bands", "--taper", "--normalized", "--out"},
        "recompose": {"--in", "--output", "--drop-residual"},
        "energy": {"--input", "--bands", "--taper", "--csv"},
        "filter": {"--input", "--mode", "--cutoff", "--taper", "--output"},
        "retrieval": {"--text", "--synthetic", "--image-dir", "--n", "--mode",
                      "--cutoffs", "--k", "--csv", "--seed"},
        "train-toy": {"--config", "--out-dir"},
        "gradcheck": {"--config", "--tolerance"},
        "masks": {"--height", "--width", "--bands", "--taper", "--normalized",
                  "--out"},
    }
    assert set(subs.choices) == set(SUBCOMMANDS)
    for name, sub in subs.choices.items():
        flags = {s for a in sub._actions for s in a.option_strings
                 if s not in ("-h", "--help")}
        assert flags == expected[name], name


def test_unknown_flag_is_usage_error(capsys):
    assert main(["energy", "--input", "x.pzt", "--bands", "4",
                 "--frobnicate"]) == 1
    assert "error" in capsys.readouterr().err


def test_missing_required_flag_is_usage_error(capsys):
    assert main(["decompose", "--input", "x.pzt"]) == 1
    capsys.readouterr()


def test_missing_input_file_is_data_error(tmp_path, capsys):
    assert main(["energy", "--input", str(tmp_path / "nope.pzt"),
                 "--bands", "4"]) == 2
    assert "data error" in capsys.readouterr().err


def test_corrupt_input_file_is_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.pzt"
    bad.write_bytes(b"NOPE" + bytes(60))
    assert main(["energy", "--input", str(bad), "--bands", "4"]) == 2
    capsys.readouterr()


def test_invalid_value_is_usage_error(tmp_path, capsys):
    path = tmp_path / "z.pzt"
    save_latent(path)
    assert main(["decompose", "--input", str(path), "--bands", "0",
                 "--out", str(tmp_path / "d")]) == 1
    capsys.readouterr()


# ---------------------------------------------------------------------------
# decompose / recompose


def test_decompose_recompose_roundtrip(tmp_path, capsys):
    zpath = tmp_path / "z.pzt"
    z = save_latent(zpath, seed=3)
    outdir = tmp_path / "d"
    assert main(["decompose", "--input", str(zpath), "--bands", "4",
                 "--taper", "0.04", "--out", str(outdir)]) == 0
    names = sorted(p.name for p in outdir.iterdir())
    assert names == ["band_00.pzt", "band_01.pzt", "band_02.pzt",
                     "band_03.pzt", "residual.pzt"]
    assert load_tensor(str(outdir / "band_00.pzt")).shape == z.shape
    z2path = tmp_path / "z2.pzt"
    assert main(["recompose", "--in", str(outdir), "--output",
                 str(z2path)]) == 0
    z2 = load_tensor(str(z2path))
    assert z2.shape == z.shape
    assert np.max(np.abs(z2 - z)) < 1e-5
    capsys.readouterr()


def test_recompose_drop_residual_on_binary_partition(tmp_path, capsys):
    zpath = tmp_path / "z.pzt"
    z = save_latent(zpath, seed=4, shape=(1, 2, 12, 12))
    outdir = tmp_path / "d"
    assert main(["decompose", "--input", str(zpath), "--bands", "3",
                 "--taper", "0", "--normalized", "--out", str(outdir)]) == 0
    z2path = tmp_path / "z2.pzt"
    assert main(["recompose", "--in", str(outdir), "--output", str(z2path),
                 "--drop-residual"]) == 0
    assert np.max(np.abs(load_tensor(str(z2path)) - z)) < 1e-5
    capsys.readouterr()


def test_decompose_is_byte_stable(tmp_path, capsys):
    zpath = tmp_path / "z.pzt"
    save_latent(zpath, seed=9, shape=(1, 1, 8, 8))
    blobs = []
    for d in ("d1", "d2"):
        outdir = tmp_path / d
        assert main(["decompose", "--input", str(zpath), "--bands", "3",
                     "--out", str(outdir)]) == 0
        blobs.append([p.read_bytes() for p in sorted(outdir.iterdir())])
    assert blobs[0] == blobs[1]
    capsys.readouterr()


def test_recompose_empty_dir_is_usage_error(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["recompose", "--in", str(empty),
                 "--output", str(tmp_path / "o.pzt")]) == 1
    capsys.readouterr()


# ---------------------------------------------------------------------------
# energy


def test_energy_constant_grid_stdout(tmp_path, capsys):
    path = tmp_path / "const.pzt"
    save_tensor(np.full((1, 1, 16, 16), 2.5), str(path))
    assert main(["energy", "--input", str(path), "--bands", "8"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "band_index,edge_lo,edge_hi,energy_fraction"
    assert lines[1] == "0,0,0.125,1"
    assert len(lines) == 9
    assert all(line.endswith(",0") for line in lines[2:])


def test_energy_csv_file_and_stability(tmp_path, capsys):
    path = tmp_path / "z.pzt"
    save_latent(path, seed=5, shape=(2, 3, 16, 16))
    csvs = []
    for name in ("a.csv", "b.csv"):
        csv = tmp_path / name
        assert main(["energy", "--input", str(path), "--bands", "4",
                     "--csv", str(csv)]) == 0
        csvs.append(csv.read_bytes())
    assert csvs[0] == csvs[1]
    fractions = [float(l.split(",")[3])
                 for l in csvs[0].decode().splitlines()[1:]]
    assert abs(sum(fractions) - 1.0) < 1e-9
    capsys.readouterr()


# ---------------------------------------------------------------------------
# filter


def make_ppm(path, seed=0, size=16):
    img = SeededRng(seed).uniforms(3 * size * size).reshape(3, size, size)
    write_ppm(str(path), img)
    return read_ppm(str(path))


def test_filter_allpass_roundtrip(tmp_path, capsys):
    src = tmp_path / "in.ppm"
    img = make_ppm(src, seed=1)
    out = tmp_path / "out.ppm"
    assert main(["filter", "--input", str(src), "--mode", "lp",
                 "--cutoff", "1", "--taper", "0", "--output", str(out)]) == 0
    got = read_ppm(str(out))
    assert np.max(np.abs(got - img)) <= (0.5 / 255) + 1e-9
    capsys.readouterr()


def test_filter_hp_flattens_constant(tmp_path, capsys):
    src = tmp_path / "in.ppm"
    write_ppm(str(src), np.full((3, 8, 8), 0.6))
    out = tmp_path / "out.ppm"
    assert main(["filter", "--input", str(src), "--mode", "hp",
                 "--cutoff", "0.5", "--output", str(out)]) == 0
    assert np.max(read_ppm(str(out))) == 0.0
    capsys.readouterr()


def test_filter_output_byte_stable(tmp_path, capsys):
    src = tmp_path / "in.ppm"
    make_ppm(src, seed=2)
    outs = []
    for name in ("a.ppm", "b.ppm"):
        out = tmp_path / name
        assert main(["filter", "--input", str(src), "--mode", "hp",
                     "--cutoff", "0.4", "--output", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    capsys.readouterr()


def test_filter_bad_ppm_is_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.ppm"
    bad.write_bytes(b"P5 2 2 255 junk")
    assert main(["filter", "--input", str(bad), "--mode", "lp",
                 "--cutoff", "0.5", "--output", str(tmp_path / "o.ppm")]) == 2
    capsys.readouterr()


# ---------------------------------------------------------------------------
# retrieval


def test_retrieval_synthetic_csv(tmp_path, capsys):
    csv = tmp_path / "r.csv"
    assert main(["retrieval", "--synthetic", "--n", "60", "--mode", "lp",
                 "--cutoffs", "0.25,0.5,1.0", "--k", "3",
                 "--csv", str(csv), "--seed", "7"]) == 0
    lines = csv.read_text().splitlines()
    assert lines[0] == "cutoff,mode,recall_at_k"
    assert len(lines) == 4
    rows = [l.split(",") for l in lines[1:]]
    assert [r[0] for r in rows] == ["0.25", "0.5", "1"]
    assert all(r[1] == "lp" for r in rows)
    assert all(0.0 <= float(r[2]) <= 1.0 for r in rows)
    assert "monotonicity violations" in capsys.readouterr().out


def test_retrieval_synthetic_is_byte_stable(tmp_path, capsys):
    blobs = []
    for name in ("a.csv", "b.csv"):
        csv = tmp_path / name
        assert main(["retrieval", "--synthetic", "--n", "40", "--mode", "hp",
                     "--cutoffs", "0.5,1.0", "--k", "2", "--csv", str(csv),
                     "--seed", "3"]) == 0
        blobs.append(csv.read_bytes())
    assert blobs[0] == blobs[1]
    capsys.readouterr()


def test_retrieval_file_mode_matches_synthetic(tmp_path, capsys):
    corpus = SyntheticRetrievalCorpus(40, 7)
    tpath = tmp_path / "text.pzt"
    save_tensor(corpus.text_embeddings, str(tpath))
    imgdir = tmp_path / "emb"
    imgdir.mkdir()
    cutoffs = [0.3, 0.6, 1.0]
    for rho in cutoffs:
        save_tensor(corpus.image_embeddings(rho, "lp"),
                    str(imgdir / f"images_lp_{rho:.3f}.pzt"))
    file_csv = tmp_path / "file.csv"
    assert main(["retrieval", "--text", str(tpath), "--image-dir", str(imgdir),
                 "--mode", "lp", "--cutoffs", "0.3,0.6,1.0", "--k", "4",
                 "--csv", str(file_csv)]) == 0
    synth_csv = tmp_path / "synth.csv"
    assert main(["retrieval", "--synthetic", "--n", "40", "--mode", "lp",
                 "--cutoffs", "0.3,0.6,1.0", "--k", "4",
                 "--csv", str(synth_csv), "--seed", "7"]) == 0
    assert file_csv.read_bytes() == synth_csv.read_bytes()
    capsys.readouterr()


def test_retrieval_flag_pairing_errors(tmp_path, capsys):
    assert main(["retrieval", "--synthetic", "--mode", "lp",
                 "--cutoffs", "0.5"]) == 1
    assert main(["retrieval", "--n", "10", "--mode", "lp",
                 "--cutoffs", "0.5"]) == 1
    assert main(["retrieval", "--synthetic", "--n", "10", "--text", "t.pzt",
                 "--mode", "lp", "--cutoffs", "0.5"]) == 1
    assert main(["retrieval", "--mode", "lp", "--cutoffs", "0.5"]) == 1
    assert main(["retrieval", "--synthetic", "--n", "10", "--mode", "lp",
                 "--cutoffs", "oops"]) == 1
    capsys.readouterr()


def test_retrieval_missing_embedding_file(tmp_path, capsys):
    tpath = tmp_path / "text.pzt"
    save_tensor(SeededRng(0).gaussian((10, 8)), str(tpath))
    imgdir = tmp_path / "emb"
    imgdir.mkdir()
    assert main(["retrieval", "--text", str(tpath), "--image-dir", str(imgdir),
                 "--mode", "lp", "--cutoffs", "0.5", "--k", "1"]) == 2
    capsys.readouterr()


# ---------------------------------------------------------------------------
# masks


def test_masks_export(tmp_path, capsys):
    out = tmp_path / "m.pzt"
    assert main(["masks", "--height", "16", "--width", "12", "--bands", "3",
                 "--taper", "0.02", "--normalized", "--out", str(out)]) == 0
    got = load_tensor(str(out))
    want = ring_masks(16, 12, 3, 0.02, normalized=True).masks
    assert got.shape == (3, 16, 12)
    assert np.array_equal(got, want)
    capsys.readouterr()


# ---------------------------------------------------------------------------
# train-toy / gradcheck


def test_train_toy_writes_run_artifacts(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(TINY_RUN_CFG)
    outdir = tmp_path / "run"
    assert main(["train-toy", "--config", str(cfg),
                 "--out-dir", str(outdir)]) == 0
    log = (outdir / "log.csv").read_text().splitlines()
    assert log[0] == "step,stage,l_pix,l_sem,total,corrupted_bands"
    assert len(log) == 9
    model = load_checkpoint(outdir / "checkpoint")
    assert (model.patch, model.channels, model.bands) == (2, 3, 2)
    out = capsys.readouterr().out
    assert "trained 8 steps" in out


def test_train_toy_divergence_exit_code(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(TINY_RUN_CFG.replace("lr = 0.1,0.1", "lr = 1e8,1e8"))
    with np.errstate(all="ignore"):
        code = main(["train-toy", "--config", str(cfg),
                     "--out-dir", str(tmp_path / "run")])
    assert code == 3
    assert "divergence" in capsys.readouterr().err


def test_gradcheck_passes_and_reports(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(TINY_RUN_CFG.replace("stage = 1,2", "stage = 1,3"))
    assert main(["gradcheck", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "stage 1 enc_w: rel_err" in out
    assert "stage 3 conv2_w: rel_err" in out
    assert "FAIL" not in out


def test_gradcheck_impossible_tolerance_fails(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(TINY_RUN_CFG)
    assert main(["gradcheck", "--config", str(cfg),
                 "--tolerance", "1e-15"]) == 3
    capsys.readouterr()


# ---------------------------------------------------------------------------
# module execution


def test_module_invocation_smoke(tmp_path):
    zpath = tmp_path / "z.pzt"
    save_latent(zpath, seed=1, shape=(1, 1, 8, 8))
    proc = subprocess.run(
        [sys.executable, "-m", "bandkit", "energy", "--input", str(zpath),
         "--bands", "2"],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("band_index,edge_lo,edge_hi,energy_fraction")
