"""Radial frequency-band decomposition for latent grids and images."""

from .analysis import (EnergyProfile, ImageFormatError, RetrievalCurve,
                       SyntheticRetrievalCorpus, energy_profile, filter_image,
                       read_ppm, retrieval_recall, retrieval_sweep,
                       sinusoid_images, write_ppm)
from .losses import LossReport, make_report, pixel_loss, semantic_loss
from .masks import (BandMaskSet, CutoffMaskPair, cutoff_masks,
                    normalized_radius, ring_masks)
from .modulator import (ModulatorParams, NoiseDraw, NoisePolicy, apply_noise,
                        conv2d, init_modulator_params, inject_noise,
                        load_modulator_params, sample_noise,
                        save_modulator_params, spectral_transform)
from .spectral import (Spectrum, SymmetryError, dft2, idft2,
                       idft2_with_residue, spectral_energy, total_energy)
from .splitflow import (BandStack, band_sum, iterative_split, project_band,
                        recompose, split_adjoint)
from .tensors import (PZTError, PZTFormatError, PZTLengthError, SeededRng,
                      gaussian_tensor, load_tensor, save_tensor)
from .toytrain import (DivergenceError, RunSpec, ToyModel, TrainConfig,
                       backward, build_run, forward, gradient_check,
                       init_toy_model, load_checkpoint, parse_run_config,
                       save_checkpoint, train)

__version__ = "0.1.0"
