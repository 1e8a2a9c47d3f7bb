"""Adversarial-image detection via prediction shift under denoising.

The toolkit generates a synthetic 10-class image dataset, trains a small
CNN with exact analytic gradients, crafts FGSM/BIM adversarial examples,
denoises inputs with median and Wiener filters, scores the shift between
the top-k prediction vectors of an image and its denoised version, and
trains classical detectors (KNN, decision tree, random forest, RBF SVM)
on the labeled scores.  Everything is deterministic given seeds.
"""

from .attacks import AttackConfig, bim, fgsm
from .data import DatasetSpec, generate, split, split_indices
from .errors import ConfigError, DataError, FmdError, NumericalError
from .experiment import ExperimentConfig, run_experiment
from .filters import fft2, ifft2, median_filter, mse, wiener_adaptive, wiener_deconvolve
from .image import clip01, read_ppm, replicate_gray, to_grayscale, write_ppm
from .nn import (
    ModelParams,
    TrainConfig,
    cross_entropy,
    forward,
    init_params,
    input_gradient,
    load_weights,
    save_weights,
    softmax,
    train,
)
from .scoring import PredictionVector, ScoreRecord, fmd_score, score_dataset, top_k

__version__ = "0.1.0"
