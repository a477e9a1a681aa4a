"""Differential privacy for complex-valued functions and networks.

Building blocks: a circular complex Gaussian mechanism with analytic
(epsilon, delta) and Renyi accounting, a Wirtinger-calculus reverse-mode
autodiff engine producing conjugate gradients, complex-valued layers and
activations, DP-SGD training with per-sample clipping, and a deterministic
binary dataset format.
"""

from . import accountant, cli, ctensor, data, mechanism, nn, trainer, wirtinger
from .accountant import (
    PrivacyLedger,
    PrivacyParams,
    RdpCurve,
    RdpPoint,
    calibrate_sigma,
    compose,
    delta_of_epsilon,
    mc_privacy_loss_delta,
    rdp_gaussian,
    rdp_subsampled_gaussian,
    rdp_to_dp,
)
from .ctensor import CTensor, Rng, ctensor, dft_1d, l2_norm, sample_circular_gaussian
from .data import ComplexDataset, gen_complex_blobs, gen_fourier_signals, \
    gen_paired_prototypes, load_zdpc, save_zdpc
from .errors import DomainError, FormatError, GraphError, TrainingDiverged
from .mechanism import ClipSpec, MechanismSpec, clip_conjugate_gradient, \
    gaussian_mechanism, privatize_lot
from .nn import Architecture, LayerSpec, apply_activation, init_params
from .trainer import TrainConfig, TrainReport, evaluate, sample_lot, train
from .wirtinger import ConjugateGradient, Tape, Var, backward, forward, \
    gradcheck, holomorphy_residual

__version__ = "0.1.0"
