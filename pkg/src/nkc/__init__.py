"""Conditional density estimation with a neural x-embedding and kernel y-features."""
__version__ = "0.1.0"

from .estimator import NkcModel, Proposal, cond_log_likelihood, density_grid, evaluate, log_partition
from .kernel_basis import KernelBasis
from .mlp import Mlp
from .trainer import TrainConfig, fit

__all__ = [
    "KernelBasis", "Mlp", "NkcModel", "Proposal", "TrainConfig",
    "cond_log_likelihood", "density_grid", "evaluate", "fit", "log_partition",
]
