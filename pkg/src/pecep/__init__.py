"""Prediction-error entropy estimates and the experiments built on them."""

from .entropy import (
    EntropyReport,
    entropy_report,
    gaussian_noise_entropy,
    hadamard_bound,
    pecep,
    whitening_gap,
)
from .linalg import log_det_psd, sample_residual_covariance, solve_least_squares

__version__ = "0.1.0"

__all__ = [
    "EntropyReport",
    "entropy_report",
    "gaussian_noise_entropy",
    "hadamard_bound",
    "log_det_psd",
    "pecep",
    "sample_residual_covariance",
    "solve_least_squares",
    "whitening_gap",
]
