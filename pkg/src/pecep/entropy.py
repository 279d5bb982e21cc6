"""Entropy bounds computed from a prediction-error covariance.

All values are in nats. For a residual covariance ``S`` of dimension ``d``:

* ``pecep``          = d/2 ln(2 pi e) + 1/2 ln|S|
* ``hadamard_bound`` = d/2 ln(2 pi e) + 1/2 sum_i ln S_ii   (>= pecep)
* ``whitening_gap``  = hadamard_bound - pecep                (>= 0)
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidCovarianceError, InvalidInputError
from .linalg import as_matrix, check_psd, log_det_psd, sample_residual_covariance

LN_2PIE = math.log(2.0 * math.pi * math.e)
GAP_CLAMP = 1e-9
UNIT = "nats"

REPORT_FIELDS = (
    "d",
    "pecep",
    "hadamard_bound",
    "whitening_gap",
    "theoretical_bound",
    "ridge_used",
    "n_residuals",
)


def pecep(cov, ridge=0.0):
    """Gaussian entropy of a residual covariance: an upper bound on the
    conditional differential entropy of the predicted process."""
    cov = as_matrix(cov, "covariance")
    d = cov.shape[0]
    if d < 1:
        raise InvalidInputError("covariance must have dimension >= 1")
    return 0.5 * d * LN_2PIE + 0.5 * log_det_psd(cov, ridge)


def hadamard_bound(cov, ridge=0.0):
    """Diagonal (Hadamard) relaxation of :func:`pecep`.

    ``ridge`` is added to the diagonal first so that the bound stays above a
    ridge-regularized :func:`pecep`.
    """
    cov = check_psd(cov)
    diag = np.diag(cov) + ridge
    if diag.size < 1:
        raise InvalidInputError("covariance must have dimension >= 1")
    if np.any(diag <= 0):
        raise InvalidCovarianceError("all diagonal entries must be > 0")
    return 0.5 * diag.size * LN_2PIE + 0.5 * float(np.sum(np.log(diag)))


def _clamp_gap(raw):
    return 0.0 if -GAP_CLAMP <= raw < 0.0 else raw


def whitening_gap(cov, ridge=0.0):
    """Hadamard bound minus PECEP; zero when residual dimensions are uncorrelated."""
    return _clamp_gap(hadamard_bound(cov, ridge) - pecep(cov, ridge))


def gaussian_noise_entropy(sigma2, d):
    """Entropy of isotropic Gaussian noise ``N(0, sigma2 I_d)``."""
    if not sigma2 > 0:
        raise InvalidInputError(f"sigma2 must be > 0, got {sigma2}")
    if d < 1:
        raise InvalidInputError(f"d must be >= 1, got {d}")
    return 0.5 * d * math.log(2.0 * math.pi * math.e * sigma2)


@dataclass(frozen=True)
class EntropyReport:
    d: int
    pecep: float
    hadamard_bound: float
    whitening_gap: float
    theoretical_bound: Optional[float]
    ridge_used: float
    n_residuals: int
    raw_whitening_gap: float = field(default=0.0, compare=False)
    unit: str = field(default=UNIT, compare=False)

    def to_dict(self):
        """Flat mapping with the fixed report field names."""
        return {name: getattr(self, name) for name in REPORT_FIELDS}


def entropy_report(residuals, ridge=0.0, theoretical_bound=None):
    """Build an :class:`EntropyReport` from a batch of residual rows."""
    r = as_matrix(residuals, "residuals")
    cov = sample_residual_covariance(r)
    pe = pecep(cov, ridge)
    hb = hadamard_bound(cov, ridge)
    raw = hb - pe
    return EntropyReport(
        d=int(r.shape[1]),
        pecep=pe,
        hadamard_bound=hb,
        whitening_gap=_clamp_gap(raw),
        theoretical_bound=theoretical_bound,
        ridge_used=float(ridge),
        n_residuals=int(r.shape[0]),
        raw_whitening_gap=raw,
    )
