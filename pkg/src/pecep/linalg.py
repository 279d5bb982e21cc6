"""Dense linear-algebra kernels: residual covariance, PSD log-determinant,
SVD least squares and spectral radius.

Matrices are plain float64 ``numpy`` arrays. Rows are observations (frames),
columns are features.
"""

import numpy as np

from .errors import (
    InsufficientSamplesError,
    InvalidInputError,
    SingularMatrixError,
    UnderdeterminedSystemError,
)

SYM_RTOL = 1e-10
PSD_RTOL = 1e-10


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D float64 array or raise InvalidInputError."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return m


def check_psd(m, rtol=PSD_RTOL):
    """Validate the symmetric positive semi-definite invariants of ``m``.

    Symmetry is checked to ``rtol`` relative to the largest entry magnitude,
    and the smallest eigenvalue must be at least ``-rtol`` times the largest
    eigenvalue magnitude.
    """
    m = as_matrix(m, "covariance")
    if m.shape[0] != m.shape[1]:
        raise InvalidInputError(f"covariance must be square, got {m.shape}")
    scale = np.max(np.abs(m)) if m.size else 0.0
    if np.max(np.abs(m - m.T), initial=0.0) > rtol * max(scale, np.finfo(float).tiny):
        raise InvalidInputError("covariance is not symmetric")
    eig = np.linalg.eigvalsh(m)
    top = np.max(np.abs(eig), initial=0.0)
    if eig.size and eig[0] < -rtol * top:
        raise InvalidInputError(f"covariance has negative eigenvalue {eig[0]:.3g}")
    return m


def residual_mean_norm(residuals):
    """Euclidean norm of the column means of a residual batch.

    Diagnostic for the zero-mean assumption behind the uncentered covariance.
    """
    r = as_matrix(residuals, "residuals")
    return float(np.linalg.norm(r.mean(axis=0)))


def sample_residual_covariance(residuals, center=False):
    """Sample covariance of prediction residuals with ``N - 1`` normalization.

    Residuals are assumed zero-mean, so no mean is subtracted unless
    ``center=True``.

    Parameters
    ----------
    residuals : array_like, shape (N, d)
        One prediction error per row.
    center : bool
        Subtract the column means first.

    Returns
    -------
    ndarray, shape (d, d)
    """
    r = as_matrix(residuals, "residuals")
    n = r.shape[0]
    if n < 2:
        raise InsufficientSamplesError(f"need at least 2 residual rows, got {n}")
    if center:
        r = r - r.mean(axis=0)
    cov = r.T @ r / (n - 1)
    # exact symmetry; gemm on r.T @ r is not guaranteed to be bit-symmetric
    return 0.5 * (cov + cov.T)


def log_det_psd(m, ridge=0.0):
    """Log-determinant of ``m + ridge * I`` via a Cholesky factor.

    Raises SingularMatrixError when the (unregularized) matrix is singular to
    working precision instead of returning ``-inf``.
    """
    if ridge < 0:
        raise InvalidInputError(f"ridge must be >= 0, got {ridge}")
    m = check_psd(m)
    d = m.shape[0]
    if d == 0:
        return 0.0
    a = m + ridge * np.eye(d) if ridge > 0 else m
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(
            f"matrix is not positive definite (ridge={ridge})"
        ) from exc
    diag = np.diag(chol)
    floor = d * np.finfo(float).eps * np.max(np.diag(a))
    if ridge == 0 and np.min(diag) ** 2 <= floor:
        raise SingularMatrixError("matrix is singular to working precision; pass ridge > 0")
    return float(2.0 * np.sum(np.log(diag)))


def default_rcond(n_rows, n_cols):
    return 1e-12 * max(n_rows, n_cols)


def _triangular_reduce(design, targets, chunk_rows):
    # R factor of [design | targets] accumulated chunk by chunk; its top-left
    # block is R of the design and its top-right block is Q^T targets.
    q = design.shape[1]
    r_aug = np.zeros((0, q + targets.shape[1]))
    for start in range(0, design.shape[0], chunk_rows):
        block = np.hstack([design[start:start + chunk_rows], targets[start:start + chunk_rows]])
        r_aug = np.linalg.qr(np.vstack([r_aug, block]), mode="r")
    return r_aug[:q, :q], r_aug[:q, q:]


def solve_least_squares(design, targets, rcond=None, chunk_rows=65536):
    """Minimum-norm solution of ``min ||targets - design @ B||_F``.

    The tall system is first reduced to a square triangular one by
    orthogonal transformations (done in row chunks so very long designs never
    need a full ``Q``), then solved with a truncated SVD. Singular values below
    ``rcond * s_max`` are discarded; ``rcond`` defaults to
    ``1e-12 * max(N, q)``.

    Returns
    -------
    ndarray, shape (q, d)
    """
    x = as_matrix(design, "design")
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    y = as_matrix(y, "targets")
    n, q = x.shape
    if y.shape[0] != n:
        raise InvalidInputError(f"design has {n} rows but targets have {y.shape[0]}")
    if n < q:
        raise UnderdeterminedSystemError(f"need N >= q, got N={n}, q={q}")
    if rcond is None:
        rcond = default_rcond(n, q)

    r, qty = _triangular_reduce(x, y, chunk_rows)
    u, s, vt = np.linalg.svd(r, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((q, y.shape[1]))
    keep = s > rcond * s[0]
    coef = vt[keep].T @ ((u[:, keep].T @ qty) / s[keep][:, None])
    return coef


def spectral_radius(square):
    """Largest eigenvalue modulus of a square matrix."""
    a = as_matrix(square, "square matrix")
    if a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"matrix must be square, got {a.shape}")
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(a))))
