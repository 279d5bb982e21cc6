"""Synthetic VAR(p) processes with band-diagonal, geometrically decaying
coefficient matrices.

    X_k = A_1 X_{k-1} + ... + A_p X_{k-p} + eps_k,   eps_k ~ N(0, sigma2 I)

Coefficient matrices have nonzeros only within ``band_width`` of the main
diagonal, drawn from U(-1, 1) and rescaled so that ``||A_i||_F = decay**i``.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import binio
from .errors import InsufficientDataError, InvalidInputError, UnstableProcessError
from .linalg import spectral_radius

DECAY = 0.85
MAX_RESAMPLES = 100


def band_mask(d, band_width):
    idx = np.arange(d)
    return np.abs(idx[:, None] - idx[None, :]) <= band_width


def make_coefficients(d, p, band_width=2, seed=0, decay=DECAY):
    """Draw ``p`` band-diagonal ``d x d`` matrices with ``||A_i||_F = decay**i``.

    ``band_width=0`` keeps only the main diagonal.
    """
    if d < 1 or p < 1:
        raise InvalidInputError(f"need d >= 1 and p >= 1, got d={d}, p={p}")
    if not 0 <= band_width <= d:
        raise InvalidInputError(f"band_width must lie in [0, d], got {band_width}")
    rng = np.random.default_rng(seed)
    mask = band_mask(d, band_width)
    coeffs = []
    for i in range(1, p + 1):
        a = np.where(mask, rng.uniform(-1.0, 1.0, size=(d, d)), 0.0)
        coeffs.append(a * (decay ** i / np.linalg.norm(a, "fro")))
    return coeffs


def companion_matrix(coeffs):
    """Block companion matrix ``[[A_1 ... A_p], [I 0 ...], ...]`` of size dp."""
    p = len(coeffs)
    d = coeffs[0].shape[0]
    c = np.zeros((d * p, d * p))
    c[:d] = np.hstack(coeffs)
    if p > 1:
        c[d:, :-d] = np.eye(d * (p - 1))
    return c


@dataclass
class VarProcess:
    coeffs: List[np.ndarray]
    sigma2: float = 1.0
    seed: int = 0
    noise_cov: Optional[np.ndarray] = None

    def __post_init__(self):
        self.coeffs = [np.asarray(a, dtype=np.float64) for a in self.coeffs]
        if not self.coeffs:
            raise InvalidInputError("a VAR process needs at least one lag matrix")
        d = self.coeffs[0].shape[0]
        for a in self.coeffs:
            if a.shape != (d, d):
                raise InvalidInputError(f"lag matrices must all be {d}x{d}, got {a.shape}")
        if self.sigma2 < 0:
            raise InvalidInputError(f"sigma2 must be >= 0, got {self.sigma2}")
        self.radius = spectral_radius(companion_matrix(self.coeffs))
        if not self.radius < 1.0:
            raise UnstableProcessError(
                f"companion spectral radius {self.radius:.6f} >= 1"
            )

    @property
    def d(self):
        return self.coeffs[0].shape[0]

    @property
    def p(self):
        return len(self.coeffs)

    @property
    def stacked(self):
        """``[A_1 | A_2 | ... | A_p]``, shape (d, d*p)."""
        return np.hstack(self.coeffs)

    @classmethod
    def random(cls, d, p, band_width=2, sigma2=1.0, seed=0, max_resamples=MAX_RESAMPLES):
        """Random stable process; unstable draws are redrawn with seed offsets."""
        for attempt in range(max_resamples):
            coeffs = make_coefficients(d, p, band_width, seed=(seed, attempt))
            try:
                return cls(coeffs, sigma2=sigma2, seed=seed)
            except UnstableProcessError:
                continue
        raise UnstableProcessError(
            f"no stable coefficient draw in {max_resamples} attempts (seed={seed})"
        )


@dataclass
class SeriesData:
    frames: np.ndarray
    burn_in_discarded: int
    process: VarProcess
    noise: Optional[np.ndarray] = field(default=None, repr=False)
    seed: Optional[int] = None

    @property
    def n(self):
        return self.frames.shape[0]

    def head(self, n):
        """First ``n`` frames as a new series sharing the same process."""
        noise = None if self.noise is None else self.noise[:n]
        return SeriesData(self.frames[:n], self.burn_in_discarded, self.process, noise, self.seed)

    def save(self, path):
        meta = {
            "d": self.process.d,
            "N": self.n,
            "p": self.process.p,
            "sigma2": self.process.sigma2,
            "seed": self.seed,
            "burn_in_discarded": self.burn_in_discarded,
        }
        return binio.write_matrix(path, self.frames, meta)


def simulate_var(proc, n_frames, seed=0, burn_in=None, initial_history=None):
    """Iterate the VAR recursion and return ``n_frames`` recorded frames.

    The recursion starts from ``initial_history`` (``p x d``, oldest first;
    zeros by default) and discards ``burn_in`` frames (default ``10 * p``)
    before recording. The innovations of the recorded frames are kept on the
    result as ``noise``.
    """
    d, p = proc.d, proc.p
    if n_frames <= p:
        raise InsufficientDataError(f"n_frames must exceed p={p}, got {n_frames}")
    if burn_in is None:
        burn_in = 10 * p
    total = burn_in + n_frames
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((total, d))
    if proc.noise_cov is not None:
        eps = z @ np.linalg.cholesky(proc.noise_cov).T
    else:
        eps = z * np.sqrt(proc.sigma2)

    x = np.zeros((total + p, d))
    if initial_history is not None:
        x[:p] = np.asarray(initial_history, dtype=np.float64).reshape(p, d)
    # lag-major stacking reversed so that x[k-p:k] (oldest first) lines up
    lagged = np.hstack(proc.coeffs[::-1])
    for k in range(p, total + p):
        x[k] = lagged @ x[k - p:k].ravel() + eps[k - p]
    return SeriesData(
        frames=x[p + burn_in:],
        burn_in_discarded=burn_in,
        process=proc,
        noise=eps[burn_in:],
        seed=seed,
    )


def build_supervised(data, m):
    """Context/target pairs for next-frame prediction.

    Row ``j`` of the design is ``(x_{k-1}, ..., x_{k-m})`` flattened (most
    recent first) and the target is ``x_k``, for ``k = m .. N-1``.
    """
    frames = data.frames if isinstance(data, SeriesData) else np.asarray(data, dtype=np.float64)
    n, d = frames.shape
    if m < 1:
        raise InvalidInputError(f"context length must be >= 1, got {m}")
    if n <= m:
        raise InsufficientDataError(f"need more than m={m} frames, got {n}")
    # windows[j] holds frames j .. j+m-1; reverse for most-recent-first order
    windows = sliding_window_view(frames[:-1], m, axis=0)  # (n-m, d, m)
    design = windows[:, :, ::-1].transpose(0, 2, 1).reshape(n - m, m * d)
    return np.ascontiguousarray(design), frames[m:].copy()
