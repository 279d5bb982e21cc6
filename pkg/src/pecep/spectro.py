"""Spectrogram front end and next-frame datasets.

Audio -> Hann-windowed STFT magnitudes (510-sample window, 255 hop, 256
one-sided bins) -> ``sigmoid(log10(.))`` in (0, 1) -> context/target rows in
which the context for target frame ``k`` is frames ``k-2 .. k-(m+1)``
(most recent first, zero-padded before the clip start). Skipping frame
``k-1`` keeps the context free of audio samples shared with the target.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import binio
from .errors import InvalidInputError

WINDOW = 510
HOP = 255
LOG_FLOOR = 1e-10
OFFSET = 2


def hann(n):
    """Periodic Hann window (sums to a constant at 50% overlap)."""
    return np.hanning(n + 1)[:-1]


def n_frames(n_samples, window=WINDOW, hop=HOP):
    return 1 + (n_samples - window) // hop


def stft_magnitude(wave, window=WINDOW, hop=HOP):
    """Magnitude of the one-sided DFT of Hann-windowed frames, shape (T, window//2 + 1)."""
    x = np.asarray(wave, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInputError("waveform must be 1-D")
    if x.size < window:
        raise InvalidInputError(f"waveform of {x.size} samples is shorter than the {window}-sample window")
    frames = sliding_window_view(x, window)[::hop]
    return np.abs(np.fft.rfft(frames * hann(window), axis=1))


def normalize(mag, floor=LOG_FLOOR):
    """``sigmoid(log10(max(mag, floor)))``: monotone map into (0, 1)."""
    z = np.log10(np.maximum(np.asarray(mag, dtype=np.float64), floor))
    return 1.0 / (1.0 + np.exp(-z))


def mask_call_frames(annotation, n_frames_, hop=HOP, window=WINDOW):
    """Frames whose sample span ``[t*hop, t*hop + window)`` touches any call."""
    start = np.arange(n_frames_) * hop
    mask = np.zeros(n_frames_, dtype=bool)
    for on, off in annotation.calls:
        mask |= (start < off) & (start + window > on)
    return mask


def call_frame_ranges(annotation, n_frames_, hop=HOP, window=WINDOW):
    """Per-call ``(first, stop)`` frame ranges under the same overlap rule."""
    out = []
    for on, off in annotation.calls:
        first = max(0, -(-(on - window + 1) // hop))
        stop = min(n_frames_, -(-off // hop))
        out.append((first, stop))
    return out


@dataclass
class SpectrogramClip:
    frames: np.ndarray
    clip_id: int = 0
    call_frame_mask: Optional[np.ndarray] = None
    frame_hop: int = HOP
    window: int = WINDOW
    sample_rate: int = 16000
    call_ranges: List[tuple] = field(default_factory=list)

    def __post_init__(self):
        if self.call_frame_mask is None:
            self.call_frame_mask = np.zeros(self.frames.shape[0], dtype=bool)
        if self.call_frame_mask.shape != (self.frames.shape[0],):
            raise InvalidInputError("call_frame_mask length must equal the number of frames")

    @property
    def T(self):
        return self.frames.shape[0]

    @property
    def F(self):
        return self.frames.shape[1]


def spectrogram_clip(wave, annotation=None, clip_id=0, sample_rate=16000, dtype=np.float64):
    frames = normalize(stft_magnitude(wave)).astype(dtype)
    mask, ranges = None, []
    if annotation is not None:
        mask = mask_call_frames(annotation, frames.shape[0])
        ranges = call_frame_ranges(annotation, frames.shape[0])
    return SpectrogramClip(frames, clip_id, mask, sample_rate=sample_rate, call_ranges=ranges)


def _padded(frames, m):
    pad = np.zeros((m + OFFSET - 1, frames.shape[1]), dtype=frames.dtype)
    return np.vstack([pad, frames])


def _context_rows(padded, k, m):
    # padded row (k + m - 1) is source frame k - 2; take m rows back from it
    idx = np.asarray(k)[:, None] + np.arange(m - 1, -1, -1)[None, :]
    rows = padded[idx]
    return rows.reshape(rows.shape[0], -1)


@dataclass
class SupervisedSet:
    inputs: np.ndarray
    targets: np.ndarray
    frame_mask: np.ndarray
    m: int
    split_tag: str = "train"

    def save(self, path, meta=None):
        """Single matrix ``[mask | targets | inputs]`` in the raw float format."""
        F = self.targets.shape[1]
        table = np.hstack([self.frame_mask[:, None].astype(np.float64), self.targets, self.inputs])
        info = {"m": self.m, "F": F, "split_tag": self.split_tag,
                "layout": ["frame_mask", f"targets[{F}]", f"inputs[{self.m}x{F}]"]}
        info.update(meta or {})
        return binio.write_matrix(path, table, info)

    @classmethod
    def load(cls, path):
        table, meta = binio.read_matrix(path)
        F, m = meta["F"], meta["m"]
        return cls(table[:, 1 + F:], table[:, 1:1 + F], table[:, 0] > 0.5, m, meta.get("split_tag", "")), meta


def build_context_dataset(clip, m=64, split_tag="train"):
    """One supervised row per target frame ``k in [0, T)`` of a clip."""
    if m < 1:
        raise InvalidInputError(f"context length must be >= 1, got {m}")
    k = np.arange(clip.T)
    inputs = _context_rows(_padded(clip.frames, m), k, m)
    return SupervisedSet(inputs, clip.frames.copy(), clip.call_frame_mask.copy(), m, split_tag)


class ContextDataset:
    """Lazy context/target rows over many clips, gathered per minibatch."""

    def __init__(self, clips: Sequence[SpectrogramClip], m=64):
        self.m = m
        padded = [_padded(c.frames, m) for c in clips]
        lengths = np.array([c.T for c in clips], dtype=int)
        starts = np.concatenate([[0], np.cumsum([p.shape[0] for p in padded])[:-1]]).astype(int)
        self.buffer = np.vstack(padded)
        # row_base = clip start + k, so source frame k sits at row_base + m_pad
        self.row_base = np.repeat(starts, lengths) + np.concatenate([np.arange(n) for n in lengths])
        self.m_pad = m + OFFSET - 1

    def __len__(self):
        return self.row_base.size

    def take(self, idx):
        base = self.row_base[np.asarray(idx)]
        return _context_rows(self.buffer, base, self.m), self.buffer[base + self.m_pad]


def split_clips(clip_ids, fractions=(0.66, 0.14, 0.20), seed=0):
    """Shuffle clip ids and split them into train/val/test sets."""
    ids = list(clip_ids)
    if len(ids) < 3:
        raise InvalidInputError(f"need at least 3 clips to split, got {len(ids)}")
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise InvalidInputError(f"fractions must be three values summing to 1, got {fractions}")
    n = len(ids)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[i] for i in order]
    return (
        sorted(shuffled[:n_train]),
        sorted(shuffled[n_train:n_train + n_val]),
        sorted(shuffled[n_train + n_val:]),
    )
