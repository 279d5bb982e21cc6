"""Synthetic vocalization ladder with a known complexity ordering.

Each species is a :class:`SpeciesSpec`. Species are generated by linear
interpolation between a *simple* endpoint (narrow pitch range, regular timing,
steady power, tight spectral-continuity thresholds) and a *complex* endpoint
(wide range, irregular timing, unsteady power, loose thresholds), so every
complexity parameter is non-decreasing in the species index.

Calls are synthesized frame by frame in the magnitude-spectrum domain
(harmonic stack, formant gains, spectral tilt), given random phases, inverse
transformed and overlap-added, then shaped with a sin^2/cos^2 envelope.
"""

import json
import wave
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .errors import DegenerateSpectrumError, InvalidConfigError, InvalidInputError

SAMPLE_RATE = 16000
FRAME = 510
HOP = 255
N_BINS = FRAME // 2 + 1
WIENER_FLOOR = 1e-12
SPECTRAL_FLOOR = 1e-3
FORMANT_FLOOR = 0.3
TILT_CORNER_HZ = 1000.0
TILT_DB_PER_OCTAVE = -6.0
MAX_PROPOSALS = 50
RAMP_S = 0.02
CALL_RMS = 0.1
PEAK = 0.9

RANGE_FIELDS = ("f0_range", "calls_per_bout", "call_dur", "inter_call_gap", "bout_gap")
SCALAR_FIELDS = (
    "harmonic_decay",
    "n_harmonics",
    "n_formants",
    "wiener_threshold",
    "euclid_threshold",
    "f0_step",
    "amp_perturb",
    "timing_jitter",
    "power_jitter",
)
INT_FIELDS = ("n_harmonics", "n_formants", "calls_per_bout")

SIMPLE_ENDPOINT = {
    "f0_range": (400.0, 600.0),
    "harmonic_decay": 0.5,
    "n_harmonics": 5,
    "n_formants": 2,
    "wiener_threshold": 0.01,
    "euclid_threshold": 0.2,
    "f0_step": 0.02,
    "amp_perturb": 0.02,
    "timing_jitter": 0.02,
    "power_jitter": 0.02,
    "calls_per_bout": (3, 3),
    "call_dur": (0.3, 0.3),
    "inter_call_gap": (0.15, 0.15),
    "bout_gap": (0.6, 0.6),
}

COMPLEX_ENDPOINT = {
    "f0_range": (300.0, 3000.0),
    "harmonic_decay": 0.85,
    "n_harmonics": 12,
    "n_formants": 4,
    "wiener_threshold": 0.2,
    "euclid_threshold": 3.0,
    "f0_step": 0.3,
    "amp_perturb": 0.2,
    "timing_jitter": 0.4,
    "power_jitter": 0.4,
    "calls_per_bout": (1, 6),
    "call_dur": (0.15, 0.45),
    "inter_call_gap": (0.05, 0.4),
    "bout_gap": (0.3, 1.2),
}

DEFAULT_BASE_CONFIG = {
    "simple": SIMPLE_ENDPOINT,
    "complex": COMPLEX_ENDPOINT,
    "noise_sigma": 0.0005,
    "formant_ratios": (1.5, 3.0, 4.5, 6.0),
    "formant_bandwidth_ratio": 0.25,
}


@dataclass(frozen=True)
class SpeciesSpec:
    index: int
    f0_range: Tuple[float, float]
    harmonic_decay: float
    n_harmonics: int
    wiener_threshold: float
    euclid_threshold: float
    formants: Tuple[Tuple[float, float], ...]
    timing_jitter: float
    power_jitter: float
    calls_per_bout: Tuple[int, int]
    call_dur: Tuple[float, float]
    inter_call_gap: Tuple[float, float]
    bout_gap: Tuple[float, float]
    noise_sigma: float
    f0_step: float = 0.02
    amp_perturb: float = 0.02

    @property
    def n_formants(self):
        return len(self.formants)

    @property
    def f0_base(self):
        return 0.5 * (self.f0_range[0] + self.f0_range[1])

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        for key in RANGE_FIELDS:
            data[key] = tuple(data[key])
        data["formants"] = tuple(tuple(f) for f in data["formants"])
        return cls(**data)


def _width(r):
    return r[1] - r[0]


def _check_endpoints(simple, complex_):
    for key in SCALAR_FIELDS:
        if complex_[key] < simple[key]:
            raise InvalidConfigError(f"complex endpoint {key} is below the simple endpoint")
    for key in RANGE_FIELDS:
        for r in (simple[key], complex_[key]):
            if r[1] < r[0]:
                raise InvalidConfigError(f"{key} range {r} is inverted")
        if _width(complex_[key]) < _width(simple[key]):
            raise InvalidConfigError(f"complex endpoint {key} range is narrower than the simple one")


def species_table(n_species, base_config=None):
    """Interpolate ``n_species`` specs from the simple to the complex endpoint.

    ``base_config`` follows :data:`DEFAULT_BASE_CONFIG`; partial endpoint
    dicts are merged over the defaults.
    """
    if n_species < 2:
        raise InvalidConfigError(f"need at least 2 species, got {n_species}")
    cfg = dict(DEFAULT_BASE_CONFIG)
    cfg.update(base_config or {})
    simple = {**SIMPLE_ENDPOINT, **cfg["simple"]}
    complex_ = {**COMPLEX_ENDPOINT, **cfg["complex"]}
    _check_endpoints(simple, complex_)
    if cfg["noise_sigma"] < 0:
        raise InvalidConfigError("noise_sigma must be >= 0")
    ratios = cfg["formant_ratios"]
    if max(simple["n_formants"], complex_["n_formants"]) > len(ratios):
        raise InvalidConfigError("more formants requested than formant_ratios provided")

    table = []
    for i in range(n_species):
        t = i / (n_species - 1)
        vals = {}
        for key in SCALAR_FIELDS:
            vals[key] = (1 - t) * simple[key] + t * complex_[key]
        for key in RANGE_FIELDS:
            vals[key] = tuple((1 - t) * a + t * b for a, b in zip(simple[key], complex_[key]))
        for key in INT_FIELDS:
            v = vals[key]
            vals[key] = tuple(int(round(x)) for x in v) if isinstance(v, tuple) else int(round(v))
        f0_base = 0.5 * sum(vals["f0_range"])
        formants = tuple(
            (r * f0_base, r * f0_base * cfg["formant_bandwidth_ratio"])
            for r in ratios[: vals.pop("n_formants")]
        )
        table.append(SpeciesSpec(index=i, formants=formants, noise_sigma=cfg["noise_sigma"], **vals))
    return table


def complexity_vector(spec):
    """Complexity parameters in a fixed order: scalar fields then range widths."""
    out = []
    for key in SCALAR_FIELDS:
        out.append(spec.n_formants if key == "n_formants" else getattr(spec, key))
    out.extend(_width(getattr(spec, key)) for key in RANGE_FIELDS)
    return np.array(out, dtype=np.float64)


# -- spectral frames -------------------------------------------------------------


def wiener_entropy(spectrum):
    """Geometric over arithmetic mean of a magnitude spectrum, in [0, 1]."""
    s = np.asarray(spectrum, dtype=np.float64)
    if np.any(s < 0):
        raise InvalidInputError("magnitude spectrum must be non-negative")
    if not np.any(s > 0):
        raise DegenerateSpectrumError("all-zero spectrum has no Wiener entropy")
    s = np.maximum(s, WIENER_FLOOR)
    return float(np.exp(np.mean(np.log(s))) / np.mean(s))


def bin_frequencies(n_bins=N_BINS, bin_hz=SAMPLE_RATE / FRAME):
    return np.arange(n_bins) * bin_hz


def formant_gain(freqs, formants):
    """Sum of Lorentzian band-pass gains over a constant floor."""
    g = np.full_like(freqs, FORMANT_FLOOR, dtype=np.float64)
    for center, bandwidth in formants:
        g += 1.0 / (1.0 + ((freqs - center) / (0.5 * bandwidth)) ** 2)
    return g


def tilt_gain(freqs, corner=TILT_CORNER_HZ, db_per_octave=TILT_DB_PER_OCTAVE):
    octaves = np.log2(np.maximum(freqs, corner) / corner)
    return 10.0 ** (db_per_octave * octaves / 20.0)


def harmonic_frame(f0, spec, n_bins=N_BINS, bin_hz=SAMPLE_RATE / FRAME, rng=None, filtered=True):
    """Magnitude spectrum of one harmonic frame at fundamental ``f0``.

    Harmonic ``k`` sits at the bin nearest ``k * f0`` with amplitude
    ``harmonic_decay ** (k - 1)``, perturbed by ``amp_perturb``. Harmonics above
    the top bin are dropped. With ``filtered`` the formant and tilt gains are
    applied.
    """
    lo, hi = spec.f0_range
    if not lo - 1e-9 <= f0 <= hi + 1e-9:
        raise InvalidInputError(f"f0={f0} outside species range {spec.f0_range}")
    k = np.arange(1, spec.n_harmonics + 1)
    amps = spec.harmonic_decay ** (k - 1.0)
    if rng is not None and spec.amp_perturb > 0:
        amps = amps * np.maximum(1.0 + spec.amp_perturb * rng.standard_normal(k.size), 0.0)
    bins = np.rint(k * f0 / bin_hz).astype(int)
    keep = bins < n_bins
    frame = np.full(n_bins, SPECTRAL_FLOOR)
    np.add.at(frame, bins[keep], amps[keep])
    if filtered:
        freqs = bin_frequencies(n_bins, bin_hz)
        frame *= formant_gain(freqs, spec.formants) * tilt_gain(freqs)
    return frame


def _reflect(x, lo, hi):
    if hi <= lo:
        return lo
    span = hi - lo
    y = np.mod(x - lo, 2 * span)
    return lo + (2 * span - y if y > span else y)


def _admissible(cand, prev, w_prev, spec):
    return (
        abs(wiener_entropy(cand) - w_prev) <= spec.wiener_threshold
        and np.linalg.norm(cand - prev) <= spec.euclid_threshold
    )


def next_frame(prev, spec, rng, f0, n_bins=N_BINS, bin_hz=SAMPLE_RATE / FRAME):
    """Propose the next frame under the species' spectral-continuity limits.

    A proposal (random-walk step of the fundamental plus a fresh harmonic
    frame) is accepted when both the Wiener-entropy change and the Euclidean
    distance to ``prev`` are within the species thresholds. After
    ``MAX_PROPOSALS`` rejections the closest proposal is pulled back toward
    ``prev`` until it is admissible (``prev`` itself always is).

    Returns
    -------
    (frame, f0)
    """
    prev = np.asarray(prev, dtype=np.float64)
    w_prev = wiener_entropy(prev)
    lo, hi = spec.f0_range
    step = spec.f0_step * (hi - lo)
    best, best_f0, best_dist = None, f0, np.inf
    for _ in range(MAX_PROPOSALS):
        cand_f0 = _reflect(f0 + step * rng.standard_normal(), lo, hi)
        cand = harmonic_frame(cand_f0, spec, n_bins, bin_hz, rng)
        if _admissible(cand, prev, w_prev, spec):
            return cand, cand_f0
        dist = np.linalg.norm(cand - prev)
        if dist < best_dist:
            best, best_f0, best_dist = cand, cand_f0, dist

    t = min(1.0, spec.euclid_threshold / best_dist) if best_dist > 0 else 1.0
    for _ in range(30):
        mix = prev + t * (best - prev)
        if t > 0 and _admissible(mix, prev, w_prev, spec):
            return mix, (best_f0 if t >= 0.5 else f0)
        t *= 0.5
    return prev.copy(), f0


# -- clips ----------------------------------------------------------------------


@dataclass
class ClipAnnotation:
    clip_id: int
    species: int
    sample_rate: int
    n_samples: int
    calls: List[Tuple[int, int]] = field(default_factory=list)
    bouts: List[Tuple[int, int]] = field(default_factory=list)

    def to_dict(self):
        return {
            "clip_id": self.clip_id,
            "species": self.species,
            "sample_rate": self.sample_rate,
            "n_samples": self.n_samples,
            "calls": [list(c) for c in self.calls],
            "bouts": [list(b) for b in self.bouts],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            clip_id=data["clip_id"],
            species=data["species"],
            sample_rate=data["sample_rate"],
            n_samples=data["n_samples"],
            calls=[tuple(c) for c in data["calls"]],
            bouts=[tuple(b) for b in data["bouts"]],
        )


def call_envelope(n_samples, ramp):
    """sin^2 onset, flat top, cos^2 offset; zero at both ends, peak 1."""
    ramp = max(1, min(ramp, (n_samples - 1) // 2))
    env = np.ones(n_samples)
    rise = np.sin(0.5 * np.pi * np.arange(ramp + 1) / ramp) ** 2
    env[: ramp + 1] = rise
    env[n_samples - ramp - 1:] = rise[::-1]
    return env


def clip_seed(master_seed, species, clip_id):
    return np.random.SeedSequence([int(master_seed), int(species), int(clip_id)])


def _jittered(rng, bounds, jitter):
    lo, hi = bounds
    mid = 0.5 * (lo + hi)
    return float(np.clip(mid * (1.0 + jitter * rng.standard_normal()), lo, hi))


def _layout(spec, duration_s, rng):
    # (onset_s, duration_s) for each call plus bout call-index ranges
    calls, bouts = [], []
    margin = 0.05
    t = rng.uniform(margin, 0.25)
    while True:
        n_calls = int(rng.integers(spec.calls_per_bout[0], spec.calls_per_bout[1] + 1))
        first = len(calls)
        for _ in range(max(n_calls, 1)):
            dur = _jittered(rng, spec.call_dur, spec.timing_jitter)
            if t + dur > duration_s - margin:
                break
            calls.append((t, dur))
            t += dur + _jittered(rng, spec.inter_call_gap, spec.timing_jitter)
        if len(calls) > first:
            bouts.append((first, len(calls)))
        if len(calls) == first:
            break
        t += _jittered(rng, spec.bout_gap, spec.timing_jitter)
    return calls, bouts


def synthesize_call(spec, n_samples, rng, sample_rate=SAMPLE_RATE):
    """Unit-RMS-scaled waveform of one call (before power and envelope)."""
    bin_hz = sample_rate / FRAME
    n_frames = int(np.ceil(n_samples / HOP)) + 1
    window = np.hanning(FRAME + 1)[:-1]
    out = np.zeros(n_frames * HOP + FRAME)
    f0 = rng.uniform(*spec.f0_range)
    frame = harmonic_frame(f0, spec, N_BINS, bin_hz, rng)
    # random phase per bin, advanced by one hop per frame so a steady
    # spectrum overlap-adds into steady sinusoids
    phase = rng.uniform(0.0, 2.0 * np.pi, N_BINS)
    advance = 2.0 * np.pi * np.arange(N_BINS) * HOP / FRAME
    for j in range(n_frames):
        if j:
            frame, f0 = next_frame(frame, spec, rng, f0, N_BINS, bin_hz)
        rot = np.exp(1j * (phase + j * advance))
        out[j * HOP:j * HOP + FRAME] += np.fft.irfft(frame * rot, n=FRAME) * window
    out = out[:n_samples]
    rms = np.sqrt(np.mean(out ** 2))
    return out / rms if rms > 0 else out


def synthesize_clip(spec, duration_s=4.0, sample_rate=SAMPLE_RATE, seed=0, clip_id=0):
    """Synthesize one clip of bouts of calls and its call annotation.

    ``seed`` may be an int or a ``numpy.random.SeedSequence``.

    Returns
    -------
    waveform : ndarray, float64 in [-1, 1]
    annotation : ClipAnnotation
    """
    min_len = 0.25 + spec.call_dur[1] + 0.05
    if duration_s < min_len:
        raise InvalidConfigError(f"clip of {duration_s}s is too short for one call (need {min_len}s)")
    rng = np.random.default_rng(seed)
    n_total = int(round(duration_s * sample_rate))
    layout, bouts = _layout(spec, duration_s, rng)
    clean = np.zeros(n_total)
    calls = []
    ramp = int(round(RAMP_S * sample_rate))
    for onset_s, dur_s in layout:
        on = int(round(onset_s * sample_rate))
        off = min(on + int(round(dur_s * sample_rate)), n_total)
        n = off - on
        power = max(1.0 + spec.power_jitter * rng.standard_normal(), 0.1)
        clean[on:off] = CALL_RMS * power * synthesize_call(spec, n, rng, sample_rate) * call_envelope(n, ramp)
        calls.append((on, off))
    wave_ = clean + spec.noise_sigma * rng.standard_normal(n_total)
    peak = np.max(np.abs(wave_))
    if peak > 0:
        wave_ = wave_ * (PEAK / peak)
    ann = ClipAnnotation(clip_id, spec.index, sample_rate, n_total, calls, bouts)
    return wave_, ann


# -- files ----------------------------------------------------------------------


def write_wav(path, waveform, sample_rate=SAMPLE_RATE):
    """Mono 16-bit little-endian PCM."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pcm = np.round(np.clip(waveform, -1.0, 1.0) * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(int(sample_rate))
        fh.writeframes(pcm.tobytes())
    return path


def read_wav(path):
    """Return ``(waveform in [-1, 1], sample_rate)`` for a 16-bit mono WAV."""
    with wave.open(str(path), "rb") as fh:
        if fh.getsampwidth() != 2 or fh.getnchannels() != 1:
            raise InvalidInputError(f"{path}: expected mono 16-bit PCM")
        rate = fh.getframerate()
        pcm = np.frombuffer(fh.readframes(fh.getnframes()), dtype="<i2")
    return pcm.astype(np.float64) / 32767.0, rate


def wav_name(species, clip_id):
    return f"{species}_{clip_id}.wav"


def write_annotations(path, spec, annotations):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"species": spec.to_dict(), "clips": [a.to_dict() for a in annotations]}
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def read_annotations(path):
    doc = json.loads(Path(path).read_text())
    return SpeciesSpec.from_dict(doc["species"]), [ClipAnnotation.from_dict(c) for c in doc["clips"]]


def generate_species_corpus(spec, n_clips, master_seed, duration_s=4.0, sample_rate=SAMPLE_RATE, out_dir=None):
    """Synthesize ``n_clips`` clips; optionally write WAVs and the annotation file."""
    waves, anns = [], []
    for clip_id in range(n_clips):
        w, ann = synthesize_clip(spec, duration_s, sample_rate, clip_seed(master_seed, spec.index, clip_id), clip_id)
        waves.append(w)
        anns.append(ann)
        if out_dir is not None:
            write_wav(Path(out_dir) / wav_name(spec.index, clip_id), w, sample_rate)
    if out_dir is not None:
        write_annotations(Path(out_dir) / f"{spec.index}_annotations.json", spec, anns)
    return waves, anns
