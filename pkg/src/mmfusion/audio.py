"""MFCC front-end: framing, mel filterbank, log, DCT, frame stacking and
train-set mean/variance normalisation."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.fft import dct
from scipy.io import wavfile

from .errors import ConfigurationError, DataError, FormatError

SAMPLE_RATE = 16000


@dataclass
class PcmClip:
    samples: np.ndarray  # mono, floats in [-1, 1]
    sample_rate: int = SAMPLE_RATE


@dataclass
class MfccConfig:
    window: int = 800  # 50 ms at 16 kHz
    shift: int = 400  # 25 ms
    n_fft: int = 1024
    n_filters: int = 26
    n_coeffs: int = 13  # c0 included
    preemphasis: float = 0.97
    log_floor: float = 1e-10
    low_hz: float = 0.0
    high_hz: float | None = None  # Nyquist when None
    stack: int = 20

    def __post_init__(self):
        if self.window > self.n_fft:
            raise ConfigurationError(f"window {self.window} exceeds FFT size {self.n_fft}")
        if self.n_coeffs > self.n_filters:
            raise ConfigurationError(f"{self.n_coeffs} coefficients requested from {self.n_filters} filters")
        if self.shift < 1 or self.window < 1:
            raise ConfigurationError("window and shift must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def filter_edges(cfg: MfccConfig, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """``n_filters + 2`` corner frequencies (Hz), equally spaced on the mel scale."""
    high = cfg.high_hz if cfg.high_hz is not None else sample_rate / 2
    return mel_to_hz(np.linspace(hz_to_mel(cfg.low_hz), hz_to_mel(high), cfg.n_filters + 2))


def center_frequencies(cfg: MfccConfig, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    return filter_edges(cfg, sample_rate)[1:-1]


def mel_filterbank(cfg: MfccConfig, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Triangular filters ``[n_filters, n_fft // 2 + 1]`` evaluated at the exact bin frequencies."""
    edges = filter_edges(cfg, sample_rate)
    freqs = np.arange(cfg.n_fft // 2 + 1) * sample_rate / cfg.n_fft
    fb = np.zeros((cfg.n_filters, freqs.size))
    for m in range(cfg.n_filters):
        lo, c, hi = edges[m], edges[m + 1], edges[m + 2]
        rising = (freqs - lo) / (c - lo)
        falling = (hi - freqs) / (hi - c)
        fb[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb


def frame_count(n_samples: int, cfg: MfccConfig) -> int:
    if n_samples < cfg.window:
        return 0
    return (n_samples - cfg.window) // cfg.shift + 1


def frames(signal: np.ndarray, cfg: MfccConfig) -> np.ndarray:
    n = frame_count(signal.size, cfg)
    if n == 0:
        return np.zeros((0, cfg.window))
    idx = np.arange(cfg.window)[None, :] + cfg.shift * np.arange(n)[:, None]
    return signal[idx]


def log_mel_energies(clip: PcmClip, cfg: MfccConfig = MfccConfig()) -> np.ndarray:
    """Per frame: pre-emphasis, Hamming window, power spectrum, mel filterbank, floored log."""
    if clip.sample_rate != SAMPLE_RATE:
        raise FormatError(f"expected {SAMPLE_RATE} Hz audio, got {clip.sample_rate} Hz (resample upstream)")
    x = np.asarray(clip.samples, dtype=np.float64)
    if x.ndim != 1:
        raise FormatError(f"expected mono samples, got shape {x.shape}")
    fr = frames(x, cfg)
    if fr.shape[0] == 0:
        return np.zeros((0, cfg.n_filters))
    emphasized = np.concatenate([fr[:, :1], fr[:, 1:] - cfg.preemphasis * fr[:, :-1]], axis=1)
    windowed = emphasized * np.hamming(cfg.window)
    spectrum = np.fft.rfft(windowed, n=cfg.n_fft, axis=1)
    power = (spectrum.real**2 + spectrum.imag**2) / cfg.n_fft
    energies = power @ mel_filterbank(cfg, clip.sample_rate).T
    return np.log(np.maximum(energies, cfg.log_floor))


def extract_mfcc(clip: PcmClip, cfg: MfccConfig = MfccConfig()) -> np.ndarray:
    """``[frames, n_coeffs]`` MFCCs; orthonormal DCT-II, c0 kept."""
    logmel = log_mel_energies(clip, cfg)
    if logmel.shape[0] == 0:
        return np.zeros((0, cfg.n_coeffs))
    return dct(logmel, type=2, norm="ortho", axis=1)[:, : cfg.n_coeffs]


def stack_frames(seq: np.ndarray, group: int = 20) -> np.ndarray:
    """Concatenate non-overlapping groups of ``group`` frames; a trailing partial group is dropped."""
    if group < 1:
        raise ConfigurationError(f"group must be >= 1, got {group}")
    seq = np.asarray(seq)
    n = seq.shape[0] // group
    return seq[: n * group].reshape(n, group * seq.shape[1])


def fit_normalization(sequences, var_floor: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise mean and (floored, population) variance over every training vector."""
    rows = [np.asarray(s, dtype=np.float64) for s in sequences if len(s)]
    if not rows:
        raise DataError("no feature vectors to fit normalisation on")
    allv = np.concatenate(rows, axis=0)
    mean = allv.mean(axis=0)
    var = np.maximum(((allv - mean) ** 2).mean(axis=0), var_floor)
    return mean, var


def normalize(seq: np.ndarray, mean: np.ndarray, var: np.ndarray) -> np.ndarray:
    return (np.asarray(seq, dtype=np.float64) - mean) / np.sqrt(var)


def dummy_sequence(length: int, dim: int = 260) -> np.ndarray:
    """Zero vectors standing in for missing audio; never normalised."""
    if length < 1:
        raise ConfigurationError(f"dummy sequence length must be >= 1, got {length}")
    return np.zeros((length, dim))


def read_wav(path) -> PcmClip:
    """Mono 16-bit integer or 32-bit float RIFF WAVE into floats in [-1, 1]."""
    try:
        rate, data = wavfile.read(path)
    except (ValueError, OSError) as exc:
        raise FormatError(f"{path}: unreadable WAV ({exc})") from None
    if data.ndim != 1:
        raise FormatError(f"{path}: expected mono, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported sample type {data.dtype}; need 16-bit PCM or 32-bit float")
    if rate != SAMPLE_RATE:
        raise FormatError(f"{path}: sample rate {rate} Hz, expected {SAMPLE_RATE} Hz")
    return PcmClip(samples, rate)


def audio_features(clip: PcmClip, cfg: MfccConfig = MfccConfig()) -> np.ndarray:
    """MFCCs stacked into ``[T, stack * n_coeffs]`` vectors (260-dim by default)."""
    return stack_frames(extract_mfcc(clip, cfg), cfg.stack)
