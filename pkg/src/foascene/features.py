"""Spatial front-end: STFT, per-channel log-mel maps and mel-aggregated intensity vectors."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import signal

LOG_FLOOR = 1e-10
IV_EPS = 1e-12
MAP_NAMES = ("mel_w", "mel_x", "mel_y", "mel_z", "iv_x", "iv_y", "iv_z")


@dataclass(frozen=True)
class FeatureConfig:
    """Front-end parameters.

    ``n_fft`` is the (power-of-two) frame length; the Hann window of
    ``win_length`` samples is centred inside it and zero-padded.
    """

    sample_rate: int = 16000
    n_fft: int = 512
    win_length: int = 400
    hop: int = 160
    mel_bins: int = 64
    fmin_hz: float = 0.0
    fmax_hz: float = None

    @property
    def frame_rate_hz(self) -> float:
        return self.sample_rate / self.hop


def frame_count(n_samples: int, window_len: int, hop: int) -> int:
    if n_samples <= window_len:
        return 1
    return int(math.ceil((n_samples - window_len) / hop)) + 1


@lru_cache(maxsize=16)
def _window(window_len: int, win_length: int) -> np.ndarray:
    win = np.zeros(window_len)
    start = (window_len - win_length) // 2
    win[start: start + win_length] = signal.get_window("hann", win_length, fftbins=True)
    win.flags.writeable = False
    return win


def stft(samples: np.ndarray, window_len: int = 512, hop: int = 160, win_length: int = None) -> np.ndarray:
    """Hann-windowed STFT of the last axis, shape ``(..., frames, window_len // 2 + 1)``.

    Frames start at sample 0 and the tail is zero-padded up to the last
    frame. Input shorter than one window yields a single zero-padded frame.
    """
    if window_len <= 0 or window_len & (window_len - 1):
        raise ValueError(f"window_len must be a power of two, got {window_len}")
    if not 0 < hop <= window_len:
        raise ValueError("hop must lie in 1..window_len")
    win_length = window_len if win_length is None else win_length
    if not 0 < win_length <= window_len:
        raise ValueError("win_length must lie in 1..window_len")
    x = np.asarray(samples, dtype=float)
    n_frames = frame_count(x.shape[-1], window_len, hop)
    total = (n_frames - 1) * hop + window_len
    pad = [(0, 0)] * (x.ndim - 1) + [(0, max(0, total - x.shape[-1]))]
    x = np.pad(x, pad)
    frames = np.lib.stride_tricks.sliding_window_view(x, window_len, axis=-1)[..., ::hop, :][..., :n_frames, :]
    return np.fft.rfft(frames * _window(window_len, win_length), axis=-1)


def hz_to_mel(freq_hz):
    """Slaney mel scale: linear below 1 kHz, logarithmic above."""
    f = np.asarray(freq_hz, dtype=float)
    f_sp, min_log_hz = 200.0 / 3, 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = math.log(6.4) / 27.0
    return np.where(f < min_log_hz, f / f_sp, min_log_mel + np.log(np.maximum(f, min_log_hz) / min_log_hz) / logstep)


def mel_to_hz(mels):
    m = np.asarray(mels, dtype=float)
    f_sp, min_log_hz = 200.0 / 3, 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = math.log(6.4) / 27.0
    return np.where(m < min_log_mel, m * f_sp, min_log_hz * np.exp(logstep * (m - min_log_mel)))


@lru_cache(maxsize=16)
def mel_filterbank(sample_rate: int, n_fft: int, mel_bins: int, fmin_hz: float = 0.0, fmax_hz: float = None) -> np.ndarray:
    """Triangular Slaney-style filterbank ``(mel_bins, n_fft // 2 + 1)`` with area normalization."""
    if mel_bins < 8:
        raise ValueError("mel_bins must be at least 8")
    fmax_hz = sample_rate / 2.0 if fmax_hz is None else fmax_hz
    fft_freqs = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin_hz), hz_to_mel(fmax_hz), mel_bins + 2))
    widths = np.diff(edges)
    ramps = edges[:, None] - fft_freqs[None, :]
    lower = -ramps[:-2] / widths[:-1, None]
    upper = ramps[2:] / widths[1:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    weights *= (2.0 / (edges[2:] - edges[:-2]))[:, None]
    weights.flags.writeable = False
    return weights


def mel_spectrogram(spectrogram: np.ndarray, sample_rate: int, mel_bins: int = 64, fmin_hz: float = 0.0,
                    fmax_hz: float = None) -> np.ndarray:
    """Log-mel power map ``(frames, mel_bins)`` in dB with a 1e-10 power floor."""
    n_fft = 2 * (spectrogram.shape[-1] - 1)
    fb = mel_filterbank(sample_rate, n_fft, mel_bins, fmin_hz, fmax_hz)
    power = np.abs(spectrogram) ** 2
    return 10.0 * np.log10(np.maximum(power @ fb.T, LOG_FLOOR))


def bin_intensity(spec_w, spec_x, spec_y, spec_z) -> tuple:
    """Per-bin normalized intensity vectors, shape ``(3, frames, bins)``, and the denominator energy."""
    shapes = {np.shape(s) for s in (spec_w, spec_x, spec_y, spec_z)}
    if len(shapes) != 1:
        raise ValueError("all four spectrograms must share one shape")
    velocity = np.stack([spec_x, spec_y, spec_z])
    active = np.real(np.conj(spec_w)[None] * velocity)
    energy = np.abs(spec_w) ** 2 + (np.abs(velocity) ** 2).sum(axis=0) / 3.0
    return active / (energy + IV_EPS), energy


def intensity_vectors(spec_w, spec_x, spec_y, spec_z, sample_rate: int = 16000, mel_bins: int = 64,
                      fmin_hz: float = 0.0, fmax_hz: float = None) -> np.ndarray:
    """Intensity-vector maps ``(3, frames, mel_bins)`` aggregated onto the mel grid.

    Each mel value is the filter-weighted average of the per-bin normalized
    vectors, so every component stays within [-1, 1].
    """
    iv, _ = bin_intensity(spec_w, spec_x, spec_y, spec_z)
    n_fft = 2 * (np.shape(spec_w)[-1] - 1)
    fb = mel_filterbank(sample_rate, n_fft, mel_bins, fmin_hz, fmax_hz)
    rows = fb.sum(axis=1, keepdims=True)
    averaging = np.divide(fb, rows, out=np.zeros_like(fb), where=rows > 0)
    return iv @ averaging.T


@dataclass
class FeatureStack:
    mel_w: np.ndarray
    mel_x: np.ndarray
    mel_y: np.ndarray
    mel_z: np.ndarray
    iv_x: np.ndarray
    iv_y: np.ndarray
    iv_z: np.ndarray
    frame_rate_hz: float
    mel_bins: int

    def __post_init__(self) -> None:
        shapes = {getattr(self, name).shape for name in MAP_NAMES}
        if len(shapes) != 1:
            raise ValueError(f"feature maps disagree in shape: {shapes}")

    @property
    def shape(self) -> tuple:
        return self.mel_w.shape

    def as_array(self) -> np.ndarray:
        """The seven maps stacked as ``(7, frames, mel_bins)``."""
        return np.stack([getattr(self, name) for name in MAP_NAMES])


def extract_features(foa: np.ndarray, config: FeatureConfig = FeatureConfig()) -> FeatureStack:
    """Seven-map feature stack of a ``(4, samples)`` W, X, Y, Z signal."""
    foa = np.asarray(foa, dtype=float)
    if foa.ndim != 2 or foa.shape[0] != 4:
        raise ValueError(f"expected (4, samples) FOA input, got {foa.shape}")
    spec = stft(foa, config.n_fft, config.hop, config.win_length)
    mels = [mel_spectrogram(s, config.sample_rate, config.mel_bins, config.fmin_hz, config.fmax_hz) for s in spec]
    ivs = intensity_vectors(*spec, sample_rate=config.sample_rate, mel_bins=config.mel_bins,
                            fmin_hz=config.fmin_hz, fmax_hz=config.fmax_hz)
    return FeatureStack(*mels, *ivs, frame_rate_hz=config.frame_rate_hz, mel_bins=config.mel_bins)


# Binary container: little-endian header, then the seven maps as row-major float32.
MAGIC = b"FSTK"
VERSION = 1
_HEADER = struct.Struct("<4sHHIIdI")


def write_features(path, features: FeatureStack) -> None:
    frames, bins = features.shape
    header = _HEADER.pack(MAGIC, VERSION, len(MAP_NAMES), frames, bins, float(features.frame_rate_hz), 0)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(features.as_array(), dtype="<f4").tobytes())


def read_features(path) -> FeatureStack:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise ValueError(f"{path}: truncated feature header")
    magic, version, n_maps, frames, bins, frame_rate, _ = _HEADER.unpack_from(blob)
    if magic != MAGIC or version != VERSION or n_maps != len(MAP_NAMES):
        raise ValueError(f"{path}: not a version-{VERSION} feature container")
    expected = n_maps * frames * bins * 4
    payload = blob[_HEADER.size:]
    if len(payload) != expected:
        raise ValueError(f"{path}: expected {expected} payload bytes, found {len(payload)}")
    maps = np.frombuffer(payload, dtype="<f4").reshape(n_maps, frames, bins).astype(np.float32)
    return FeatureStack(*maps, frame_rate_hz=frame_rate, mel_bins=bins)


def diffuseness_proxy(foa: np.ndarray, window_len: int = 512, hop: int = 160, gate_db: float = -60.0) -> float:
    """Norm of the mean per-bin normalized intensity vector over all active TF bins.

    A single plane wave gives (1/sqrt(2)) / (1/2 + 1/3) = 0.8485; a diffuse field
    averages towards 0. Bins more than ``gate_db`` below the strongest bin are ignored.
    """
    spec = stft(np.asarray(foa, dtype=float), window_len, hop)
    iv, energy = bin_intensity(*spec)
    peak = energy.max()
    if peak <= 0.0:
        return 0.0
    active = energy >= peak * 10.0 ** (gate_db / 10.0)
    return float(np.linalg.norm(iv[:, active].mean(axis=1)))
