"""WAV reading and 32-bit float multichannel writing."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy import signal
from scipy.io import wavfile


def read_wav(path, sample_rate: int = None) -> tuple:
    """Read a WAV file as float64 ``(channels, samples)`` in [-1, 1].

    Integer PCM is scaled by its full-scale value. With ``sample_rate`` set the
    audio is resampled (polyphase) to that rate.
    """
    rate, data = wavfile.read(str(path))
    if data.dtype.kind == "i":
        data = data.astype(np.float64) / float(np.iinfo(data.dtype).max + 1)
    elif data.dtype.kind == "u":
        info = np.iinfo(data.dtype)
        data = (data.astype(np.float64) - (info.max + 1) / 2) / ((info.max + 1) / 2)
    else:
        data = data.astype(np.float64)
    data = data.T if data.ndim == 2 else data[None, :]
    if sample_rate is not None and rate != sample_rate:
        g = np.gcd(int(rate), int(sample_rate))
        data = signal.resample_poly(data, sample_rate // g, rate // g, axis=1)
        rate = sample_rate
    return np.ascontiguousarray(data), int(rate)


def read_mono(path, sample_rate: int = None) -> tuple:
    data, rate = read_wav(path, sample_rate)
    if data.shape[0] != 1:
        raise ValueError(f"{path}: expected a mono file, found {data.shape[0]} channels")
    return data[0], rate


def write_wav(path, data: np.ndarray, sample_rate: int) -> None:
    """Write ``(channels, samples)`` as 32-bit float WAV."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 1:
        data = data[None, :]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(str(path), int(sample_rate), np.ascontiguousarray(data.T))


def write_json(path, payload) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
