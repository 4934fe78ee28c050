"""A small synthetic source pool for tests, demos and the acceptance runs.

The real datasets are not redistributable, so this writes tonal bursts,
noise-modulated "speech" stand-ins and two noise beds, with a ``pool.json``
in the format read by :meth:`foascene.synth.SourcePool.load`.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from foascene.audio_io import write_wav

SOUND_LABELS = (
    "dog barking", "car horn", "door slam", "bird chirping",
    "glass breaking", "phone ringing", "church bell", "keyboard typing",
)
SPEECH = (("en", "hello there"), ("de", "guten morgen"))
BACKGROUNDS = ("air conditioner hum", "street traffic")


def _burst(rng: np.random.Generator, seconds: float, f0: float, fs: int) -> np.ndarray:
    t = np.arange(int(seconds * fs)) / fs
    envelope = np.sin(2 * np.pi * rng.uniform(0.8, 2.0) * t) ** 2
    tone = sum(np.sin(2 * np.pi * k * f0 * t) / k for k in (1, 2, 3))
    return 0.3 * envelope * (tone + 0.3 * rng.standard_normal(t.size))


def _babble(rng: np.random.Generator, seconds: float, fs: int) -> np.ndarray:
    n = int(seconds * fs)
    syllables = np.repeat(rng.uniform(0.0, 1.0, n // 3200 + 1) > 0.3, 3200)[:n]
    carrier = np.convolve(rng.standard_normal(n), np.hanning(24), mode="same")
    return 0.2 * syllables * carrier


def make_demo_pool(out_dir, seed: int = 0, sample_rate: int = 16000) -> Path:
    """Write the demo pool into ``out_dir`` and return the path of its ``pool.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for i, label in enumerate(SOUND_LABELS):
        name = f"sound_{i:02d}.wav"
        write_wav(out / name, _burst(rng, 4.0 + i, 150.0 * (i + 1), sample_rate), sample_rate)
        entries.append({"audio_path": name, "label": label})
    for i, (language, text) in enumerate(SPEECH):
        name = f"speech_{i:02d}.wav"
        write_wav(out / name, _babble(rng, 5.0, sample_rate), sample_rate)
        entries.append({"audio_path": name, "label": "speech", "is_speech": True,
                        "language": language, "transcription": text})
    for i, label in enumerate(BACKGROUNDS):
        name = f"background_{i:02d}.wav"
        noise = rng.standard_normal(sample_rate * 12)
        if i == 0:
            noise = np.convolve(noise, np.ones(16) / 16, mode="same")
        write_wav(out / name, 0.1 * noise / np.max(np.abs(noise)), sample_rate)
        entries.append({"audio_path": name, "label": label, "multi_source": True})
    path = out / "pool.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(entries, fh, indent=1)
    return path
