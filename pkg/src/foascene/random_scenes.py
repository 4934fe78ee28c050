"""Random on-grid scenes and perturbed hypotheses for property tests and acceptance runs."""
from __future__ import annotations

from dataclasses import replace
from typing import Optional

import numpy as np

from foascene.scene import LANGUAGES, MAX_SOURCES, SceneMeta, SourceMeta
from foascene.zones import ALL_ZONES

LABELS = (
    "dog barking", "dog howling", "small dog barking", "cat meowing", "car horn", "car engine idling",
    "door slam", "door knock", "bird chirping", "birds singing", "glass breaking", "phone ringing",
    "footsteps on gravel", "church bell", "water running", "keyboard typing",
)
TRANSCRIPTS = (
    "hello there", "the cat sat on the mat", "good morning everyone", "please close the door",
    "where is the train station", "it is raining again today",
)
NOISE_LABELS = ("air conditioner hum", "street traffic", "crowd babble", "rain on the roof", "office ambience")


def random_source(rng: np.random.Generator, speech_prob: float = 0.25) -> SourceMeta:
    if rng.random() < speech_prob:
        label = TRANSCRIPTS[rng.integers(len(TRANSCRIPTS))]
        language = LANGUAGES[rng.integers(len(LANGUAGES))]
    else:
        label = LABELS[rng.integers(len(LABELS))]
        language = None
    onset = int(rng.integers(0, 95))
    offset = int(rng.integers(onset + 1, 101))
    return SourceMeta(
        label=label,
        language=language,
        onset_s=onset / 10,
        offset_s=offset / 10,
        zone=ALL_ZONES[rng.integers(len(ALL_ZONES))],
        distance_m=int(rng.integers(1, 100)) / 10,
        loudness_dba=float(rng.integers(-60, 1)),
        c50_db=float(rng.integers(-10, 41)),
    )


def random_scene(rng: np.random.Generator, n_src: Optional[int] = None, max_sources: int = MAX_SOURCES) -> SceneMeta:
    """A valid quantized reference scene with 1..max_sources sources (or exactly ``n_src``)."""
    if n_src is None:
        n_src = int(rng.integers(1, max_sources + 1))
    return SceneMeta.build(
        room_volume_m3=float(rng.integers(1, 38)) * 100,
        rt60_s=int(rng.integers(1, 31)) / 10,
        noise_label=NOISE_LABELS[rng.integers(len(NOISE_LABELS))],
        noise_loudness_db=float(rng.integers(-70, -20)),
        sources=[random_source(rng) for _ in range(n_src)],
    )


def perturb_source(rng: np.random.Generator, source: SourceMeta, strength: float = 0.5) -> SourceMeta:
    """Randomly corrupt some attributes of ``source`` (may drop optional ones)."""
    changes = {}
    if rng.random() < strength:
        changes["label"] = LABELS[rng.integers(len(LABELS))]
        changes["language"] = None
    if rng.random() < strength:
        changes["zone"] = ALL_ZONES[rng.integers(len(ALL_ZONES))]
    if rng.random() < strength:
        onset = int(rng.integers(0, 95))
        changes["onset_s"] = onset / 10
        changes["offset_s"] = int(rng.integers(onset + 1, 101)) / 10
    if rng.random() < strength:
        changes["distance_m"] = int(rng.integers(1, 100)) / 10
    if rng.random() < strength:
        changes["loudness_dba"] = float(rng.integers(-60, 1))
    if rng.random() < strength:
        changes["c50_db"] = float(rng.integers(-10, 41))
    for name in ("distance_m", "loudness_dba", "c50_db"):
        if rng.random() < strength / 5:
            changes[name] = None
    return replace(source, **changes)


def random_hypothesis(rng: np.random.Generator, ref: SceneMeta, max_sources: int = MAX_SOURCES) -> SceneMeta:
    """A hypothesis scene derived from ``ref``: perturbed sources, drops, insertions, shuffled order."""
    sources = [perturb_source(rng, s, float(rng.uniform(0.0, 0.8))) for s in ref.sources if rng.random() > 0.15]
    while len(sources) < max_sources and rng.random() < 0.3:
        sources.append(random_source(rng))
    if not sources:
        sources.append(random_source(rng))
    order = rng.permutation(len(sources))
    n_src = len(sources) if rng.random() < 0.8 else int(rng.integers(0, max_sources + 1))
    return SceneMeta(
        room_volume_m3=ref.room_volume_m3 * float(2.0 ** rng.integers(-2, 3)),
        rt60_s=round(max(0.1, ref.rt60_s + int(rng.integers(-5, 6)) / 10), 1),
        n_src=n_src,
        noise_label=NOISE_LABELS[rng.integers(len(NOISE_LABELS))],
        noise_loudness_db=ref.noise_loudness_db,
        sources=tuple(sources[i] for i in order),
    )

