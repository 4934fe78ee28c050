"""Mixture planning and rendering: mono pool files + room RIRs -> FOA clips with metadata."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from scipy import signal

from foascene.audio_io import read_mono
from foascene.rir import FoaRir, InsufficientDecay, estimate_rt60, simulate_rir
from foascene.scene import CLIP_DURATION_S, LANGUAGES, MAX_SOURCES, RoomSpec, SceneMeta, SourceMeta
from foascene.zones import quantize_vector, vector_to_angles

log = logging.getLogger(__name__)

LOUDNESS_FLOOR_DB = -120.0


class EmptyPool(ValueError):
    pass


class ClippingError(RuntimeError):
    pass


# ------------------------------------------------------------------ levels


def a_weighting_db(freqs_hz) -> np.ndarray:
    """IEC 61672 A-weighting magnitude in dB, normalized to 0 dB at 1 kHz."""
    f2 = np.asarray(freqs_hz, dtype=float) ** 2

    def response(f2):
        num = 12194.0 ** 2 * f2 ** 2
        den = (f2 + 20.6 ** 2) * np.sqrt((f2 + 107.7 ** 2) * (f2 + 737.9 ** 2)) * (f2 + 12194.0 ** 2)
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(num / den)

    return response(f2) - response(np.array(1000.0 ** 2))


def compute_loudness_dba(samples: np.ndarray, sample_rate: float, interval: Optional[tuple] = None) -> float:
    """A-weighted RMS level in dB re full scale, over ``interval`` seconds when given.

    The weighting is applied in the frequency domain over the analysed span.
    Digital silence returns the -120 dB floor.
    """
    x = np.asarray(samples, dtype=float)
    if interval is not None:
        start = max(0, int(round(interval[0] * sample_rate)))
        stop = min(x.size, int(round(interval[1] * sample_rate)))
        x = x[start:stop]
    if x.size == 0:
        raise ValueError("loudness of an empty signal")
    spectrum = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(x.size, 1.0 / sample_rate)
    weight = np.zeros_like(freqs)
    nz = freqs > 0
    weight[nz] = 10.0 ** (a_weighting_db(freqs[nz]) / 10.0)
    power = weight * np.abs(spectrum) ** 2
    # one-sided spectrum: interior bins stand for two
    power[1:] *= 2.0
    if x.size % 2 == 0:
        power[-1] /= 2.0
    mean_square = power.sum() / x.size ** 2
    if mean_square <= 0.0:
        return LOUDNESS_FLOOR_DB
    return max(LOUDNESS_FLOOR_DB, 10.0 * math.log10(mean_square))


def active_interval(
    samples: np.ndarray,
    sample_rate: float,
    threshold_db: float = -40.0,
    frame_s: float = 0.01,
    hangover_s: float = 0.1,
) -> Optional[tuple]:
    """(onset, offset) in seconds of the span where the frame energy is within
    ``threshold_db`` of the peak frame. Gaps up to ``hangover_s`` are bridged
    when segments are formed; the span runs from the first segment to the last.
    """
    x = np.asarray(samples, dtype=float)
    hop = max(1, int(round(frame_s * sample_rate)))
    n_frames = int(math.ceil(x.size / hop))
    padded = np.zeros(n_frames * hop)
    padded[: x.size] = x
    energy = (padded.reshape(n_frames, hop) ** 2).mean(axis=1)
    peak = energy.max() if n_frames else 0.0
    if peak <= 0.0:
        return None
    active = energy >= peak * 10.0 ** (threshold_db / 10.0)
    segments = active_segments(active, int(round(hangover_s / frame_s)))
    onset = segments[0][0] * hop / sample_rate
    offset = min(segments[-1][1] * hop, x.size) / sample_rate
    return onset, offset


def active_segments(active: np.ndarray, hangover_frames: int = 0) -> List[tuple]:
    """[start, stop) frame ranges of ``active``, merging gaps of at most ``hangover_frames``."""
    idx = np.flatnonzero(active)
    if idx.size == 0:
        return []
    segments = []
    start = prev = idx[0]
    for i in idx[1:]:
        if i - prev - 1 > hangover_frames:
            segments.append((int(start), int(prev) + 1))
            start = i
        prev = i
    segments.append((int(start), int(prev) + 1))
    return segments


def shelf_filter(kind: str, freq_hz: float, gain_db: float, sample_rate: float) -> tuple:
    """Biquad low/high shelf (audio-EQ cookbook, slope 1) as (b, a)."""
    amp = 10.0 ** (gain_db / 40.0)
    w0 = 2.0 * math.pi * freq_hz / sample_rate
    cos_w, alpha = math.cos(w0), math.sin(w0) / 2.0 * math.sqrt(2.0)
    root = 2.0 * math.sqrt(amp) * alpha
    if kind == "low":
        b = [amp * ((amp + 1) - (amp - 1) * cos_w + root),
             2 * amp * ((amp - 1) - (amp + 1) * cos_w),
             amp * ((amp + 1) - (amp - 1) * cos_w - root)]
        a = [(amp + 1) + (amp - 1) * cos_w + root,
             -2 * ((amp - 1) + (amp + 1) * cos_w),
             (amp + 1) + (amp - 1) * cos_w - root]
    elif kind == "high":
        b = [amp * ((amp + 1) + (amp - 1) * cos_w + root),
             -2 * amp * ((amp - 1) + (amp + 1) * cos_w),
             amp * ((amp + 1) + (amp - 1) * cos_w - root)]
        a = [(amp + 1) - (amp - 1) * cos_w + root,
             2 * ((amp - 1) - (amp + 1) * cos_w),
             (amp + 1) - (amp - 1) * cos_w - root]
    else:
        raise ValueError(f"unknown shelf kind {kind!r}")
    return np.array(b) / a[0], np.array(a) / a[0]


# -------------------------------------------------------------------- pool


@dataclass(frozen=True)
class PoolEntry:
    audio_path: str
    label: str
    is_speech: bool = False
    language: Optional[str] = None
    transcription: Optional[str] = None
    multi_source: bool = False
    duration_s: Optional[float] = None

    def scene_label(self) -> tuple:
        """(label, language) as written into the scene metadata."""
        if self.is_speech and self.transcription:
            return self.transcription, self.language
        return self.label, None


@dataclass
class SourcePool:
    entries: List[PoolEntry]

    @property
    def single_source(self) -> List[int]:
        return [i for i, e in enumerate(self.entries) if not e.multi_source]

    @property
    def backgrounds(self) -> List[int]:
        return [i for i, e in enumerate(self.entries) if e.multi_source]

    @classmethod
    def load(cls, path) -> "SourcePool":
        """Read a pool manifest: a JSON list of entries (or ``{"entries": [...]}``).

        Relative audio paths resolve against the manifest's directory.
        """
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if isinstance(data, dict):
            data = data["entries"]
        entries = []
        for item in data:
            audio = Path(item["audio_path"])
            if not audio.is_absolute():
                audio = path.parent / audio
            language = item.get("language")
            if language is not None and language not in LANGUAGES:
                raise ValueError(f"unsupported language {language!r} for {audio}")
            duration = item.get("duration_s")
            if duration is None:
                duration = _wav_duration(audio)
            entries.append(PoolEntry(
                audio_path=str(audio),
                label=item["label"],
                is_speech=bool(item.get("is_speech", False)),
                language=language,
                transcription=item.get("transcription"),
                multi_source=bool(item.get("multi_source", False)),
                duration_s=float(duration),
            ))
        return cls(entries)


def _wav_duration(path) -> float:
    from scipy.io import wavfile

    rate, data = wavfile.read(str(path), mmap=True)
    return data.shape[0] / float(rate)


# ------------------------------------------------------------------ config


@dataclass
class SynthConfig:
    sample_rate: int = 16000
    clip_len_s: float = CLIP_DURATION_S
    max_sources: int = 4
    snr_range: tuple = (0.0, 30.0)
    background_level_range: tuple = (-60.0, -40.0)
    eq_gain_db: float = 6.0
    eq_freq_range: tuple = (100.0, 4000.0)
    min_event_s: float = 1.0
    absorption_range: tuple = (0.05, 0.6)
    max_rir_duration: float = 2.0
    headroom_db: float = -1.0
    activity_threshold_db: float = -40.0
    hangover_s: float = 0.1

    def __post_init__(self) -> None:
        if not 1 <= self.max_sources <= MAX_SOURCES:
            raise ValueError(f"max_sources must lie in 1..{MAX_SOURCES}")


# ------------------------------------------------------------------- plans


@dataclass(frozen=True)
class EqParams:
    low_freq_hz: float
    low_gain_db: float
    high_freq_hz: float
    high_gain_db: float


@dataclass(frozen=True)
class PlannedSource:
    entry_index: int
    position_index: int
    onset_s: float
    file_offset_s: float
    duration_s: float
    snr_db: float
    eq: EqParams
    gain_db: float = 0.0


@dataclass(frozen=True)
class PlannedBackground:
    entry_index: int
    level_db: float
    file_offset_s: float


@dataclass(frozen=True)
class MixturePlan:
    room_index: int
    room: RoomSpec
    sources: tuple
    background: PlannedBackground
    clip_len_s: float
    sample_rate: int
    rng_seed: int

    def to_dict(self) -> dict:
        return {
            "room_index": self.room_index,
            "room": self.room.to_dict(),
            "sources": [asdict(s) for s in self.sources],
            "background": asdict(self.background),
            "clip_len_s": self.clip_len_s,
            "sample_rate": self.sample_rate,
            "rng_seed": self.rng_seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "MixturePlan":
        sources = tuple(
            PlannedSource(**{**s, "eq": EqParams(**s["eq"])}) for s in data["sources"]
        )
        return cls(
            room_index=data["room_index"],
            room=RoomSpec.from_dict(data["room"]),
            sources=sources,
            background=PlannedBackground(**data["background"]),
            clip_len_s=data["clip_len_s"],
            sample_rate=data["sample_rate"],
            rng_seed=data["rng_seed"],
        )

    def with_gain(self, source_index: int, gain_db: float) -> "MixturePlan":
        from dataclasses import replace

        sources = list(self.sources)
        sources[source_index] = replace(sources[source_index], gain_db=gain_db)
        return replace(self, sources=tuple(sources))


def plan_mixture(pool: SourcePool, rooms: Sequence[RoomSpec], config: SynthConfig, seed: int) -> MixturePlan:
    """Draw a deterministic mixture plan.

    The source count is uniform in 1..max_sources (capped by the number of
    single-source pool entries); sources get distinct pool entries and
    distinct candidate positions.
    """
    singles, backgrounds = pool.single_source, pool.backgrounds
    if not singles:
        raise EmptyPool("pool has no single-source entries")
    if not backgrounds:
        raise EmptyPool("pool has no multi-source/ambient background entries")
    if not rooms:
        raise EmptyPool("no rooms to place sources in")
    rng = np.random.default_rng(seed)
    room_index = int(rng.integers(len(rooms)))
    room = rooms[room_index]
    n = int(rng.integers(1, config.max_sources + 1))
    n = min(n, len(singles), len(room.candidate_source_positions))
    entry_ids = rng.choice(singles, size=n, replace=False)
    position_ids = rng.choice(len(room.candidate_source_positions), size=n, replace=False)
    clip = config.clip_len_s
    sources = []
    for entry_id, position_id in zip(entry_ids, position_ids):
        entry = pool.entries[int(entry_id)]
        longest = min(entry.duration_s, clip)
        shortest = min(config.min_event_s, longest)
        duration = float(rng.uniform(shortest, longest))
        file_offset = float(rng.uniform(0.0, entry.duration_s - duration))
        onset = float(rng.uniform(0.0, clip - duration))
        lo_f, hi_f = np.log(config.eq_freq_range)
        eq = EqParams(
            low_freq_hz=float(np.exp(rng.uniform(lo_f, hi_f))),
            low_gain_db=float(rng.uniform(-config.eq_gain_db, config.eq_gain_db)),
            high_freq_hz=float(np.exp(rng.uniform(lo_f, hi_f))),
            high_gain_db=float(rng.uniform(-config.eq_gain_db, config.eq_gain_db)),
        )
        sources.append(PlannedSource(
            entry_index=int(entry_id),
            position_index=int(position_id),
            onset_s=onset,
            file_offset_s=file_offset,
            duration_s=duration,
            snr_db=float(rng.uniform(*config.snr_range)),
            eq=eq,
        ))
    bg_id = int(rng.choice(backgrounds))
    bg_entry = pool.entries[bg_id]
    background = PlannedBackground(
        entry_index=bg_id,
        level_db=float(rng.uniform(*config.background_level_range)),
        file_offset_s=float(rng.uniform(0.0, max(0.0, bg_entry.duration_s - clip))),
    )
    return MixturePlan(
        room_index=room_index,
        room=room,
        sources=tuple(sources),
        background=background,
        clip_len_s=clip,
        sample_rate=config.sample_rate,
        rng_seed=int(seed),
    )


# ------------------------------------------------------------------- rooms


@dataclass
class RoomBank:
    """A room with the impulse responses of all its candidate positions."""

    room: RoomSpec
    rirs: List[FoaRir]
    rt60_s: float

    def diffuse_rir(self) -> np.ndarray:
        """Sum of all candidate RIRs scaled by 1/sqrt(count)."""
        length = max(r.data.shape[1] for r in self.rirs)
        total = np.zeros((4, length))
        for rir in self.rirs:
            total[:, : rir.data.shape[1]] += rir.data
        return total / math.sqrt(len(self.rirs))


def room_rt60(rirs: Sequence[FoaRir], room: RoomSpec) -> float:
    """Median Schroeder RT60 of the omni channels; Eyring when none decays far enough."""
    estimates = []
    for rir in rirs:
        try:
            estimates.append(estimate_rt60(rir.w, rir.sample_rate_hz))
        except InsufficientDecay:
            continue
    if estimates:
        return float(np.median(estimates))
    return room.eyring_rt60()


def build_room_bank(room: RoomSpec, sample_rate: int = 16000, max_duration: float = 2.0) -> RoomBank:
    rirs = [
        simulate_rir(room, pos, sample_rate=sample_rate, max_duration=max_duration)
        for pos in room.candidate_source_positions
    ]
    return RoomBank(room=room, rirs=rirs, rt60_s=room_rt60(rirs, room))


# --------------------------------------------------------------- rendering


@dataclass
class MixtureResult:
    foa: np.ndarray
    stems: List[np.ndarray]
    background: np.ndarray
    meta: SceneMeta
    continuous: dict
    warnings: List[str] = field(default_factory=list)
    kept_sources: List[int] = field(default_factory=list)


def _segment(audio: np.ndarray, offset: int, length: int, loop: bool = False) -> np.ndarray:
    if loop and audio.size:
        reps = int(math.ceil((offset + length) / audio.size))
        audio = np.tile(audio, max(reps, 1))
    out = np.zeros(length)
    piece = audio[offset: offset + length]
    out[: piece.size] = piece
    return out


def _convolve(mono: np.ndarray, rir: np.ndarray, start: int, length: int) -> np.ndarray:
    """4-channel convolution of ``mono`` with ``rir`` placed at ``start`` samples, cut to ``length``."""
    wet = signal.fftconvolve(mono[None, :], rir, axes=1)
    out = np.zeros((4, length))
    stop = min(length, start + wet.shape[1])
    out[:, start:stop] = wet[:, : stop - start]
    return out


def render_mixture(
    plan: MixturePlan,
    pool: SourcePool,
    bank: RoomBank,
    config: Optional[SynthConfig] = None,
) -> MixtureResult:
    """Render the FOA mixture, stems, background and quantized metadata of a plan.

    Each source is EQ'd, convolved with its position's RIR and scaled so its
    A-weighted level over its active interval sits ``snr_db`` above the
    background level, then offset by ``gain_db``. If the mixture peak exceeds
    the headroom, every component is scaled by the same factor.
    """
    config = config or SynthConfig(sample_rate=plan.sample_rate, clip_len_s=plan.clip_len_s)
    fs = plan.sample_rate
    n = int(round(plan.clip_len_s * fs))
    room = plan.room
    mic = np.asarray(room.mic_position)
    warnings: List[str] = []

    bg_entry = pool.entries[plan.background.entry_index]
    bg_audio, _ = read_mono(bg_entry.audio_path, fs)
    bg_dry = _segment(bg_audio, int(round(plan.background.file_offset_s * fs)), n, loop=True)
    background = _convolve(bg_dry, bank.diffuse_rir(), 0, n)
    bg_level = compute_loudness_dba(background[0], fs)
    if bg_level <= LOUDNESS_FLOOR_DB:
        raise ValueError(f"background {bg_entry.audio_path} is silent")
    background *= 10.0 ** ((plan.background.level_db - bg_level) / 20.0)

    stems, kept, intervals = [], [], []
    for i, planned in enumerate(plan.sources):
        entry = pool.entries[planned.entry_index]
        audio, _ = read_mono(entry.audio_path, fs)
        dry = _segment(audio, int(round(planned.file_offset_s * fs)), int(round(planned.duration_s * fs)))
        eq = planned.eq
        for kind, freq, gain in (("low", eq.low_freq_hz, eq.low_gain_db), ("high", eq.high_freq_hz, eq.high_gain_db)):
            b, a = shelf_filter(kind, freq, gain, fs)
            dry = signal.lfilter(b, a, dry)
        stem = _convolve(dry, bank.rirs[planned.position_index].data, int(round(planned.onset_s * fs)), n)
        interval = active_interval(stem[0], fs, config.activity_threshold_db, hangover_s=config.hangover_s)
        if interval is None:
            warnings.append(f"source {i} ({entry.audio_path}) is silent and was dropped")
            log.warning(warnings[-1])
            continue
        level = compute_loudness_dba(stem[0], fs, interval)
        target = plan.background.level_db + planned.snr_db
        stem *= 10.0 ** ((target - level + planned.gain_db) / 20.0)
        stems.append(stem)
        kept.append(i)
        intervals.append(interval)

    mix = _sum_components(background, stems)
    limit = 10.0 ** (config.headroom_db / 20.0)
    peak = float(np.max(np.abs(mix))) if mix.size else 0.0
    headroom_gain_db = 0.0
    if peak > limit:
        scale = limit / peak
        background = background * scale
        stems = [s * scale for s in stems]
        mix = _sum_components(background, stems)
        headroom_gain_db = 20 * math.log10(scale)
        warnings.append(f"mixture scaled by {headroom_gain_db:.2f} dB for headroom")
    if not np.all(np.isfinite(mix)) or float(np.max(np.abs(mix), initial=0.0)) > 1.0:
        raise ClippingError("mixture exceeds full scale after headroom normalization")

    sources, continuous = [], []
    for i, stem, interval in zip(kept, stems, intervals):
        planned = plan.sources[i]
        entry = pool.entries[planned.entry_index]
        rir = bank.rirs[planned.position_index]
        position = np.asarray(room.candidate_source_positions[planned.position_index])
        direction = position - mic
        azimuth, elevation = vector_to_angles(direction)
        loudness = compute_loudness_dba(stem[0], fs, interval)
        label, language = entry.scene_label()
        record = {
            "label": label,
            "language": language,
            "onset_s": interval[0],
            "offset_s": interval[1],
            "azimuth_deg": azimuth,
            "elevation_deg": elevation,
            "zone": quantize_vector(direction).name,
            "distance_m": float(np.linalg.norm(direction)),
            "loudness_dba": loudness,
            "c50_db": rir.c50_db,
            "snr_db": loudness - compute_loudness_dba(background[0], fs),
            "plan_index": i,
        }
        continuous.append(record)
        sources.append(_source_meta(record))

    noise_level = compute_loudness_dba(background[0], fs)
    meta = SceneMeta.build(
        room_volume_m3=room.volume,
        rt60_s=bank.rt60_s,
        noise_label=bg_entry.label,
        noise_loudness_db=noise_level,
        sources=sources,
    )
    summary = {
        "room_volume_m3": room.volume,
        "rt60_s": bank.rt60_s,
        "noise_loudness_db": noise_level,
        "headroom_gain_db": headroom_gain_db,
        "sources": continuous,
    }
    return MixtureResult(
        foa=mix, stems=stems, background=background, meta=meta,
        continuous=summary, warnings=warnings, kept_sources=kept,
    )


def _sum_components(background: np.ndarray, stems: Sequence[np.ndarray]) -> np.ndarray:
    mix = background.copy()
    for stem in stems:
        mix += stem
    return mix


def _source_meta(record: dict) -> SourceMeta:
    from foascene.scene import quantize_scalar
    from foascene.zones import DirectionZone

    onset = quantize_scalar(record["onset_s"], "time")
    offset = quantize_scalar(record["offset_s"], "time")
    if offset <= onset:
        offset = quantize_scalar(onset + 0.1, "time")
    return SourceMeta(
        label=record["label"],
        language=record["language"],
        onset_s=onset,
        offset_s=offset,
        zone=DirectionZone.from_name(record["zone"]),
        distance_m=record["distance_m"],
        loudness_dba=record["loudness_dba"],
        c50_db=record["c50_db"],
    )
