"""Scene, source and room records plus the metadata quantization grids."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from foascene.zones import DirectionZone

MAX_SOURCES = 5
CLIP_DURATION_S = 10.0
LANGUAGES = ("en", "zh", "de", "fr", "it", "ja", "es", "pt")
ORDERINGS = ("loudness", "zone", "distance", "name", "onset")

# (grid step, decimals used when printing)
GRIDS = {
    "distance": (0.1, 1),
    "time": (0.1, 1),
    "rt60": (0.1, 1),
    "loudness": (1.0, 0),
    "c50": (1.0, 0),
    "room_volume": (100.0, 0),
}


def quantize_scalar(value: float, kind: str) -> float:
    """Round ``value`` half-up onto the grid for ``kind``.

    Room volumes never quantize below one grid step (100 m^3).
    """
    try:
        step, decimals = GRIDS[kind]
    except KeyError:
        raise ValueError(f"unknown quantity kind {kind!r}") from None
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"cannot quantize non-finite {kind} value {value!r}")
    if kind == "distance" and value <= 0:
        raise ValueError("distance must be positive")
    # the epsilon absorbs binary representation error, e.g. 0.35 / 0.1 = 3.4999...
    steps = math.floor(value / step + 0.5 + 1e-9)
    result = round(steps * step, decimals) + 0.0
    if kind == "room_volume":
        result = max(result, step)
    return result


def on_grid(value: float, kind: str) -> bool:
    return quantize_scalar(value, kind) == value


@dataclass(frozen=True)
class SourceMeta:
    """One directional source. Every field except ``label`` may be absent in a hypothesis."""

    label: str
    language: Optional[str] = None
    onset_s: Optional[float] = None
    offset_s: Optional[float] = None
    zone: Optional[DirectionZone] = None
    distance_m: Optional[float] = None
    loudness_dba: Optional[float] = None
    c50_db: Optional[float] = None

    @property
    def is_speech(self) -> bool:
        return self.language is not None

    @property
    def transcription(self) -> Optional[str]:
        return self.label if self.language is not None else None

    def quantized(self) -> "SourceMeta":
        def q(value, kind):
            return None if value is None else quantize_scalar(value, kind)

        return replace(
            self,
            onset_s=q(self.onset_s, "time"),
            offset_s=q(self.offset_s, "time"),
            distance_m=q(self.distance_m, "distance"),
            loudness_dba=q(self.loudness_dba, "loudness"),
            c50_db=q(self.c50_db, "c50"),
        )

    def validate(self, clip_duration: Optional[float] = CLIP_DURATION_S) -> None:
        """Raise ValueError unless this is a complete, on-grid reference source."""
        if not self.label or not self.label.strip():
            raise ValueError("source label must be non-empty")
        if self.language is not None and self.language not in LANGUAGES:
            raise ValueError(f"unknown language {self.language!r}")
        for name in ("onset_s", "offset_s", "zone", "distance_m", "loudness_dba", "c50_db"):
            if getattr(self, name) is None:
                raise ValueError(f"reference source is missing {name}")
        if not 0 <= self.onset_s < self.offset_s:
            raise ValueError(f"bad interval {self.onset_s}..{self.offset_s}")
        if clip_duration is not None and self.offset_s > clip_duration + 1e-9:
            raise ValueError(f"offset {self.offset_s} beyond clip end")
        if self.distance_m <= 0:
            raise ValueError("distance must be positive")
        for name, kind in (
            ("onset_s", "time"),
            ("offset_s", "time"),
            ("distance_m", "distance"),
            ("loudness_dba", "loudness"),
            ("c50_db", "c50"),
        ):
            if not on_grid(getattr(self, name), kind):
                raise ValueError(f"{name}={getattr(self, name)} is off its grid")

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "language": self.language,
            "onset_s": self.onset_s,
            "offset_s": self.offset_s,
            "zone": None if self.zone is None else self.zone.name,
            "distance_m": self.distance_m,
            "loudness_dba": self.loudness_dba,
            "c50_db": self.c50_db,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SourceMeta":
        zone = data.get("zone")
        return cls(
            label=data["label"],
            language=data.get("language"),
            onset_s=_opt_float(data.get("onset_s")),
            offset_s=_opt_float(data.get("offset_s")),
            zone=None if zone is None else DirectionZone.from_name(zone),
            distance_m=_opt_float(data.get("distance_m")),
            loudness_dba=_opt_float(data.get("loudness_dba")),
            c50_db=_opt_float(data.get("c50_db")),
        )


# The scoring code treats reference and hypothesis sources uniformly.
SourceTuple = SourceMeta


def _opt_float(value) -> Optional[float]:
    return None if value is None else float(value)


def _missing_last(value, descending: bool = False):
    if value is None:
        return (1, 0.0)
    return (0, -value if descending else value)


def source_sort_key(order_by: str):
    """Sort key for ``order_by``; ties break on onset, then label."""

    def tail(s: SourceMeta):
        return (_missing_last(s.onset_s), s.label)

    if order_by == "loudness":
        return lambda s: (_missing_last(s.loudness_dba, descending=True),) + tail(s)
    if order_by == "zone":
        return lambda s: (_missing_last(None if s.zone is None else s.zone.index),) + tail(s)
    if order_by == "distance":
        return lambda s: (_missing_last(s.distance_m),) + tail(s)
    if order_by == "name":
        return lambda s: (s.label.casefold(),) + tail(s)
    if order_by == "onset":
        return tail
    raise ValueError(f"unknown ordering {order_by!r}; expected one of {ORDERINGS}")


def sort_sources(sources: Iterable[SourceMeta], order_by: str = "loudness") -> tuple:
    return tuple(sorted(sources, key=source_sort_key(order_by)))


@dataclass(frozen=True)
class SceneMeta:
    """Scene-level fields and the ordered source list.

    Reference scenes keep ``sources`` sorted by decreasing loudness and
    ``n_src == len(sources)``; parsed hypotheses may violate both.
    """

    room_volume_m3: Optional[float] = None
    rt60_s: Optional[float] = None
    n_src: Optional[int] = None
    noise_label: Optional[str] = None
    noise_loudness_db: Optional[float] = None
    sources: tuple = ()

    def __post_init__(self) -> None:
        if not isinstance(self.sources, tuple):
            object.__setattr__(self, "sources", tuple(self.sources))

    @classmethod
    def build(
        cls,
        room_volume_m3: float,
        rt60_s: float,
        noise_label: str,
        noise_loudness_db: float,
        sources: Sequence[SourceMeta],
    ) -> "SceneMeta":
        """Quantize every field and apply the loudness ordering."""
        quantized = sort_sources((s.quantized() for s in sources), "loudness")
        return cls(
            room_volume_m3=quantize_scalar(room_volume_m3, "room_volume"),
            rt60_s=quantize_scalar(rt60_s, "rt60"),
            n_src=len(quantized),
            noise_label=noise_label,
            noise_loudness_db=quantize_scalar(noise_loudness_db, "loudness"),
            sources=quantized,
        )

    def reordered(self, order_by: str) -> "SceneMeta":
        return replace(self, sources=sort_sources(self.sources, order_by))

    def validate(self, clip_duration: Optional[float] = CLIP_DURATION_S, max_sources: int = MAX_SOURCES) -> None:
        for name in ("room_volume_m3", "rt60_s", "n_src", "noise_label", "noise_loudness_db"):
            if getattr(self, name) is None:
                raise ValueError(f"reference scene is missing {name}")
        if self.n_src != len(self.sources):
            raise ValueError(f"n_src={self.n_src} but {len(self.sources)} sources")
        if not 0 <= self.n_src <= max_sources:
            raise ValueError(f"n_src={self.n_src} outside 0..{max_sources}")
        if not on_grid(self.room_volume_m3, "room_volume"):
            raise ValueError("room volume off grid")
        if not on_grid(self.rt60_s, "rt60"):
            raise ValueError("RT60 off grid")
        if not on_grid(self.noise_loudness_db, "loudness"):
            raise ValueError("noise loudness off grid")
        for source in self.sources:
            source.validate(clip_duration)
        if sort_sources(self.sources, "loudness") != self.sources:
            raise ValueError("sources are not in decreasing loudness order")

    def to_dict(self) -> dict:
        return {
            "room_volume_m3": self.room_volume_m3,
            "rt60_s": self.rt60_s,
            "n_src": self.n_src,
            "noise_label": self.noise_label,
            "noise_loudness_db": self.noise_loudness_db,
            "sources": [s.to_dict() for s in self.sources],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SceneMeta":
        n_src = data.get("n_src")
        return cls(
            room_volume_m3=_opt_float(data.get("room_volume_m3")),
            rt60_s=_opt_float(data.get("rt60_s")),
            n_src=None if n_src is None else int(n_src),
            noise_label=data.get("noise_label"),
            noise_loudness_db=_opt_float(data.get("noise_loudness_db")),
            sources=tuple(SourceMeta.from_dict(s) for s in data.get("sources", [])),
        )


# wall order for absorption coefficients
WALLS = ("x0", "x1", "y0", "y1", "z0", "z1")


@dataclass(frozen=True)
class RoomSpec:
    """Shoebox room with a microphone and 64 candidate source positions (meters)."""

    dimensions: tuple
    mic_position: tuple
    wall_absorption: tuple
    candidate_source_positions: tuple = field(default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "dimensions", tuple(float(v) for v in self.dimensions))
        object.__setattr__(self, "mic_position", tuple(float(v) for v in self.mic_position))
        absorption = self.wall_absorption
        if np.ndim(absorption) == 0:
            absorption = (absorption,) * 6
        object.__setattr__(self, "wall_absorption", tuple(float(a) for a in absorption))
        object.__setattr__(
            self,
            "candidate_source_positions",
            tuple(tuple(float(v) for v in p) for p in self.candidate_source_positions),
        )
        if len(self.dimensions) != 3 or len(self.mic_position) != 3:
            raise ValueError("dimensions and mic_position must be 3-vectors")
        if len(self.wall_absorption) != 6:
            raise ValueError("wall_absorption needs one coefficient per surface")
        if any(not 0 < a <= 1 for a in self.wall_absorption):
            raise ValueError("absorption coefficients must lie in (0, 1]")

    @property
    def volume(self) -> float:
        lx, ly, lz = self.dimensions
        return lx * ly * lz

    @property
    def surface_areas(self) -> np.ndarray:
        """Area of each wall, in WALLS order."""
        lx, ly, lz = self.dimensions
        return np.array([ly * lz, ly * lz, lx * lz, lx * lz, lx * ly, lx * ly])

    def sabine_rt60(self) -> float:
        return 0.161 * self.volume / float(np.dot(self.surface_areas, self.wall_absorption))

    def eyring_rt60(self) -> float:
        areas = self.surface_areas
        mean_alpha = float(np.dot(areas, self.wall_absorption) / areas.sum())
        if mean_alpha >= 1.0:
            return 0.0
        return 0.161 * self.volume / (-areas.sum() * math.log(1.0 - mean_alpha))

    def contains(self, point, margin: float = 0.0) -> bool:
        p = np.asarray(point, dtype=float)
        dims = np.asarray(self.dimensions)
        return bool(np.all(p > margin) and np.all(p < dims - margin))

    def to_dict(self) -> dict:
        return {
            "dimensions": list(self.dimensions),
            "mic_position": list(self.mic_position),
            "wall_absorption": list(self.wall_absorption),
            "candidate_source_positions": [list(p) for p in self.candidate_source_positions],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RoomSpec":
        return cls(
            dimensions=data["dimensions"],
            mic_position=data["mic_position"],
            wall_absorption=data["wall_absorption"],
            candidate_source_positions=data.get("candidate_source_positions", ()),
        )
