"""Direction quantization onto 26 sphere zones.

Frame: +x front, +y left, +z up. Azimuth is counterclockwise from the front
in degrees, wrapped to [-180, 180); elevation is in [-90, 90].

The sphere is cut into three elevation bands of eight 45-degree azimuth
octants each, plus two polar caps ("above" and "below").
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

BANDS = ("above", "upper", "horizontal", "lower", "below")
POLAR_BANDS = ("above", "below")
OCTANTS = (
    "front",
    "front-left",
    "left",
    "back-left",
    "back",
    "back-right",
    "right",
    "front-right",
)
OCTANT_CENTERS_DEG = {name: (45.0 * i if i <= 4 else 45.0 * i - 360.0) for i, name in enumerate(OCTANTS)}
BAND_CENTERS_DEG = {"above": 90.0, "upper": 45.0, "horizontal": 0.0, "lower": -45.0, "below": -90.0}

HORIZONTAL_LIMIT_DEG = 22.5
POLAR_LIMIT_DEG = 67.5


@dataclass(frozen=True, order=False)
class DirectionZone:
    """One of the 26 quantized direction regions."""

    band: str
    octant: Optional[str] = None

    def __post_init__(self) -> None:
        if self.band not in BANDS:
            raise ValueError(f"unknown band {self.band!r}")
        if self.band in POLAR_BANDS:
            if self.octant is not None:
                raise ValueError(f"polar zone {self.band!r} takes no octant")
        elif self.octant not in OCTANTS:
            raise ValueError(f"unknown octant {self.octant!r}")

    @property
    def name(self) -> str:
        return self.band if self.octant is None else f"{self.band} {self.octant}"

    @property
    def index(self) -> int:
        return _ZONE_INDEX[self]

    @property
    def is_polar(self) -> bool:
        return self.band in POLAR_BANDS

    def center(self) -> np.ndarray:
        return zone_center(self)

    @classmethod
    def from_name(cls, name: str) -> "DirectionZone":
        key = _normalize_zone_name(name)
        try:
            return _ZONES_BY_KEY[key]
        except KeyError:
            raise ValueError(f"unknown zone name {name!r}") from None

    def __str__(self) -> str:
        return self.name


def _build_zones() -> tuple:
    zones = [DirectionZone("above")]
    for band in ("upper", "horizontal", "lower"):
        zones.extend(DirectionZone(band, octant) for octant in OCTANTS)
    zones.append(DirectionZone("below"))
    return tuple(zones)


def _normalize_zone_name(name: str) -> str:
    text = re.sub(r"[\s_]+", " ", name.strip().lower())
    # "front left" and "front - left" are accepted for "front-left"
    text = re.sub(r"\s*-\s*", "-", text)
    return text


ALL_ZONES = _build_zones()
_ZONE_INDEX = {zone: i for i, zone in enumerate(ALL_ZONES)}
_ZONES_BY_KEY = {}
for _zone in ALL_ZONES:
    _ZONES_BY_KEY[_zone.name] = _zone
    if _zone.octant and "-" in _zone.octant:
        _ZONES_BY_KEY[f"{_zone.band} {_zone.octant.replace('-', ' ')}"] = _zone


def wrap_azimuth(azimuth_deg: float) -> float:
    """Wrap an azimuth to [-180, 180)."""
    wrapped = math.fmod(azimuth_deg + 180.0, 360.0)
    if wrapped < 0:
        wrapped += 360.0
    return wrapped - 180.0


def elevation_band(elevation_deg: float) -> str:
    if elevation_deg >= POLAR_LIMIT_DEG:
        return "above"
    if elevation_deg > HORIZONTAL_LIMIT_DEG:
        return "upper"
    if elevation_deg >= -HORIZONTAL_LIMIT_DEG:
        return "horizontal"
    if elevation_deg > -POLAR_LIMIT_DEG:
        return "lower"
    return "below"


def azimuth_octant(azimuth_deg: float) -> str:
    """Octant containing the azimuth; each octant is [center - 22.5, center + 22.5)."""
    az = wrap_azimuth(azimuth_deg)
    return OCTANTS[int(math.floor((az + 22.5) / 45.0)) % 8]


def quantize_direction(azimuth_deg: float, elevation_deg: float) -> DirectionZone:
    """Map an (azimuth, elevation) pair in degrees to its zone."""
    if not (math.isfinite(azimuth_deg) and math.isfinite(elevation_deg)):
        raise ValueError("direction must be finite")
    band = elevation_band(elevation_deg)
    if band in POLAR_BANDS:
        return DirectionZone(band)
    return DirectionZone(band, azimuth_octant(azimuth_deg))


def vector_to_angles(vector) -> tuple:
    """(azimuth, elevation) in degrees of a 3-vector."""
    x, y, z = (float(v) for v in vector)
    azimuth = math.degrees(math.atan2(y, x))
    elevation = math.degrees(math.atan2(z, math.hypot(x, y)))
    return wrap_azimuth(azimuth), elevation


def angles_to_vector(azimuth_deg: float, elevation_deg: float) -> np.ndarray:
    az, el = math.radians(azimuth_deg), math.radians(elevation_deg)
    return np.array([math.cos(az) * math.cos(el), math.sin(az) * math.cos(el), math.sin(el)])


def quantize_vector(vector) -> DirectionZone:
    return quantize_direction(*vector_to_angles(vector))


def zone_center_angles(zone: DirectionZone) -> tuple:
    """(azimuth, elevation) of the zone center in degrees."""
    if zone.octant is None:
        return 0.0, BAND_CENTERS_DEG[zone.band]
    return OCTANT_CENTERS_DEG[zone.octant], BAND_CENTERS_DEG[zone.band]


def zone_center(zone: DirectionZone) -> np.ndarray:
    """Unit vector at the zone center; the poles for the polar caps."""
    if zone.band == "above":
        return np.array([0.0, 0.0, 1.0])
    if zone.band == "below":
        return np.array([0.0, 0.0, -1.0])
    return angles_to_vector(*zone_center_angles(zone))


def angle_between(a, b) -> float:
    """Great-circle angle in degrees between two 3-vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return math.degrees(math.atan2(float(np.linalg.norm(np.cross(a, b))), float(np.dot(a, b))))


@lru_cache(maxsize=None)
def _angle_table() -> np.ndarray:
    table = np.zeros((len(ALL_ZONES), len(ALL_ZONES)))
    centers = [zone_center(z) for z in ALL_ZONES]
    for i, ci in enumerate(centers):
        for j, cj in enumerate(centers):
            table[i, j] = angle_between(ci, cj)
    table = 0.5 * (table + table.T)
    table.setflags(write=False)
    return table


def zone_angle_error(a: DirectionZone, b: DirectionZone) -> float:
    """Angle in degrees between the centers of two zones, in [0, 180]."""
    return float(_angle_table()[a.index, b.index])
