"""Image-source shoebox simulation of first-order Ambisonics room impulse responses.

Encoding convention: W carries the omni pattern scaled by 1/sqrt(2); X, Y, Z
are unit-gain figure-of-eight patterns along +x (front), +y (left), +z (up).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numba
import numpy as np
from scipy import signal
from scipy.spatial.transform import Rotation

from foascene.scene import RoomSpec

SPEED_OF_SOUND = 343.0
DEFAULT_SAMPLE_RATE = 16000
FOA_W_GAIN = 1.0 / math.sqrt(2.0)
SINC_TAPS = 8
MIN_ROOM_DIMENSION = 0.5
MIN_SOURCE_DISTANCE = 0.2
C50_CAP_DB = 40.0
DEFAULT_MAX_DURATION = 2.0
DEFAULT_HIGHPASS_HZ = 50.0
N_CANDIDATES = 64


class InsufficientDecay(ValueError):
    """The energy decay curve never reaches the level the RT60 fit needs."""


@dataclass(frozen=True, eq=False)
class FoaRir:
    """Four-channel impulse response in W, X, Y, Z order."""

    data: np.ndarray
    sample_rate_hz: int
    source_position: tuple
    mic_position: tuple
    direct_path_delay_s: float
    rt60_s: Optional[float] = None
    c50_db: Optional[float] = None

    @property
    def w(self) -> np.ndarray:
        return self.data[0]

    @property
    def x(self) -> np.ndarray:
        return self.data[1]

    @property
    def y(self) -> np.ndarray:
        return self.data[2]

    @property
    def z(self) -> np.ndarray:
        return self.data[3]

    @property
    def distance_m(self) -> float:
        return float(np.linalg.norm(np.subtract(self.source_position, self.mic_position)))

    def sidecar(self) -> dict:
        return {
            "sample_rate_hz": self.sample_rate_hz,
            "channels": ["W", "X", "Y", "Z"],
            "source_position": list(self.source_position),
            "mic_position": list(self.mic_position),
            "distance_m": self.distance_m,
            "direct_path_delay_s": self.direct_path_delay_s,
            "rt60_s": self.rt60_s,
            "c50_db": self.c50_db,
        }


def encode_foa(direction, w_gain: float = FOA_W_GAIN) -> np.ndarray:
    """FOA channel gains (W, X, Y, Z) for a plane wave arriving from ``direction``."""
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    return np.array([w_gain, u[0], u[1], u[2]])


TABLE_RESOLUTION = 2048


def _interpolation_table(half: int = SINC_TAPS // 2, resolution: int = TABLE_RESOLUTION) -> np.ndarray:
    """Hann-windowed sinc taps sampled at ``resolution`` + 1 fractional offsets.

    Row ``i`` holds the taps at k = -half + 1 .. half for a delay of
    ``i / resolution`` samples past an integer.
    """
    frac = np.arange(resolution + 1) / resolution
    k = np.arange(-half + 1, half + 1)
    t = k[None, :] - frac[:, None]
    window = np.where(np.abs(t) < half, 0.5 * (1.0 + np.cos(np.pi * t / half)), 0.0)
    return np.sinc(t) * window


_TABLE = _interpolation_table()


@numba.njit(cache=True)
def _accumulate_images(out, src, mic, dims, beta, fs, c, r_max, max_order, w_gain, table):
    """Add every image source within ``r_max`` meters of the mic into ``out`` (samples x 4)."""
    n_len = out.shape[0]
    resolution = table.shape[0] - 1
    n_taps = table.shape[1]
    half = n_taps // 2
    lx, ly, lz = dims[0], dims[1], dims[2]
    nx_max = int(math.ceil(r_max / (2.0 * lx))) + 1
    ny_max = int(math.ceil(r_max / (2.0 * ly))) + 1
    nz_max = int(math.ceil(r_max / (2.0 * lz))) + 1
    r2_max = r_max * r_max
    for qx in range(2):
        for nx in range(-nx_max, nx_max + 1):
            px = (1 - 2 * qx) * src[0] + 2.0 * nx * lx - mic[0]
            if px * px > r2_max:
                continue
            ox0 = abs(nx - qx)
            ox1 = abs(nx)
            gx = beta[0] ** ox0 * beta[1] ** ox1
            if gx == 0.0:
                continue
            for qy in range(2):
                for ny in range(-ny_max, ny_max + 1):
                    py = (1 - 2 * qy) * src[1] + 2.0 * ny * ly - mic[1]
                    dxy2 = px * px + py * py
                    if dxy2 > r2_max:
                        continue
                    oy0 = abs(ny - qy)
                    oy1 = abs(ny)
                    gxy = gx * beta[2] ** oy0 * beta[3] ** oy1
                    if gxy == 0.0:
                        continue
                    for qz in range(2):
                        for nz in range(-nz_max, nz_max + 1):
                            pz = (1 - 2 * qz) * src[2] + 2.0 * nz * lz - mic[2]
                            d2 = dxy2 + pz * pz
                            if d2 > r2_max:
                                continue
                            oz0 = abs(nz - qz)
                            oz1 = abs(nz)
                            if max_order >= 0 and ox0 + ox1 + oy0 + oy1 + oz0 + oz1 > max_order:
                                continue
                            g = gxy * beta[4] ** oz0 * beta[5] ** oz1
                            if g == 0.0:
                                continue
                            d = math.sqrt(d2)
                            g = g / d
                            gw = w_gain * g
                            gx_ = g * px / d
                            gy_ = g * py / d
                            gz_ = g * pz / d
                            delay = d / c * fs
                            base = int(math.floor(delay))
                            pos = (delay - base) * resolution
                            row = int(pos)
                            mix = pos - row
                            if row >= resolution:
                                row = resolution - 1
                                mix = 1.0
                            first = base - half + 1
                            for j in range(n_taps):
                                k = first + j
                                if k < 0 or k >= n_len:
                                    continue
                                h = table[row, j] + mix * (table[row + 1, j] - table[row, j])
                                out[k, 0] += gw * h
                                out[k, 1] += gx_ * h
                                out[k, 2] += gy_ * h
                                out[k, 3] += gz_ * h


@lru_cache(maxsize=16)
def _highpass(cutoff_hz: float, sample_rate: float) -> np.ndarray:
    return signal.butter(2, cutoff_hz, "highpass", fs=sample_rate, output="sos")


def truncation_time(room: RoomSpec, distance: float, energy_floor_db: float = -60.0,
                    c: float = SPEED_OF_SOUND) -> float:
    """Time after which the predicted residual reverberant energy is below the floor.

    The residual energy of all images beyond radius r is approximated from a
    diffuse exponential decay with the room's Eyring reverberation time and
    compared with the energy of the direct path.
    """
    t60 = room.eyring_rt60()
    direct = distance / c
    if t60 <= 0.0:
        return direct
    k = math.log(10.0 ** 6) / (c * t60)  # energy decay per meter of travel
    ratio0 = 4.0 * math.pi * distance ** 2 / (room.volume * k)
    floor = 10.0 ** (energy_floor_db / 10.0)
    if ratio0 <= floor:
        return direct
    return max(direct, math.log(ratio0 / floor) / (k * c))


def simulate_rir(
    room: RoomSpec,
    source_pos,
    max_order: Optional[int] = None,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    max_duration: float = DEFAULT_MAX_DURATION,
    energy_floor_db: float = -60.0,
    c: float = SPEED_OF_SOUND,
    derive: bool = True,
    highpass_hz: Optional[float] = DEFAULT_HIGHPASS_HZ,
) -> FoaRir:
    """Simulate the FOA impulse response from ``source_pos`` to the room's mic.

    Images are summed until the predicted residual energy falls
    ``energy_floor_db`` below the direct path (capped at ``max_duration``),
    or up to ``max_order`` reflections when that is given.

    All-positive reflection coefficients make the image sum accumulate a
    slowly decaying DC offset; when reflections are present the response is
    high-passed at ``highpass_hz`` (the classic image-method post-filter).
    """
    dims = np.asarray(room.dimensions, dtype=float)
    if np.any(dims < MIN_ROOM_DIMENSION):
        raise ValueError(f"degenerate room {room.dimensions}")
    src = np.asarray(source_pos, dtype=float)
    mic = np.asarray(room.mic_position, dtype=float)
    if not room.contains(src):
        raise ValueError(f"source {tuple(src)} outside room {room.dimensions}")
    if not room.contains(mic):
        raise ValueError(f"mic {tuple(mic)} outside room {room.dimensions}")
    distance = float(np.linalg.norm(src - mic))
    if distance < MIN_SOURCE_DISTANCE:
        raise ValueError(f"source-mic distance {distance:.3f} m below {MIN_SOURCE_DISTANCE} m")

    beta = np.sqrt(1.0 - np.asarray(room.wall_absorption, dtype=float))
    if max_order is None:
        t_end = min(max_duration, truncation_time(room, distance, energy_floor_db, c))
        order = -1
    else:
        t_end = max_duration
        order = int(max_order)
    t_end = max(t_end, distance / c)
    n_len = int(math.ceil(t_end * sample_rate)) + SINC_TAPS // 2 + 1
    out = np.zeros((n_len, 4))
    # the radius gets a little slack so rounding never drops the direct path
    r_max = t_end * c * (1.0 + 1e-9) + 1e-9
    _accumulate_images(out, src, mic, dims, beta, float(sample_rate), c, r_max, order, FOA_W_GAIN, _TABLE)
    out = np.ascontiguousarray(out.T)
    if highpass_hz and np.any(beta > 0.0):
        out = signal.sosfilt(_highpass(highpass_hz, sample_rate), out, axis=1)

    delay = distance / c
    rt60 = c50 = None
    if derive:
        try:
            rt60 = estimate_rt60(out[0], sample_rate)
        except InsufficientDecay:
            rt60 = None
        c50 = compute_c50(out[0], sample_rate, delay)
    return FoaRir(
        data=out,
        sample_rate_hz=int(sample_rate),
        source_position=tuple(float(v) for v in src),
        mic_position=tuple(float(v) for v in mic),
        direct_path_delay_s=delay,
        rt60_s=rt60,
        c50_db=c50,
    )


def schroeder_curve(rir: np.ndarray) -> np.ndarray:
    """Backward-integrated energy decay curve in dB re its start; trailing silence removed."""
    energy = np.cumsum(np.asarray(rir, dtype=float)[::-1] ** 2)[::-1]
    nonzero = np.flatnonzero(energy > 0)
    if nonzero.size == 0:
        return np.zeros(0)
    energy = energy[: nonzero[-1] + 1]
    return 10.0 * np.log10(energy / energy[0])


def estimate_rt60(rir_omni: np.ndarray, sample_rate: float) -> float:
    """RT60 from a linear fit of the Schroeder curve between -5 and -25 dB (3 x T20)."""
    edc = schroeder_curve(rir_omni)
    below5 = np.flatnonzero(edc <= -5.0)
    below25 = np.flatnonzero(edc <= -25.0)
    if below25.size == 0 or below5.size == 0:
        raise InsufficientDecay("energy decay curve never reaches -25 dB")
    i5, i25 = below5[0], below25[0]
    if i25 - i5 < 2:
        raise InsufficientDecay("decay between -5 and -25 dB spans fewer than 3 samples")
    t = np.arange(i5, i25 + 1) / float(sample_rate)
    slope, _ = np.polyfit(t, edc[i5:i25 + 1], 1)
    if slope >= 0:
        raise InsufficientDecay("energy decay curve is not decreasing")
    return float(-60.0 / slope)


def compute_c50(rir_omni: np.ndarray, sample_rate: float, direct_arrival_s: float,
                cap_db: Optional[float] = C50_CAP_DB) -> float:
    """Clarity: early (first 50 ms after the direct sound) to late energy ratio in dB.

    The early window opens half the interpolation kernel before the direct
    arrival so the fractional-delay taps of the direct path count as early.
    Without late energy the result is +inf, or ``cap_db`` when a cap is set.
    """
    h = np.asarray(rir_omni, dtype=float)
    start = int(round(direct_arrival_s * sample_rate))
    boundary = start + int(round(0.050 * sample_rate))
    early = float(np.sum(h[max(0, start - SINC_TAPS // 2):boundary] ** 2))
    late = float(np.sum(h[boundary:] ** 2))
    if late <= 0.0:
        value = math.inf
    elif early <= 0.0:
        value = -math.inf
    else:
        value = 10.0 * math.log10(early / late)
    if cap_db is not None:
        value = min(value, cap_db)
    return value


def fibonacci_sphere(n: int) -> np.ndarray:
    """``n`` roughly evenly spread unit vectors (golden-angle spiral)."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _ray_extent(origin: np.ndarray, direction: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> float:
    """Distance along ``direction`` from ``origin`` to the box [lo, hi]."""
    extent = math.inf
    for o, d, a, b in zip(origin, direction, lo, hi):
        if d > 1e-12:
            extent = min(extent, (b - o) / d)
        elif d < -1e-12:
            extent = min(extent, (a - o) / d)
    return extent


def sample_room(
    rng_seed,
    absorption_range: tuple = (0.05, 0.6),
    size_min: tuple = (4.0, 4.0, 3.0),
    size_max: tuple = (25.0, 25.0, 6.0),
    wall_margin: float = 0.5,
    n_candidates: int = N_CANDIDATES,
) -> RoomSpec:
    """Draw a shoebox room, a mic position and candidate source positions.

    Candidate directions are a randomly rotated Fibonacci sphere around the
    mic; each candidate sits at a uniform distance along its ray, at least
    ``wall_margin`` from the walls and from the mic.
    """
    rng = np.random.default_rng(rng_seed)
    size_min = np.asarray(size_min, dtype=float)
    size_max = np.asarray(size_max, dtype=float)
    min_clearance = 2.0 * wall_margin
    while True:
        dims = rng.uniform(size_min, size_max)
        # mic sits a full margin deeper than candidates so every ray has room for one
        mic = rng.uniform(min_clearance, dims - min_clearance)
        lo = np.full(3, wall_margin)
        hi = dims - wall_margin
        rotation = Rotation.random(random_state=rng)
        directions = rotation.apply(fibonacci_sphere(n_candidates))
        candidates = []
        for u in directions:
            extent = _ray_extent(mic, u, lo, hi)
            if extent <= wall_margin:
                break
            distance = rng.uniform(wall_margin, extent)
            candidates.append(mic + distance * u)
        if len(candidates) == n_candidates:
            break
    alpha = float(rng.uniform(*absorption_range))
    return RoomSpec(
        dimensions=tuple(dims),
        mic_position=tuple(mic),
        wall_absorption=(alpha,) * 6,
        candidate_source_positions=tuple(tuple(p) for p in candidates),
    )
