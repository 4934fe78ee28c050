"""Learning-free direction-of-arrival baseline built on intensity vectors.

Pipeline per clip: TF-bin intensity vectors, a diffuseness gate plus an
energy gate, frame activity with hysteresis segmentation into events, and
inside each event agglomerative clustering of per-(block, octave band)
directions so simultaneous sources in different bands separate.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

from foascene.features import bin_intensity, stft
from foascene.zones import DirectionZone, quantize_vector


@dataclass(frozen=True)
class LocalizerConfig:
    sample_rate: int = 16000
    n_fft: int = 512
    win_length: int = 400
    hop: int = 160
    diffuseness_gate: float = 0.6
    energy_gate_db: float = -50.0
    min_active_bins: int = 4
    noise_frame_fraction: float = 0.2
    noise_margin_db: float = 3.0
    on_s: float = 0.2
    off_s: float = 0.3
    block_s: float = 0.1
    cluster_threshold_deg: float = 45.0
    min_cluster_share: float = 0.15
    cell_coherence_gate: float = 0.5
    band_edges_hz: tuple = (62.5, 125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0)


@dataclass(frozen=True)
class LocalizationResult:
    zone: DirectionZone
    mean_direction: tuple
    active_interval_s: tuple
    confidence: float
    energy_share: float = 0.0

    def to_dict(self) -> dict:
        return {
            "zone": self.zone.name,
            "mean_direction": list(self.mean_direction),
            "active_interval_s": list(self.active_interval_s),
            "confidence": self.confidence,
            "energy_share": self.energy_share,
        }


def hysteresis_segments(active: np.ndarray, on_frames: int, off_frames: int) -> List[tuple]:
    """[start, stop) frame spans: an event opens after ``on_frames`` consecutive
    active frames and closes after ``off_frames`` consecutive inactive ones."""
    segments, start, run_on, run_off, inside = [], 0, 0, 0, False
    for i, flag in enumerate(active):
        if not inside:
            run_on = run_on + 1 if flag else 0
            if run_on >= on_frames:
                inside, start, run_off = True, i - run_on + 1, 0
        else:
            run_off = 0 if flag else run_off + 1
            if run_off >= off_frames:
                segments.append((start, i - run_off + 1))
                inside, run_on = False, 0
    if inside:
        end = len(active) - run_off
        segments.append((start, end))
    return segments


def _cluster(directions: np.ndarray, threshold_deg: float) -> np.ndarray:
    if len(directions) == 1:
        return np.array([1])
    cos = np.clip(directions @ directions.T, -1.0, 1.0)
    angles = np.degrees(np.arccos(cos))
    condensed = angles[np.triu_indices(len(directions), k=1)]
    return fcluster(linkage(condensed, method="average"), t=threshold_deg, criterion="distance")


def _compensate_noise(iv: np.ndarray, energy: np.ndarray, fraction: float) -> tuple:
    """Remove a stationary bed's mean intensity and energy, estimated per bin
    from the quietest ``fraction`` of frames.

    Returns the compensated normalized vectors, the compensated energy
    (clipped at zero) and the per-bin floor energy, or the inputs and None
    when ``fraction`` is zero or too few frames exist.
    """
    n_frames = energy.shape[0]
    n_quiet = int(fraction * n_frames)
    if fraction <= 0.0 or n_quiet < 1:
        return iv, energy, None
    quiet = np.argsort(energy.sum(axis=1), kind="stable")[:n_quiet]
    active = iv * energy
    floor = energy[quiet].mean(axis=0)
    active = active - active[:, quiet].mean(axis=1, keepdims=True)
    energy = np.maximum(energy - floor, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        iv = np.where(energy > 0.0, active / np.where(energy > 0.0, energy, 1.0), 0.0)
    norm = np.linalg.norm(iv, axis=0)
    # subtraction can leave vectors longer than a plane wave allows
    iv = iv / np.maximum(norm, 1.0)
    return iv, energy, floor


def localize(foa: np.ndarray, config: LocalizerConfig = LocalizerConfig()) -> List[LocalizationResult]:
    """Detect directional events in a ``(4, samples)`` FOA signal.

    Results are ordered by onset, then by decreasing confidence.
    """
    foa = np.asarray(foa, dtype=float)
    if foa.ndim != 2 or foa.shape[0] != 4:
        raise ValueError(f"expected (4, samples) FOA input, got {foa.shape}")
    spec = stft(foa, config.n_fft, config.hop, config.win_length)
    iv, energy = bin_intensity(*spec)
    peak = energy.max()
    if peak <= 0.0:
        return []
    iv, energy, floor = _compensate_noise(iv, energy, config.noise_frame_fraction)
    peak = energy.max()
    if peak <= 0.0:
        return []
    norm = np.linalg.norm(iv, axis=0)
    gate = (norm >= config.diffuseness_gate) & (energy >= peak * 10.0 ** (config.energy_gate_db / 10.0))
    if floor is not None:
        gate &= energy >= floor * 10.0 ** (config.noise_margin_db / 10.0)
    frame_rate = config.sample_rate / config.hop
    active = gate.sum(axis=1) >= config.min_active_bins
    segments = hysteresis_segments(
        active,
        max(1, int(round(config.on_s * frame_rate))),
        max(1, int(round(config.off_s * frame_rate))),
    )
    freqs = np.fft.rfftfreq(config.n_fft, 1.0 / config.sample_rate)
    band_of_bin = np.digitize(freqs, config.band_edges_hz)
    block = max(1, int(round(config.block_s * frame_rate)))
    weights = energy * gate
    gated_total = float(weights.sum())
    duration = foa.shape[1] / config.sample_rate
    results = []
    for start, stop in segments:
        cells = []  # (vector sum, weight, norm-weight sum, first frame, last frame)
        for b0 in range(start, stop, block):
            b1 = min(stop, b0 + block)
            for band in np.unique(band_of_bin):
                cols = band_of_bin == band
                w = weights[b0:b1, cols]
                total = w.sum()
                if total <= 0.0:
                    continue
                vec = (iv[:, b0:b1, cols] * w).sum(axis=(1, 2))
                cells.append((vec, total, (norm[b0:b1, cols] * w).sum(), b0, b1))
        if not cells:
            continue
        vectors = np.array([c[0] for c in cells])
        lengths = np.linalg.norm(vectors, axis=1)
        # a cell whose gated bins point every which way (diffuse background,
        # interference between copies) has a short resultant and is discarded
        totals = np.array([c[1] for c in cells])
        keep = lengths >= config.cell_coherence_gate * totals
        if not np.any(keep):
            continue
        cells = [c for c, k in zip(cells, keep) if k]
        directions = vectors[keep] / lengths[keep, None]
        labels = _cluster(directions, config.cluster_threshold_deg)
        cells_per_block = {}
        for c in cells:
            cells_per_block[c[3]] = cells_per_block.get(c[3], 0) + 1
        for label in np.unique(labels):
            members = [c for c, lab in zip(cells, labels) if lab == label]
            # a cluster must hold its share of the (block, band) cells in the
            # blocks it occupies: counting cells rather than energy keeps a
            # quiet band-limited source next to a loud broadband one, and
            # counting locally keeps a short event inside a long background
            local = sum(cells_per_block[b] for b in {c[3] for c in members})
            if len(members) < config.min_cluster_share * local:
                continue
            weight = sum(c[1] for c in members)
            direction = sum(c[0] for c in members)
            direction = direction / np.linalg.norm(direction)
            onset = min(c[3] for c in members) * config.hop / config.sample_rate
            offset = min(duration, (max(c[4] for c in members) - 1) * config.hop / config.sample_rate
                         + config.n_fft / config.sample_rate)
            confidence = float(np.clip(sum(c[2] for c in members) / weight, 0.0, 1.0))
            results.append(LocalizationResult(
                zone=quantize_vector(direction),
                mean_direction=tuple(float(v) for v in direction),
                active_interval_s=(float(onset), float(offset)),
                confidence=confidence,
                energy_share=min(1.0, float(weight / gated_total)),
            ))
    results.sort(key=lambda r: (r.active_interval_s[0], -r.confidence))
    return results
