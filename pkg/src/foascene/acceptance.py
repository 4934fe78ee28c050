"""Acceptance checks for the toolkit, one function per criterion.

Run ``python3 -m foascene.acceptance`` to print one PASS/FAIL line per
criterion; ``--only 1 5 9`` restricts the run.
"""
from __future__ import annotations

import argparse
import json
import math
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from foascene.evaluation import (
    ERROR_METRICS, METRICS, SOURCE_METRICS, interval_iou, pair_tables, score_scene, solve_matching,
)
from foascene.random_scenes import random_hypothesis, random_scene
from foascene.scene import ORDERINGS, RoomSpec
from foascene.scenetext import parse, render
from foascene.similarity import LexicalSimilarity
from foascene.zones import (
    ALL_ZONES, OCTANT_CENTERS_DEG, DirectionZone, angle_between, quantize_direction,
    zone_angle_error, zone_center_angles,
)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number:>2} {self.name}: {self.detail} ({self.seconds:.1f} s)"


def _scene_pairs(n: int, seed: int) -> list:
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n):
        ref = random_scene(rng)
        pairs.append((ref, random_hypothesis(rng, ref)))
    return pairs


def _same(a: Optional[float], b: Optional[float]) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a == b


# -------------------------------------------------------------- criterion 1


def check_matching_oracle(n_pairs: int = 1000, seed: int = 1) -> CriterionResult:
    """Assignment-solver OS matching against exhaustive permutation search."""
    start = time.perf_counter()
    provider = LexicalSimilarity()
    worst, mismatches = 0.0, 0
    for ref, hyp in _scene_pairs(n_pairs, seed):
        tables = pair_tables(ref.sources, hyp.sources, provider)
        scores = tables.values["tuple_score"]
        fast = tables.aggregate("tuple_score", solve_matching(scores, "assignment").pairs)
        slow = tables.aggregate("tuple_score", solve_matching(scores, "exhaustive").pairs)
        gap = abs(fast - slow)
        worst = max(worst, gap)
        mismatches += gap > 1e-12
    elapsed = time.perf_counter() - start
    passed = mismatches == 0 and elapsed < 60.0
    return CriterionResult(1, "protocol oracle equivalence", passed,
                           f"{n_pairs} pairs, {mismatches} mismatches, max gap {worst:.1e}, "
                           f"{elapsed:.1f} s (limit 60 s)", elapsed)


# -------------------------------------------------------------- criterion 2


def check_protocol_identities(n_pairs: int = 1000, seed: int = 1) -> CriterionResult:
    """OS and OM agree on TupleScore; OM is never worse on any other metric."""
    start = time.perf_counter()
    provider = LexicalSimilarity()
    tuple_diffs, violations, om_only = 0, [], 0
    for k, (ref, hyp) in enumerate(_scene_pairs(n_pairs, seed)):
        os_report = score_scene(ref, hyp, "OS", provider)
        om_report = score_scene(ref, hyp, "OM", provider)
        if os_report.metrics["tuple_score"] != om_report.metrics["tuple_score"]:
            tuple_diffs += 1
        for metric in SOURCE_METRICS:
            a, b = os_report.metrics[metric], om_report.metrics[metric]
            # a metric undefined under the OS matching (no eligible pair) may
            # become defined under its own matching; the reverse must not happen
            if a is None:
                om_only += b is not None
                continue
            if b is None:
                violations.append((k, metric))
                continue
            worse = b > a if metric in ERROR_METRICS else b < a
            if worse:
                violations.append((k, metric))
    elapsed = time.perf_counter() - start
    passed = tuple_diffs == 0 and not violations
    return CriterionResult(2, "definitional identities", passed,
                           f"{n_pairs} scenes, TupleScore differences {tuple_diffs}, "
                           f"dominance violations {len(violations)}, "
                           f"{om_only} metric values defined only under OM", elapsed)


# -------------------------------------------------------------- criterion 3


def check_permutation_invariance(n_scenes: int = 1000, n_shuffles: int = 10, seed: int = 3) -> CriterionResult:
    start = time.perf_counter()
    provider = LexicalSimilarity()
    rng = np.random.default_rng(seed + 1000)
    changed = 0
    for ref, hyp in _scene_pairs(n_scenes, seed):
        baseline = {p: score_scene(ref, hyp, p, provider).metrics for p in ("OS", "OM")}
        for _ in range(n_shuffles):
            order = rng.permutation(len(hyp.sources))
            shuffled = type(hyp)(**{**hyp.__dict__, "sources": tuple(hyp.sources[i] for i in order)})
            for protocol, metrics in baseline.items():
                again = score_scene(ref, shuffled, protocol, provider).metrics
                if any(not _same(metrics[m], again[m]) for m in METRICS):
                    changed += 1
    elapsed = time.perf_counter() - start
    total = n_scenes * n_shuffles
    return CriterionResult(3, "permutation invariance", changed == 0,
                           f"{n_scenes} scenes x {n_shuffles} shuffles x 2 protocols, "
                           f"{changed} of {2 * total} scorings changed", elapsed)


# -------------------------------------------------------------- criterion 4


def check_round_trip(n_scenes: int = 10_000, n_fuzz: int = 100_000, seed: int = 4) -> CriterionResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    failures = 0
    for _ in range(n_scenes):
        scene = random_scene(rng)
        for order in ORDERINGS:
            result = parse(render(scene, order))
            if result.parsed != scene.reordered(order) or result.parse_warnings:
                failures += 1
    crashes = _fuzz_parser(n_fuzz, rng)
    elapsed = time.perf_counter() - start
    passed = failures == 0 and crashes == 0
    return CriterionResult(4, "round-trip grammar", passed,
                           f"{n_scenes} scenes x {len(ORDERINGS)} orderings, {failures} round-trip failures; "
                           f"{n_fuzz} fuzz inputs, {crashes} crashes", elapsed)


_FUZZ_ALPHABET = list("room_volume=RT60n_src;:.,()[]-–~ dBAm s0123456789?\n\t") + ["noise_label", "horizontal",
                                                                                 "front-left", "above", "Sound label:"]


def _fuzz_parser(n: int, rng: np.random.Generator) -> int:
    """Parse random byte strings, token soups and mutated renders; count exceptions."""
    crashes = 0
    seed_texts = [render(random_scene(rng)) for _ in range(50)]
    for k in range(n):
        kind = k % 3
        if kind == 0:
            data = rng.integers(0, 256, int(rng.integers(0, 200)), dtype=np.uint8).tobytes()
        elif kind == 1:
            picks = rng.integers(0, len(_FUZZ_ALPHABET), int(rng.integers(0, 80)))
            data = "".join(_FUZZ_ALPHABET[i] for i in picks)
        else:
            text = list(seed_texts[k % len(seed_texts)])
            for _ in range(int(rng.integers(1, 6))):
                pos = int(rng.integers(0, len(text)))
                op = rng.integers(0, 3)
                if op == 0:
                    del text[pos]
                elif op == 1:
                    text.insert(pos, _FUZZ_ALPHABET[int(rng.integers(0, len(_FUZZ_ALPHABET)))])
                else:
                    text[pos] = chr(int(rng.integers(0, 0x3000)))
            data = "".join(text)
        try:
            parse(data)
        except Exception:  # noqa: BLE001 - any exception is a crash here
            crashes += 1
    return crashes


# -------------------------------------------------------------- criterion 5


def _membership(zone: DirectionZone, az: np.ndarray, el: np.ndarray) -> np.ndarray:
    """Membership predicate written from the zone boundaries, not via quantize_direction."""
    if zone.band == "above":
        return el >= 67.5
    if zone.band == "below":
        return el <= -67.5
    in_band = {
        "upper": (el > 22.5) & (el < 67.5),
        "horizontal": (el >= -22.5) & (el <= 22.5),
        "lower": (el > -67.5) & (el < -22.5),
    }[zone.band]
    rel = np.mod(az - OCTANT_CENTERS_DEG[zone.octant] + 22.5, 360.0)
    return in_band & (rel < 45.0)


def check_zone_geometry(n_samples: int = 1_000_000, seed: int = 5) -> CriterionResult:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n_samples, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    az = np.degrees(np.arctan2(v[:, 1], v[:, 0]))
    el = np.degrees(np.arcsin(np.clip(v[:, 2], -1.0, 1.0)))
    # exact boundary values are added so the half-open edges are exercised
    edges_az = np.repeat(np.arange(-180.0, 180.0, 22.5), 9)
    edges_el = np.tile([-90.0, -67.5, -45.0, -22.5, 0.0, 22.5, 45.0, 67.5, 90.0], 16)
    az = np.concatenate([az, edges_az])
    el = np.concatenate([el, edges_el])
    members = np.stack([_membership(z, az, el) for z in ALL_ZONES])
    counts = members.sum(axis=0)
    not_one = int(np.count_nonzero(counts != 1))
    owner = np.argmax(members, axis=0)
    disagree = sum(quantize_direction(float(a), float(e)).index != int(o) for a, e, o in zip(az, el, owner))
    centers_ok = all(quantize_direction(*zone_center_angles(z)) == z for z in ALL_ZONES)
    front = DirectionZone.from_name("horizontal front")
    left = DirectionZone.from_name("horizontal left")
    e90 = zone_angle_error(front, left)
    e180 = zone_angle_error(DirectionZone("above"), DirectionZone("below"))
    elapsed = time.perf_counter() - start
    passed = not_one == 0 and disagree == 0 and centers_ok and e90 == 90.0 and e180 == 180.0
    return CriterionResult(5, "zone geometry", passed,
                           f"{len(az)} directions, {not_one} not in exactly one zone, {disagree} disagree with "
                           f"quantize_direction; centers {'ok' if centers_ok else 'BROKEN'}; "
                           f"front/left {e90:g} deg, above/below {e180:g} deg", elapsed)


# -------------------------------------------------------------- criterion 6


def sabine_study(n_rooms: int = 20, seed: int = 6, absorption_range=(0.1, 0.5)) -> List[dict]:
    """Schroeder RT60 of one simulated RIR per sampled room against Sabine's formula."""
    from foascene.rir import sample_room, simulate_rir

    rows = []
    for i in range(n_rooms):
        room = sample_room(seed * 1000 + i, absorption_range=absorption_range)
        sabine = room.sabine_rt60()
        # long enough for a clean -25 dB fit point even if the decay outlasts Sabine
        rir = simulate_rir(room, room.candidate_source_positions[0], max_duration=max(2.0, 2.0 * sabine))
        rows.append({
            "dimensions": room.dimensions,
            "alpha": room.wall_absorption[0],
            "sabine_s": sabine,
            "eyring_s": room.eyring_rt60(),
            "schroeder_s": rir.rt60_s,
            "deviation": (rir.rt60_s - sabine) / sabine if rir.rt60_s else math.nan,
        })
    return rows


def check_acoustics(seed: int = 6) -> CriterionResult:
    from foascene.features import bin_intensity, stft
    from foascene.rir import compute_c50, encode_foa, simulate_rir
    from foascene.zones import angles_to_vector
    from scipy import signal

    start = time.perf_counter()
    rows = sabine_study(seed=seed)
    deviations = np.array([r["deviation"] for r in rows])
    within = int(np.count_nonzero(np.abs(deviations) <= 0.25))
    sabine_ok = within == len(rows)

    rng = np.random.default_rng(seed)
    anechoic = RoomSpec(dimensions=(20.0, 20.0, 20.0), mic_position=(10.0, 10.0, 10.0), wall_absorption=1.0)
    worst_angle = 0.0
    noise = rng.standard_normal(16000)
    for _ in range(20):
        az, el = rng.uniform(-180, 180), math.degrees(math.asin(rng.uniform(-1, 1)))
        u = angles_to_vector(az, el)
        src = np.asarray(anechoic.mic_position) + rng.uniform(1.0, 8.0) * u
        rir = simulate_rir(anechoic, src)
        foa = signal.fftconvolve(noise[None, :], rir.data, axes=1)
        iv, energy = bin_intensity(*stft(foa, 512, 160, 400))
        direction = (iv * energy).sum(axis=(1, 2))
        worst_angle = max(worst_angle, angle_between(direction, u))
    iv_ok = worst_angle <= 1.0

    u = angles_to_vector(30.0, 10.0)
    near = simulate_rir(anechoic, np.asarray(anechoic.mic_position) + 2.0 * u)
    far = simulate_rir(anechoic, np.asarray(anechoic.mic_position) + 4.0 * u)
    doubling_db = 20.0 * math.log10(far.w.sum() / near.w.sum())
    doubling_ok = abs(doubling_db + 6.02) <= 0.1

    fs = 16000
    h = np.zeros(fs)
    arrival = 400
    h[arrival] = 1.0
    h[arrival + int(0.06 * fs)] = math.sqrt(0.1)
    c50 = compute_c50(h, fs, arrival / fs)
    c50_ok = abs(c50 - 10.0) <= 1e-9

    elapsed = time.perf_counter() - start
    detail = (f"Sabine: {within}/{len(rows)} rooms within 25% (median deviation {np.median(deviations):+.0%}, "
              f"worst {deviations[np.argmax(np.abs(deviations))]:+.0%}); "
              f"anechoic IV max error {worst_angle:.3f} deg; distance doubling {doubling_db:+.3f} dB; "
              f"two-impulse C50 {c50:.12g} dB")
    return CriterionResult(6, "acoustics oracles", sabine_ok and iv_ok and doubling_ok and c50_ok, detail, elapsed)


# -------------------------------------------------------------- criterion 7


def check_levels(pool_path, n_plans: int = 30, seed: int = 7, gain_db: float = 6.02) -> CriterionResult:
    from foascene.rir import sample_room
    from foascene.synth import (
        SourcePool, SynthConfig, active_interval, build_room_bank, compute_loudness_dba, plan_mixture,
        render_mixture,
    )

    start = time.perf_counter()
    pool = SourcePool.load(pool_path)
    config = SynthConfig(absorption_range=(0.2, 0.6))
    banks = [build_room_bank(sample_room(seed * 100 + i, absorption_range=config.absorption_range))
             for i in range(3)]
    rooms = [b.room for b in banks]
    raw_errors, corrected_errors, snr_errors = [], [], []
    limited = 0
    for k in range(n_plans):
        plan = plan_mixture(pool, rooms, config, seed * 10_000 + k)
        bank = banks[plan.room_index]
        base = render_mixture(plan, pool, bank, config)
        louder = render_mixture(plan.with_gain(0, gain_db), pool, bank, config)
        a = {r["plan_index"]: r for r in base.continuous["sources"]}
        b = {r["plan_index"]: r for r in louder.continuous["sources"]}
        if 0 in a and 0 in b:
            shift = b[0]["loudness_dba"] - a[0]["loudness_dba"]
            headroom = louder.continuous["headroom_gain_db"] - base.continuous["headroom_gain_db"]
            corrected_errors.append(abs(shift - headroom - gain_db))
            if base.continuous["headroom_gain_db"] == 0.0 and louder.continuous["headroom_gain_db"] == 0.0:
                raw_errors.append(abs(shift - gain_db))
            else:
                limited += 1
        bg_level = compute_loudness_dba(base.background[0], config.sample_rate)
        for stem, index in zip(base.stems, base.kept_sources):
            interval = active_interval(stem[0], config.sample_rate, config.activity_threshold_db,
                                       hangover_s=config.hangover_s)
            measured = compute_loudness_dba(stem[0], config.sample_rate, interval) - bg_level
            planned = plan.sources[index].snr_db + plan.sources[index].gain_db
            snr_errors.append(abs(measured - planned))
    elapsed = time.perf_counter() - start
    raw_ok = bool(raw_errors) and max(raw_errors) <= 0.1
    corrected_ok = max(corrected_errors) <= 0.1
    snr_ok = max(snr_errors) <= 0.5
    detail = (f"+{gain_db} dB gain: max error {max(raw_errors, default=math.nan):.4f} dB on {len(raw_errors)} "
              f"unlimited plans; {limited} plans hit the headroom limiter, max error after removing its gain "
              f"{max(corrected_errors):.4f} dB; SNR max error {max(snr_errors):.4f} dB over {len(snr_errors)} sources")
    return CriterionResult(7, "loudness/SNR consistency", raw_ok and corrected_ok and snr_ok, detail, elapsed)


# -------------------------------------------------------------- criterion 8


def localizer_trial(pool_path, n_clips: int = 500, seed: int = 8, n_rooms: int = 10,
                    rt60_s: Optional[float] = None) -> dict:
    """Render single-source clips and compare the localizer's dominant event with the truth.

    Rooms are anechoic unless ``rt60_s`` is given. In that case every room's
    uniform absorption is first set from Eyring's formula, then corrected once
    so the simulated (Schroeder) RT60 recorded for the room lands near the
    target, since flat rooms decay slower than Eyring predicts.
    """
    import dataclasses

    from foascene.localizer import localize
    from foascene.rir import sample_room
    from foascene.synth import SourcePool, SynthConfig, build_room_bank, plan_mixture, render_mixture

    pool = SourcePool.load(pool_path)
    config = SynthConfig(max_sources=1, absorption_range=(1.0, 1.0))
    banks = []
    for i in range(n_rooms):
        room = sample_room(seed * 1000 + i, absorption_range=(1.0, 1.0))
        if rt60_s is None:
            banks.append(build_room_bank(room, config.sample_rate, config.max_rir_duration))
            continue
        target = rt60_s
        for _ in range(2):
            alpha = 1.0 - math.exp(-0.161 * room.volume / (room.surface_areas.sum() * target))
            room = dataclasses.replace(room, wall_absorption=(min(alpha, 1.0),) * 6)
            bank = build_room_bank(room, config.sample_rate, config.max_rir_duration)
            target *= rt60_s / bank.rt60_s
        banks.append(bank)
    rooms = [b.room for b in banks]
    zone_hits = octant_hits = octant_total = 0
    for k in range(n_clips):
        plan = plan_mixture(pool, rooms, config, seed * 100_000 + k)
        result = render_mixture(plan, pool, banks[plan.room_index], config)
        truth = result.meta.sources[0].zone
        events = localize(result.foa)
        guess = max(events, key=lambda e: e.energy_share).zone if events else None
        zone_hits += guess == truth
        if not truth.is_polar:
            octant_total += 1
            octant_hits += guess is not None and guess.octant == truth.octant
    return {
        "clips": n_clips,
        "zone_accuracy": zone_hits / n_clips,
        "octant_accuracy": octant_hits / octant_total if octant_total else math.nan,
        "rt60_s": [b.rt60_s for b in banks],
    }


def check_localizer(pool_path, n_clips: int = 500, seed: int = 8) -> CriterionResult:
    start = time.perf_counter()
    trial = localizer_trial(pool_path, n_clips, seed)
    elapsed = time.perf_counter() - start
    accuracy = trial["zone_accuracy"]
    return CriterionResult(8, "IV-localizer baseline", accuracy >= 0.95,
                           f"26-zone accuracy {accuracy:.1%} on {n_clips} anechoic single-source clips "
                           f"(threshold 95%)", elapsed)


# -------------------------------------------------------------- criterion 9


def check_iou() -> CriterionResult:
    start = time.perf_counter()
    cases = [((1, 3, 1, 3), 1.0), ((0, 2, 3, 5), 0.0), ((0, 2, 1, 3), 1.0 / 3.0)]
    got = [interval_iou(*args) for args, _ in cases]
    passed = all(g == want for g, (_, want) in zip(got, cases))
    detail = ", ".join(f"{a[:2]}/{a[2:]} -> {g!r}" for g, (a, _) in zip(got, cases))
    return CriterionResult(9, "IoU unit vectors", passed, detail, time.perf_counter() - start)


# ------------------------------------------------------------- criterion 10


# metrics that are legitimately undefined for some references: WER without
# speech, azimuth accuracy when every source sits in a polar cap
_MAY_BE_ABSENT = frozenset({"wer", "dir_acc_xy"})


def _perfect(metric: str, value) -> bool:
    if value is None:
        return metric in _MAY_BE_ABSENT
    return value == (0.0 if metric in ERROR_METRICS else 1.0)


def check_end_to_end(pool_path, work_dir, n_clips: int = 100, n_rooms: int = 4, seed: int = 10) -> CriterionResult:
    """``synth`` then ``eval`` through the command-line entry point, timed end to end."""
    start = time.perf_counter()
    work = Path(work_dir)
    data = work / "dataset"
    cmd = [sys.executable, "-m", "foascene"]
    subprocess.run(cmd + ["synth", "--pool", str(pool_path), "--out", str(data), "--rooms", str(n_rooms),
                          "--clips", str(n_clips), "--seed", str(seed)],
                   check=True, capture_output=True, text=True)
    from foascene.dataset import read_manifest
    from foascene.scene import SceneMeta

    refs = read_manifest(data / "manifest.jsonl")
    hyp_path = work / "hyp.jsonl"
    with open(hyp_path, "w", encoding="utf-8") as fh:
        for clip_id, record in refs.items():
            text = render(SceneMeta.from_dict(record["scene"]))
            fh.write(json.dumps({"clip_id": clip_id, "text": text}) + "\n")
    bad = {}
    for protocol in ("os", "om"):
        report_path = work / f"report_{protocol}.json"
        subprocess.run(cmd + ["eval", "--ref", str(data / "manifest.jsonl"), "--hyp", str(hyp_path),
                              "--protocol", protocol, "--report", str(report_path)],
                       check=True, capture_output=True, text=True)
        with open(report_path, encoding="utf-8") as fh:
            report = json.load(fh)
        for clip_id, clip in report["per_clip"].items():
            for metric, value in clip["metrics"].items():
                if not _perfect(metric, value):
                    bad.setdefault(f"{protocol}:{metric}", []).append(clip_id)
    elapsed = time.perf_counter() - start
    passed = len(refs) == n_clips and not bad and elapsed < 300.0
    detail = (f"{len(refs)} clips over {n_rooms} rooms, "
              f"{'all metrics perfect under OS and OM' if not bad else 'imperfect: ' + str(sorted(bad))}, "
              f"{elapsed:.1f} s (limit 300 s)")
    return CriterionResult(10, "end-to-end smoke", passed, detail, elapsed)


# ----------------------------------------------------------------- driver


def run(only: Optional[List[int]] = None, work_dir=None) -> List[CriterionResult]:
    from foascene.demo_pool import make_demo_pool

    with tempfile.TemporaryDirectory() as tmp:
        base = Path(work_dir) if work_dir else Path(tmp)
        pool_path = make_demo_pool(base / "pool")
        checks: Dict[int, Callable[[], CriterionResult]] = {
            1: check_matching_oracle,
            2: check_protocol_identities,
            3: check_permutation_invariance,
            4: check_round_trip,
            5: check_zone_geometry,
            6: check_acoustics,
            7: lambda: check_levels(pool_path),
            8: lambda: check_localizer(pool_path),
            9: check_iou,
            10: lambda: check_end_to_end(pool_path, base / "e2e"),
        }
        results = []
        for number in sorted(only or checks):
            result = checks[number]()
            print(result.line(), flush=True)
            results.append(result)
    return results


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="foascene.acceptance", description=__doc__.splitlines()[0])
    parser.add_argument("--only", type=int, nargs="+", choices=range(1, 11), metavar="N",
                        help="criterion numbers to run")
    args = parser.parse_args(argv)
    results = run(args.only)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed" + (f"; failed: {failed}" if failed else ""))
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
