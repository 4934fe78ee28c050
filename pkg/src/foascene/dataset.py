"""Dataset generation: room banks, per-clip plans and renders, and the on-disk layout."""
from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from foascene.audio_io import write_json, write_wav
from foascene.rir import sample_room
from foascene.scenetext import render
from foascene.synth import RoomBank, SourcePool, SynthConfig, build_room_bank, plan_mixture, render_mixture

log = logging.getLogger(__name__)

ROOM_STREAM, CLIP_STREAM = 0, 1


def derive_seed(master_seed: int, stream: int, index: int) -> int:
    """Independent 32-bit seed for item ``index`` of ``stream``."""
    return int(np.random.SeedSequence([int(master_seed), stream, int(index)]).generate_state(1)[0])


def clip_name(index: int) -> str:
    return f"clip_{index:06d}"


def _bank_for(args) -> RoomBank:
    seed, config = args
    room = sample_room(seed, absorption_range=config.absorption_range)
    return build_room_bank(room, config.sample_rate, config.max_rir_duration)


def build_room_banks(n_rooms: int, seed: int, config: SynthConfig, workers: int = 1) -> List[RoomBank]:
    tasks = [(derive_seed(seed, ROOM_STREAM, i), config) for i in range(n_rooms)]
    if workers <= 1 or n_rooms <= 1:
        banks = [_bank_for(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            banks = list(executor.map(_bank_for, tasks))
    rt60 = np.array([b.rt60_s for b in banks])
    log.info("built %d rooms; RT60 min %.2f s, median %.2f s, max %.2f s",
             n_rooms, rt60.min(), np.median(rt60), rt60.max())
    return banks


_WORKER: dict = {}


def _init_worker(pool, banks, config, out_dir, seed) -> None:
    _WORKER.update(pool=pool, banks=banks, config=config, out_dir=Path(out_dir), seed=seed)


def _render_clip(index: int) -> dict:
    pool, banks, config = _WORKER["pool"], _WORKER["banks"], _WORKER["config"]
    out_dir, seed = _WORKER["out_dir"], _WORKER["seed"]
    rooms = [b.room for b in banks]
    plan = plan_mixture(pool, rooms, config, derive_seed(seed, CLIP_STREAM, index))
    result = render_mixture(plan, pool, banks[plan.room_index], config)
    name = clip_name(index)
    text = render(result.meta)
    write_wav(out_dir / f"{name}.wav", result.foa, config.sample_rate)
    with open(out_dir / f"{name}.txt", "w", encoding="utf-8") as fh:
        fh.write(text)
    record = {
        "clip_id": name,
        "wav": f"{name}.wav",
        "scene": result.meta.to_dict(),
        "text": text,
        "continuous": result.continuous,
        "plan": plan.to_dict(),
        "warnings": result.warnings,
    }
    write_json(out_dir / f"{name}.json", record)
    return record


def generate_dataset(
    pool: SourcePool,
    out_dir,
    n_rooms: int,
    n_clips: int,
    seed: int,
    config: Optional[SynthConfig] = None,
    workers: int = 1,
    save_rirs: bool = False,
) -> List[dict]:
    """Write ``n_clips`` clips plus ``manifest.jsonl`` and ``rooms.json`` into ``out_dir``.

    Every clip depends only on (seed, clip index) and the room banks, so the
    output is identical for any worker count.
    """
    config = config or SynthConfig()
    if n_rooms < 1:
        raise ValueError("need at least one room")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    banks = build_room_banks(n_rooms, seed, config, workers)
    write_json(out_dir / "rooms.json", [
        {"room_index": i, "rt60_s": b.rt60_s, "room": b.room.to_dict()} for i, b in enumerate(banks)
    ])
    if save_rirs:
        save_room_rirs(banks, out_dir / "rirs")

    if workers <= 1 or n_clips <= 1:
        _init_worker(pool, banks, config, out_dir, seed)
        records = [_render_clip(i) for i in range(n_clips)]
    else:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(pool, banks, config, out_dir, seed)
        ) as executor:
            records = list(executor.map(_render_clip, range(n_clips), chunksize=max(1, n_clips // (4 * workers))))
    with open(out_dir / "manifest.jsonl", "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    counts = np.bincount([r["scene"]["n_src"] for r in records], minlength=config.max_sources + 1)
    log.info("wrote %d clips to %s; n_src histogram %s", n_clips, out_dir, counts.tolist())
    return records


def save_room_rirs(banks: Sequence[RoomBank], out_dir) -> None:
    out_dir = Path(out_dir)
    for r, bank in enumerate(banks):
        for p, rir in enumerate(bank.rirs):
            stem = out_dir / f"room_{r:04d}_pos_{p:02d}"
            write_wav(f"{stem}.wav", rir.data, rir.sample_rate_hz)
            write_json(f"{stem}.json", rir.sidecar())


def read_manifest(path) -> dict:
    """Clip id -> manifest record from a JSONL file."""
    records = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: invalid JSON ({exc.msg})") from exc
            if "clip_id" not in record:
                raise ValueError(f"{path}:{line_no}: record lacks clip_id")
            records[record["clip_id"]] = record
    return records


def default_workers() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:  # pragma: no cover - non-Linux
        return max(1, os.cpu_count() or 1)
