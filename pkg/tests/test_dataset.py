import json

import numpy as np
import pytest

from foascene.dataset import clip_name, derive_seed, generate_dataset, read_manifest
from foascene.scene import SceneMeta
from foascene.scenetext import parse
from foascene.synth import SynthConfig


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(0, 1, 5) == derive_seed(0, 1, 5)
    seeds = {derive_seed(m, s, i) for m in range(3) for s in range(2) for i in range(100)}
    assert len(seeds) == 600
    assert all(0 <= s < 2**32 for s in seeds)


def test_clip_name():
    assert clip_name(7) == "clip_000007"


@pytest.fixture(scope="module")
def records(pool, tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    return out, generate_dataset(pool, out, n_rooms=2, n_clips=6, seed=11, config=SynthConfig(), workers=1)


def test_layout_and_manifest(records):
    out, recs = records
    manifest = read_manifest(out / "manifest.jsonl")
    assert list(manifest) == [clip_name(i) for i in range(6)]
    rooms = json.loads((out / "rooms.json").read_text())
    assert [r["room_index"] for r in rooms] == [0, 1]
    for rec in recs:
        for ext in ("wav", "txt", "json"):
            assert (out / f"{rec['clip_id']}.{ext}").exists()
        scene = SceneMeta.from_dict(rec["scene"])
        scene.validate()
        assert parse((out / f"{rec['clip_id']}.txt").read_text()).parsed == scene
        assert manifest[rec["clip_id"]] == json.loads(json.dumps(rec, sort_keys=True))


def test_worker_count_does_not_change_output(pool, records, tmp_path):
    _, serial = records
    parallel = generate_dataset(pool, tmp_path, n_rooms=2, n_clips=6, seed=11, config=SynthConfig(), workers=3)
    assert parallel == serial


def test_read_manifest_reports_bad_lines(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text('{"clip_id": "a"}\n\n{oops\n')
    with pytest.raises(ValueError, match=r"m\.jsonl:3: invalid JSON"):
        read_manifest(path)


def test_needs_a_room(pool, tmp_path):
    with pytest.raises(ValueError):
        generate_dataset(pool, tmp_path, n_rooms=0, n_clips=1, seed=0)
