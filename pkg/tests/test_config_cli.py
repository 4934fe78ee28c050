import math
import filecmp
import json
import subprocess
import sys

import numpy as np
import pytest

from foascene.audio_io import write_wav
from foascene.cli import main
from foascene.config import ConfigError, ToolConfig, apply_env, config_from_dict, load_config, override
from foascene.rir import encode_foa
from foascene.scene import SceneMeta
from foascene.scenetext import parse, render
from foascene.zones import angles_to_vector


def _run(*args):
    return subprocess.run([sys.executable, "-m", "foascene", *args], capture_output=True, text=True)


# ------------------------------------------------------------------ config


def test_defaults():
    config = load_config(None, environ={})
    assert config == ToolConfig()
    assert config.synth.max_sources == 4 and config.similarity.kind == "lexical"


def test_precedence(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"seed": 3, "synth": {"max_sources": 3, "snr_range": [2, 8]}}))
    from_file = load_config(str(path), environ={})
    assert from_file.seed == 3 and from_file.synth.max_sources == 3 and from_file.synth.snr_range == (2, 8)
    from_env = load_config(str(path), environ={"FOASCENE_SEED": "5", "FOASCENE_MAX_SOURCES": "2"})
    assert from_env.seed == 5 and from_env.synth.max_sources == 2
    from_cli = override(from_env, None, seed=9)
    assert from_cli.seed == 9 and from_cli.synth.max_sources == 2
    assert override(from_cli, None, seed=None) == from_cli


@pytest.mark.parametrize("payload, message", [
    ({"sed": 1}, "unknown keys"),
    ({"synth": {"max_sources": 9}}, "max_sources"),
    ({"synth": 3}, "expected an object"),
])
def test_invalid_config_values(payload, message):
    with pytest.raises(ConfigError, match=message):
        config_from_dict(payload)


def test_invalid_config_files(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="line 1"):
        load_config(str(bad), environ={})
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "missing.json"), environ={})
    with pytest.raises(ConfigError, match="FOASCENE_SEED"):
        apply_env(ToolConfig(), {"FOASCENE_SEED": "many"})


def test_env_reaches_nested_sections():
    config = apply_env(ToolConfig(), {"FOASCENE_EMBED_URL": "http://h/embed", "FOASCENE_EMBED_BATCH": "7"})
    assert config.similarity.embedding.endpoint == "http://h/embed"
    assert config.similarity.embedding.batch_size == 7


# --------------------------------------------------------------------- cli


def test_usage_errors_exit_2(tmp_path):
    assert _run().returncode == 2
    assert _run("eval", "--ref", "x").returncode == 2
    result = _run("parse", "--workers", "0", "--text", str(tmp_path / "t.txt"))
    assert result.returncode == 2
    assert json.loads(result.stderr.strip().splitlines()[-1])["error"] == "usage"


def test_data_errors_exit_1_with_json(tmp_path):
    result = _run("localize", "--workers", "1", "--wav", str(tmp_path / "missing.wav"))
    assert result.returncode == 1
    error = json.loads(result.stderr.strip().splitlines()[-1])
    assert error["error"] == "data" and "missing.wav" in error["message"]


def test_render_and_parse_commands(tmp_path, capsys):
    rng = np.random.default_rng(0)
    from foascene.random_scenes import random_scene

    scene = random_scene(rng, n_src=3)
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(scene.to_dict()))
    assert main(["render", "--workers", "1", "--manifest", str(path)]) == 0
    text = capsys.readouterr().out
    assert text == render(scene)
    (tmp_path / "scene.txt").write_text(text)
    assert main(["parse", "--workers", "1", "--text", str(tmp_path / "scene.txt")]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert SceneMeta.from_dict(payload["scene"]) == parse(text).parsed and payload["warnings"] == []


def test_localize_and_features_commands(tmp_path, capsys):
    from foascene.features import read_features

    rng = np.random.default_rng(1)
    signal = np.concatenate([np.zeros(8000), rng.standard_normal(16000), np.zeros(8000)])
    foa = 0.1 * np.outer(encode_foa(angles_to_vector(90.0, 0.0)), signal)
    write_wav(tmp_path / "left.wav", foa, 16000)
    assert main(["localize", "--workers", "1", "--wav", str(tmp_path / "left.wav"),
                 "--json", str(tmp_path / "loc.json")]) == 0
    events = json.loads((tmp_path / "loc.json").read_text())["events"]
    assert [e["zone"] for e in events] == ["horizontal left"]
    assert main(["features", "--workers", "1", "--wav", str(tmp_path / "left.wav"),
                 "--out", str(tmp_path / "f.bin")]) == 0
    assert read_features(tmp_path / "f.bin").as_array().shape == (7, math.ceil((32000 - 512) / 160) + 1, 64)


def test_rir_command(tmp_path):
    assert main(["rir", "--workers", "1", "--seed", "4", "--positions", "0", "5", "--max-order", "2",
                 "--out", str(tmp_path)]) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["rir_pos_00.json", "rir_pos_00.wav", "rir_pos_05.json", "rir_pos_05.wav", "room.json"]
    assert main(["rir", "--workers", "1", "--positions", "99", "--out", str(tmp_path)]) == 2


@pytest.fixture(scope="module")
def dataset(pool_path, tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    args = ["synth", "--seed", "3", "--pool", str(pool_path), "--rooms", "2", "--clips", "12"]
    assert _run(*args, "--workers", "1", "--out", str(out / "a")).returncode == 0
    assert _run(*args, "--workers", "3", "--out", str(out / "b")).returncode == 0
    return out


def test_synth_is_reproducible_across_worker_counts(dataset):
    a, b = dataset / "a", dataset / "b"
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    assert len([n for n in names if n.endswith(".wav")]) == 12
    match, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    assert mismatch == [] and errors == []


def test_eval_self_score_and_report(dataset, tmp_path):
    manifest = dataset / "a" / "manifest.jsonl"
    for protocol in ("os", "om"):
        report = tmp_path / f"{protocol}.json"
        result = _run("eval", "--workers", "1", "--ref", str(manifest), "--hyp", str(manifest),
                      "--protocol", protocol, "--report", str(report))
        assert result.returncode == 0, result.stderr
        summary = json.loads(report.read_text())["summary"]
        assert summary["all"]["clips"] == 12
        assert summary["all"]["tuple_score"]["mean"] == 1.0
        assert summary["all"]["count_accuracy"]["mean"] == 1.0
        assert list(summary["by_n_src"]) == ["1", "2", "3", "4"]
    table = _run("report", "--workers", "1", str(tmp_path / "os.json"), "--group-by", "n_src", "--format", "table")
    assert table.returncode == 0
    rows = table.stdout.strip().splitlines()
    assert rows[0].startswith("subset\tclips\tRoomVol ErrLog2")
    assert [r.split("\t")[0] for r in rows[1:]] == ["all"] + [f"n_src={k}" for k in range(1, 5)]
    mixed = _run("report", "--workers", "1", str(tmp_path / "os.json"), str(tmp_path / "om.json"))
    assert mixed.returncode == 1


def test_eval_rejects_hypotheses_without_text(dataset, tmp_path):
    hyp = tmp_path / "hyp.jsonl"
    hyp.write_text(json.dumps({"clip_id": "clip_000000"}) + "\n")
    result = _run("eval", "--workers", "1", "--ref", str(dataset / "a" / "manifest.jsonl"), "--hyp", str(hyp))
    assert result.returncode == 1
