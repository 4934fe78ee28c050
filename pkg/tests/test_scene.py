import pytest
from hypothesis import given
from hypothesis import strategies as st

from foascene.random_scenes import random_scene
from foascene.scene import ORDERINGS, SceneMeta, SourceMeta, on_grid, quantize_scalar, sort_sources
from foascene.zones import DirectionZone

import numpy as np


@pytest.mark.parametrize("value, kind, expected", [
    (2.34, "distance", 2.3),
    (-17.49, "loudness", -17.0),
    (48.0, "room_volume", 100.0),
    (0.35, "time", 0.4),
    (2.25, "rt60", 2.3),
    (-0.5, "c50", 0.0),
    (1250.0, "room_volume", 1300.0),
])
def test_quantize_scalar_examples(value, kind, expected):
    assert quantize_scalar(value, kind) == expected


def test_quantize_scalar_rejects_bad_input():
    with pytest.raises(ValueError):
        quantize_scalar(1.0, "weight")
    with pytest.raises(ValueError):
        quantize_scalar(float("inf"), "time")
    with pytest.raises(ValueError):
        quantize_scalar(0.0, "distance")


@given(st.floats(-1000, 1000, allow_nan=False), st.sampled_from(["time", "loudness", "c50", "rt60"]))
def test_quantize_is_idempotent(value, kind):
    q = quantize_scalar(value, kind)
    assert quantize_scalar(q, kind) == q
    assert on_grid(q, kind)


def _source(label, loudness, onset=0.0, zone="horizontal front", distance=1.0):
    return SourceMeta(label=label, onset_s=onset, offset_s=onset + 1.0, zone=DirectionZone.from_name(zone),
                      distance_m=distance, loudness_dba=loudness, c50_db=10.0)


def test_build_quantizes_and_orders_by_loudness():
    scene = SceneMeta.build(
        room_volume_m3=48.0, rt60_s=0.44, noise_label="hum", noise_loudness_db=-50.4,
        sources=[_source("quiet", -20.2), _source("loud", -10.4)],
    )
    assert [s.label for s in scene.sources] == ["loud", "quiet"]
    assert scene.room_volume_m3 == 100.0 and scene.rt60_s == 0.4 and scene.n_src == 2
    assert scene.sources[0].loudness_dba == -10.0
    scene.validate()


def test_loudness_ties_break_by_onset_then_label():
    a = _source("b", -10, onset=2.0)
    b = _source("a", -10, onset=2.0)
    c = _source("c", -10, onset=1.0)
    assert [s.label for s in sort_sources([a, b, c], "loudness")] == ["c", "a", "b"]


def test_validate_rejects_incomplete_reference():
    scene = SceneMeta(room_volume_m3=100.0, rt60_s=0.5, n_src=2, noise_label="x", noise_loudness_db=-40.0,
                      sources=(_source("a", -10),))
    with pytest.raises(ValueError):
        scene.validate()


def test_to_from_dict_round_trip():
    scene = random_scene(np.random.default_rng(5), n_src=4)
    assert SceneMeta.from_dict(scene.to_dict()) == scene


@given(st.integers(0, 10_000), st.sampled_from(ORDERINGS))
def test_random_scenes_are_valid_references(seed, order):
    scene = random_scene(np.random.default_rng(seed))
    scene.validate()
    reordered = scene.reordered(order)
    assert sorted(map(repr, reordered.sources)) == sorted(map(repr, scene.sources))
