import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from foascene.random_scenes import random_scene
from foascene.scene import ORDERINGS, SceneMeta, SourceMeta
from foascene.scenetext import (
    LEGEND, CountMismatch, DroppedSource, MalformedHeader, UnknownZoneName, UnparsableNumber, parse, render,
)
from foascene.zones import DirectionZone

CANONICAL = """room_volume=400; RT60=0.5; n_src=2.
noise_label:air conditioner hum; noise_loudness=-35.
Sound label:(time, direction, distance, loudness, C50):
dog barking: (1.2-3.4, upper back-left, 2.3, -17, 12);
[en] hello there: (0.0-5.0, horizontal front, 1.5, -20, 8);
"""


def _src(label, loudness, language=None):
    return SourceMeta(label=label, language=language, onset_s=0.0, offset_s=1.0,
                      zone=DirectionZone.from_name("horizontal front"), distance_m=1.0,
                      loudness_dba=loudness, c50_db=5.0)


def test_canonical_text_parses_without_warnings():
    result = parse(CANONICAL)
    assert result.parse_warnings == []
    scene = result.parsed
    assert scene.room_volume_m3 == 400 and scene.rt60_s == 0.5 and scene.n_src == 2
    assert scene.noise_label == "air conditioner hum" and scene.noise_loudness_db == -35
    dog, speech = scene.sources
    assert dog.label == "dog barking" and dog.zone == DirectionZone("upper", "back-left")
    assert (dog.onset_s, dog.offset_s, dog.distance_m, dog.loudness_dba, dog.c50_db) == (1.2, 3.4, 2.3, -17, 12)
    assert speech.language == "en" and speech.transcription == "hello there"
    assert render(scene) == CANONICAL


def test_empty_scene_renders_header_only():
    scene = SceneMeta(room_volume_m3=100.0, rt60_s=0.3, n_src=0, noise_label="hum", noise_loudness_db=-50.0)
    text = render(scene)
    assert text.splitlines() == ["room_volume=100; RT60=0.3; n_src=0.",
                                 "noise_label:hum; noise_loudness=-50.", LEGEND]
    assert parse(text).parsed == scene


def test_loudest_source_rendered_first():
    scene = SceneMeta(room_volume_m3=100.0, rt60_s=0.3, n_src=2, noise_label="hum", noise_loudness_db=-50.0,
                      sources=(_src("quiet", -20.0), _src("loud", -10.0)))
    lines = render(scene, "loudness").splitlines()
    assert lines[3].startswith("loud:") and lines[4].startswith("quiet:")


def test_count_mismatch_keeps_enumerated_sources():
    text = CANONICAL.replace("n_src=2", "n_src=2").replace(
        "[en] hello", "cat meowing: (2.0-2.5, below, 1.0, -30, 3);\n[en] hello")
    result = parse(text)
    assert len(result.parsed.sources) == 3
    assert result.parsed.n_src == 2
    assert any(isinstance(w, CountMismatch) for w in result.parse_warnings)
    assert not result.errors


def test_garbage_gives_empty_scene_and_malformed_header():
    result = parse("the quick brown fox")
    assert result.parsed.sources == ()
    assert any(isinstance(w, MalformedHeader) for w in result.errors)


def test_errors_are_located():
    text = CANONICAL.replace("upper back-left", "upper sideways").replace("2.3,", "two,")
    result = parse(text)
    kinds = {type(w) for w in result.parse_warnings}
    assert UnknownZoneName in kinds or DroppedSource in kinds
    for issue in result.parse_warnings:
        assert issue.line >= 1 and issue.column >= 1


def test_unparsable_number_is_reported_with_position():
    text = CANONICAL.replace("-17", "loud")
    result = parse(text)
    issues = [w for w in result.parse_warnings if isinstance(w, UnparsableNumber)]
    assert issues and issues[0].line == 4
    assert result.parsed.sources[0].loudness_dba is None


def test_tolerant_parse_accepts_units_case_and_wrapping():
    text = ("ROOM_VOLUME = 400 m3 ;  rt60=0.5 s; n_src=1.\n noise_label: hum ; noise_loudness=-35 dB.\n"
            "Sound label:(time, direction, distance, loudness, C50):\n"
            "dog barking:\n  (1.2 - 3.4, Upper Back-Left, 2.3 m, -17 dBA, 12 dB);\n")
    result = parse(text)
    assert not result.errors
    source = result.parsed.sources[0]
    assert source.zone == DirectionZone("upper", "back-left") and source.distance_m == 2.3
    assert source.loudness_dba == -17


def test_placeholders_become_absent_fields():
    result = parse(CANONICAL.replace("2.3, -17, 12", "?, -17, ?"))
    dog = result.parsed.sources[0]
    assert dog.distance_m is None and dog.c50_db is None and dog.loudness_dba == -17


def test_reserved_label_characters_rejected_at_render():
    scene = SceneMeta(room_volume_m3=100.0, rt60_s=0.3, n_src=1, noise_label="hum", noise_loudness_db=-50.0,
                      sources=(_src("a: b", -10.0),))
    with pytest.raises(ValueError):
        render(scene)


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(ORDERINGS))
def test_round_trip_all_orderings(seed, order):
    scene = random_scene(np.random.default_rng(seed))
    text = render(scene, order)
    result = parse(text)
    assert result.parse_warnings == []
    assert result.parsed == scene.reordered(order)
    assert render(result.parsed, order) == text


@given(st.integers(0, 2 ** 32 - 1))
def test_render_is_injective_up_to_order(seed):
    rng = np.random.default_rng(seed)
    a, b = random_scene(rng), random_scene(rng)
    if a != b:
        assert render(a) != render(b)


@given(st.binary(max_size=400))
def test_parser_never_raises_on_bytes(data):
    parse(data)


@given(st.text(alphabet=st.sampled_from(list("room_volume=RT60n_src;:.,()[]-? 0123456789\nabove")), max_size=200))
def test_parser_never_raises_on_token_soup(text):
    result = parse(text)
    assert isinstance(result.parsed, SceneMeta)
