import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from foascene.zones import (
    ALL_ZONES, DirectionZone, angles_to_vector, quantize_direction, quantize_vector, vector_to_angles,
    wrap_azimuth, zone_angle_error, zone_center, zone_center_angles,
)

azimuths = st.floats(-720, 720, allow_nan=False)
elevations = st.floats(-90, 90, allow_nan=False)


@pytest.mark.parametrize("az, el, name", [
    (0, 0, "horizontal front"),
    (17, 90, "above"),
    (-123, 90, "above"),
    (135, 30, "upper back-left"),
    (90, 0, "horizontal left"),
    (-90, -80, "below"),
])
def test_quantize_examples(az, el, name):
    assert quantize_direction(az, el).name == name


def test_there_are_26_distinct_zones():
    assert len(ALL_ZONES) == 26
    assert len({z.name for z in ALL_ZONES}) == 26
    assert [z.index for z in ALL_ZONES] == list(range(26))


@pytest.mark.parametrize("name, az, el", [
    ("horizontal front", 0, 0),
    ("upper left", 90, 45),
])
def test_zone_center_examples(name, az, el):
    center = zone_center(DirectionZone.from_name(name))
    np.testing.assert_allclose(center, angles_to_vector(az, el), atol=1e-12)


def test_above_center_is_the_pole():
    np.testing.assert_allclose(zone_center(DirectionZone("above")), [0, 0, 1])


@pytest.mark.parametrize("a, b, angle", [
    ("horizontal front", "horizontal front", 0.0),
    ("above", "below", 180.0),
    ("horizontal front", "horizontal left", 90.0),
])
def test_angle_error_examples(a, b, angle):
    assert zone_angle_error(DirectionZone.from_name(a), DirectionZone.from_name(b)) == pytest.approx(angle, abs=1e-9)


def test_octant_edges_are_half_open():
    # [center - 22.5, center + 22.5): the lower edge belongs to the octant
    assert quantize_direction(22.5, 0).octant == "front-left"
    assert quantize_direction(-22.5, 0).octant == "front"
    assert quantize_direction(-180, 0).octant == "back"
    assert quantize_direction(180, 0).octant == "back"


def test_elevation_band_edges():
    assert quantize_direction(0, 67.5).band == "above"
    assert quantize_direction(0, 22.5).band == "horizontal"
    assert quantize_direction(0, -22.5).band == "horizontal"
    assert quantize_direction(0, -67.5).band == "below"


def test_zone_names_are_case_insensitive_and_validated():
    assert DirectionZone.from_name("Upper Back-Left") == DirectionZone("upper", "back-left")
    with pytest.raises(ValueError):
        DirectionZone.from_name("sideways")
    with pytest.raises(ValueError):
        DirectionZone("above", "front")


def test_non_finite_direction_rejected():
    with pytest.raises(ValueError):
        quantize_direction(math.nan, 0)


@given(azimuths, elevations)
def test_quantize_is_periodic_in_azimuth(az, el):
    assert quantize_direction(az, el) == quantize_direction(wrap_azimuth(az), el)


@given(st.sampled_from(ALL_ZONES))
def test_center_quantizes_to_its_zone(zone):
    assert quantize_direction(*zone_center_angles(zone)) == zone
    assert quantize_vector(zone_center(zone)) == zone


@given(st.sampled_from(ALL_ZONES), st.sampled_from(ALL_ZONES))
def test_angle_error_is_a_symmetric_bounded_distance(a, b):
    e = zone_angle_error(a, b)
    assert e == zone_angle_error(b, a)
    assert 0.0 <= e <= 180.0
    assert (e == 0.0) == (a == b)


@given(st.floats(-179.9, 179.9), st.floats(-89.9, 89.9))
def test_angles_vector_round_trip(az, el):
    back_az, back_el = vector_to_angles(angles_to_vector(az, el))
    assert back_az == pytest.approx(az, abs=1e-9)
    assert back_el == pytest.approx(el, abs=1e-9)
