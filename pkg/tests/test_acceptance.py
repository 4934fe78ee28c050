"""The ten acceptance criteria at full size; each prints its one-line verdict.

Run ``python3 -m foascene.acceptance`` for the same lines without pytest.
"""
import pytest

from foascene import acceptance


@pytest.fixture
def checks(pool_path, tmp_path):
    return {
        1: acceptance.check_matching_oracle,
        2: acceptance.check_protocol_identities,
        3: acceptance.check_permutation_invariance,
        4: acceptance.check_round_trip,
        5: acceptance.check_zone_geometry,
        6: acceptance.check_acoustics,
        7: lambda: acceptance.check_levels(pool_path),
        8: lambda: acceptance.check_localizer(pool_path),
        9: acceptance.check_iou,
        10: lambda: acceptance.check_end_to_end(pool_path, tmp_path / "e2e"),
    }


@pytest.mark.parametrize("number", range(1, 11))
def test_criterion(number, checks):
    result = checks[number]()
    print(result.line())
    assert result.passed, result.line()
