import itertools

import pytest

from sarsim.sampling import halton_2d, hammersley_2d, radical_inverse


def test_radical_inverse_base2_values():
    assert radical_inverse(2, 0) == 0.0
    assert radical_inverse(2, 1) == 0.5
    assert radical_inverse(2, 2) == 0.25
    assert radical_inverse(2, 3) == 0.75
    assert radical_inverse(2, 4) == 0.125


def test_radical_inverse_base3_values():
    assert radical_inverse(3, 1) == pytest.approx(1 / 3)
    assert radical_inverse(3, 2) == pytest.approx(2 / 3)
    assert radical_inverse(3, 3) == pytest.approx(1 / 9)


def test_radical_inverse_negative_index_raises():
    with pytest.raises(ValueError):
        radical_inverse(2, -1)


def test_halton_first_points():
    pts = list(itertools.islice(halton_2d(), 3))
    assert pts[0] == (0.5, pytest.approx(1 / 3))
    assert pts[1] == (0.25, pytest.approx(2 / 3))
    assert pts[2] == (0.75, pytest.approx(1 / 9))


def test_halton_start_index_shifts():
    shifted = list(itertools.islice(halton_2d(start_index=3), 2))
    plain = list(itertools.islice(halton_2d(), 4))
    assert shifted == plain[2:]


def test_hammersley_point_set():
    assert hammersley_2d(4) == [(0.25, 0.5), (0.5, 0.25), (0.75, 0.75), (0.0, 0.0)]


def test_hammersley_offset_rotates_set():
    base = hammersley_2d(8)
    rotated = hammersley_2d(8, offset=3)
    assert sorted(base) == sorted(rotated)
    assert base != rotated


def test_hammersley_is_deterministic():
    assert hammersley_2d(64, offset=5) == hammersley_2d(64, offset=5)


def test_hammersley_rejects_empty():
    with pytest.raises(ValueError):
        hammersley_2d(0)
