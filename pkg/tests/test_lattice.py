import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import block
from modules.errors import EmptyRegionError, GridMismatchError, InputError
from modules.lattice import (
    Field,
    GridSpec,
    Partition,
    Region,
    in_smooth_class,
    intrinsic_diameter,
    region_distance,
    smoothness_index,
    symmetric_difference,
)

points_2d = st.tuples(st.integers(1, 6), st.integers(1, 6))
regions_2d = st.lists(points_2d, max_size=12).map(lambda pts: Region(tuple(pts)))
nonempty_regions_2d = st.lists(points_2d, min_size=1, max_size=12).map(lambda pts: Region(tuple(pts)))


def test_grid_spec_sizes():
    grid = GridSpec((4, 7, 2))
    assert grid.n == 56
    assert grid.n_max == 7
    assert grid.d == 3


def test_grid_points_are_one_based_row_major():
    pts = GridSpec((2, 3)).points()
    assert pts.tolist() == [[1, 1], [1, 2], [1, 3], [2, 1], [2, 2], [2, 3]]


def test_grid_rejects_bad_dims():
    with pytest.raises(InputError):
        GridSpec((3, 0))


def test_region_is_canonical():
    region = Region(((2, 1), (1, 1), (1, 1), (1, 5)))
    assert region.points == ((1, 1), (1, 5), (2, 1))
    assert region == Region(((1, 5), (2, 1), (1, 1)))
    assert hash(region) == hash(Region(((1, 5), (2, 1), (1, 1))))


def test_region_rejects_mixed_dimensions():
    with pytest.raises(GridMismatchError):
        Region(((1, 1), (1, 1, 1)))


def test_region_json_schema():
    region = Region(((2, 3), (1, 4)))
    payload = region.to_json_dict()
    assert payload == {"points": [[1, 4], [2, 3]]}
    assert Region.from_json_dict(payload) == region


def test_region_set_operations():
    a = block(1, 1, 2, 2)
    b = block(2, 2, 2, 2)
    assert len(a.union(b)) == 7
    assert a.difference(b).points == ((1, 1), (1, 2), (2, 1))
    assert a.intersection(b).points == ((2, 2),)
    assert a.translate((3, 4)) == block(4, 5, 2, 2)


@pytest.mark.parametrize(
    "a, b, expected",
    [
        (Region(((1, 1), (3, 2))), Region(((1, 1), (3, 2))), 0),
        (Region(((1, 1),)), Region(), 1),
        (Region(((1, 1), (1, 2))), Region(((1, 2), (2, 2))), 2),
    ],
)
def test_symmetric_difference_examples(a, b, expected):
    assert symmetric_difference(a, b) == expected


def test_symmetric_difference_mismatched_lattices():
    with pytest.raises(GridMismatchError):
        symmetric_difference(Region(((1, 1),)), Region(((1, 1, 1),)))
    with pytest.raises(GridMismatchError):
        symmetric_difference(Region(((1, 9),)), Region(((1, 1),)), grid=GridSpec((4, 4)))


@given(regions_2d, regions_2d, regions_2d)
def test_symmetric_difference_is_a_metric(a, b, c):
    assert (symmetric_difference(a, b) == 0) == (a == b)
    assert symmetric_difference(a, b) == symmetric_difference(b, a)
    assert symmetric_difference(a, c) <= symmetric_difference(a, b) + symmetric_difference(b, c)


@pytest.mark.parametrize(
    "a, b, expected",
    [
        (Region(((1, 1),)), Region(((1, 1),)), 0.0),
        (Region(((1, 1),)), Region(((4, 5),)), 5.0),
        (Region(((1, 1), (2, 2))), Region(((2, 4), (9, 9))), 2.0),
    ],
)
def test_region_distance_examples(a, b, expected):
    assert region_distance(a, b) == pytest.approx(expected)


def test_region_distance_needs_points():
    with pytest.raises(EmptyRegionError):
        region_distance(Region(), Region(((1, 1),)))


def test_intrinsic_diameter_examples():
    assert intrinsic_diameter(Region(((3, 3),))) == 0.0
    assert intrinsic_diameter(Region(((1, 1), (1, 4)))) == pytest.approx(3.0)
    assert intrinsic_diameter(block(1, 1, 3, 3)) == pytest.approx(2 * math.sqrt(2))
    with pytest.raises(EmptyRegionError):
        intrinsic_diameter(Region())


@given(nonempty_regions_2d, nonempty_regions_2d)
def test_distances_match_exhaustive_pairs(a, b):
    pairs = [math.dist(p, q) for p in a for q in b]
    inner = [math.dist(p, q) for p, q in itertools.product(a, a)]
    assert region_distance(a, b) == pytest.approx(min(pairs))
    assert intrinsic_diameter(a) == pytest.approx(max(inner))


def test_smoothness_index_examples():
    rect = block(2, 3, 4, 5)
    assert smoothness_index(rect, 1) == 1
    assert smoothness_index(rect, 2) == 1
    assert smoothness_index(Region(((1, 1), (1, 3))), 2) == 2
    assert smoothness_index(Region(((1, 1), (1, 3))), 1) == 1
    assert smoothness_index(Region(), 1) == 0


def test_smoothness_index_counts_six_segments_on_a_row():
    row = Region(tuple((4, c) for c in (1, 2, 4, 6, 7, 8, 10, 12, 14)))
    assert smoothness_index(row, 2) == 6


def test_isolated_point_adds_a_run():
    rect = block(1, 1, 3, 3)
    assert smoothness_index(rect.union(Region(((2, 5),))), 2) == 2
    assert in_smooth_class(rect, 1)
    assert not in_smooth_class(rect.union(Region(((2, 5),))), 1)


def test_smoothness_index_bad_axis():
    with pytest.raises(InputError):
        smoothness_index(block(1, 1, 2, 2), 3)


def test_field_mask_and_values():
    values = np.arange(6, dtype=float).reshape(2, 3)
    mask = np.array([[True, False, True], [True, True, True]])
    field = Field.from_array(values, mask)
    assert field.n_valid == 5
    assert field.valid_values().tolist() == [0.0, 2.0, 3.0, 4.0, 5.0]
    assert field.values_of(Region(((2, 1), (1, 3)))).tolist() == [2.0, 3.0]
    with pytest.raises(InputError):
        field.values_of(Region(((1, 2),)))


def test_field_shape_must_match_grid():
    with pytest.raises(GridMismatchError):
        Field(GridSpec((2, 2)), np.zeros((2, 3)))


def test_partition_from_anomalies_covers_valid_cells():
    mask = np.ones((4, 4), dtype=bool)
    mask[3, 3] = False
    field = Field.from_array(np.zeros((4, 4)), mask)
    a = block(1, 1, 2, 2)
    b = Region(((4, 1), (4, 2)))
    partition = Partition.from_anomalies(field, [a, b])
    assert partition.m == 2
    assert len(partition.baseline) == 15 - 6
    assert partition.covered() == field.valid_region()


def test_partition_rejects_overlap():
    field = Field.from_array(np.zeros((3, 3)))
    with pytest.raises(InputError):
        Partition.from_anomalies(field, [block(1, 1, 2, 2), block(2, 2, 2, 2)])
    with pytest.raises(InputError):
        Partition(block(1, 1, 1, 2), (Region(((1, 2),)),))
