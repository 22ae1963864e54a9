import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import block, paint
from modules.crs import ball, carve_balls, crs, crs_radius, crs_radius_sq, select_kept, sort_candidates
from modules.errors import InputError
from modules.lattice import Field, GridSpec, Region, intrinsic_diameter


def test_candidates_sorted_by_deviation_with_canonical_ties():
    field = Field.from_array([[1.0, -1.0], [0.0, 2.0]])
    order = sort_candidates(field, 0.0)
    assert order.points.tolist() == [[2, 2], [1, 1], [1, 2], [2, 1]]
    assert order.key.tolist() == [2.0, 1.0, 1.0, 0.0]
    assert len(order) == 4


def test_candidates_skip_masked_cells():
    mask = np.array([[True, False], [True, True]])
    field = Field.from_array([[1.0, 99.0], [0.0, 2.0]], mask)
    order = sort_candidates(field, 0.0)
    assert [2, 1] in order.points.tolist()
    assert [1, 2] not in order.points.tolist()


def test_radius_matches_ball_volume():
    grid2 = GridSpec((20, 20))
    assert crs_radius_sq(grid2, 4) == pytest.approx(400 / (4 * math.pi))
    grid3 = GridSpec((10, 10, 10))
    r = crs_radius(grid3, 5)
    assert 4 / 3 * math.pi * r ** 3 == pytest.approx(1000 / 5)
    with pytest.raises(InputError):
        crs_radius_sq(grid2, 0)


def test_ball_is_clipped_to_the_grid():
    grid = GridSpec((5, 5))
    assert len(ball(grid, (3, 3), 1.0)) == 5
    assert ball(grid, (1, 1), 1.0) == Region(((1, 1), (1, 2), (2, 1)))
    assert len(ball(grid, (3, 3), 1.5)) == 9
    assert ball(grid, (2, 2), 0.0) == Region(((2, 2),))


def test_carve_balls_labels():
    points = np.array([[1, 1], [1, 2], [5, 5], [1, 4], [5, 4]])
    labels = carve_balls(points, 1.0)
    assert labels.tolist() == [0, 0, 1, 2, 1]


@given(
    st.lists(st.tuples(st.integers(1, 12), st.integers(1, 12)), min_size=1, max_size=40, unique=True),
    st.floats(0.5, 20.0),
    st.integers(1, 40),
)
def test_carving_a_prefix_restricts_the_labels(pts, radius_sq, k):
    points = np.array(pts, dtype=np.int64)
    k = min(k, len(points))
    full = carve_balls(points, radius_sq)
    assert carve_balls(points[:k], radius_sq).tolist() == full[:k].tolist()
    assert (full >= 0).all()


def test_select_kept():
    assert select_kept([5, 1, 3, 4], 2, 2) == [0, 2]
    assert select_kept([5, 1, 3, 4], 5, 2) == [0, 2, 3]
    assert select_kept([1, 1], 3, 2) == []


def test_crs_recovers_a_square():
    field = paint((5, 5), [(block(2, 2, 2, 2), 10.0)])
    order = sort_candidates(field, 0.0)
    regions = crs(order, 4, 1, 0.0, field.grid)
    assert regions == [block(2, 2, 2, 2)]


def test_crs_discards_small_balls():
    field = paint((5, 5), [(block(2, 2, 2, 2), 10.0)])
    order = sort_candidates(field, 0.0)
    assert crs(order, 4, 1, 5.0, field.grid) == []


def test_crs_regions_are_disjoint_and_bounded():
    rng = np.random.default_rng(11)
    field = Field.from_array(rng.normal(size=(12, 12)))
    order = sort_candidates(field, 0.0)
    for m in (1, 3, 6):
        regions = crs(order, 60, m, 2.0, field.grid)
        assert len(regions) <= m
        seen = set()
        for region in regions:
            assert len(region) >= 2
            assert not seen.intersection(region.points)
            seen.update(region.points)


@pytest.mark.parametrize("N, m", [(0, 1), (26, 1), (3, 0)])
def test_crs_rejects_bad_arguments(N, m):
    field = Field.from_array(np.zeros((5, 5)))
    with pytest.raises(InputError):
        crs(sort_candidates(field, 0.0), N, m, 0.0, field.grid)


def test_two_far_clusters_come_back_as_two_regions():
    first, second = block(2, 2, 2, 5), block(15, 14, 2, 5)
    field = paint((20, 20), [(first, 10.0), (second, 9.0)])
    order = sort_candidates(field, 0.0)
    regions = crs(order, 20, 2, 5.0, field.grid)
    assert [set(r.points) for r in regions] == [set(first.points), set(second.points)]


@given(
    st.integers(0, 2 ** 32 - 1),
    st.integers(1, 144),
    st.integers(1, 8),
    st.floats(0.0, 6.0),
)
def test_balls_partition_the_prefix(seed, N, m, xi):
    field = Field.from_array(np.random.default_rng(seed).normal(size=(12, 12)))
    order = sort_candidates(field, 0.0)
    prefix = order.points[:N]
    labels = carve_balls(prefix, crs_radius_sq(field.grid, m))
    # one ball per loop pass, each taking at least its centre
    assert labels.min() == 0
    assert labels.max() + 1 <= N
    balls = [set(map(tuple, prefix[labels == b].tolist())) for b in range(labels.max() + 1)]
    assert sum(len(b) for b in balls) == N
    assert set().union(*balls) == set(map(tuple, prefix.tolist()))

    regions = crs(order, N, m, xi, field.grid)
    kept = [set(r.points) for r in regions]
    assert all(region in balls for region in kept)
    discarded = [b for b in balls if b not in kept]
    assert set().union(*kept, *discarded) == set(map(tuple, prefix.tolist()))
    for region in regions:
        assert intrinsic_diameter(region) <= 2 * crs_radius(field.grid, m) + 1e-9
