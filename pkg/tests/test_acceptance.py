"""Long Monte-Carlo and oracle runs; enabled with --runslow."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull

from modules.cost import CostParams
from modules.detector import DetectorConfig, detect
from modules.evaluate import err_metric, run_monte_carlo
from modules.hull import hull_cardinality
from modules.lattice import Field, Region
from modules.oracle import exact_minimise
from modules.simulate import SimSetting, make_rng

pytestmark = pytest.mark.slow


def _halfspace_count(coords: np.ndarray) -> int:
    lo, hi = coords.min(axis=0), coords.max(axis=0)
    box = np.array(list(itertools.product(*(range(a, b + 1) for a, b in zip(lo, hi)))), dtype=float)
    rank = np.linalg.matrix_rank(coords - coords[0])
    if rank < coords.shape[1]:
        return -1
    hull = ConvexHull(coords.astype(float))
    d = coords.shape[1]
    return int((box @ hull.equations[:, :d].T + hull.equations[:, d] <= 1e-9).all(axis=1).sum())


def test_first_setting_at_desk_scale():
    setting = SimSetting(setting_id="1", dims=(20, 20), delta=3, total_area=125, seed=0)
    report = run_monte_carlo(setting, DetectorConfig(), B=50, workers=8)
    assert report.noc >= 0.85
    assert report.err <= 0.20


def test_first_setting_improves_with_signal():
    nocs, errs = [], []
    for delta in (1.0, 2.0, 3.0):
        setting = SimSetting(setting_id="1", dims=(20, 20), delta=delta, total_area=125, seed=0)
        report = run_monte_carlo(setting, DetectorConfig(), B=50, workers=8)
        nocs.append(report.noc)
        errs.append(report.err)
    assert all(b >= a - 0.05 for a, b in zip(nocs, nocs[1:]))
    assert all(b <= a + 0.05 for a, b in zip(errs, errs[1:]))


def test_three_dimensional_detection():
    setting = SimSetting(setting_id="three_d", dims=(12, 12, 12), delta=3, total_area=59, seed=0)
    report = run_monte_carlo(setting, DetectorConfig(), B=30, workers=8)
    assert report.noc >= 0.75


@pytest.mark.parametrize(
    "setting_id, area",
    [("1", 405), ("2", 500), ("3", 500)],
)
def test_noiseless_benchmark_grids_are_recovered_exactly(setting_id, area):
    setting = SimSetting(setting_id=setting_id, dims=(50, 50), delta=3, total_area=area, sigma=0)
    report = run_monte_carlo(setting, DetectorConfig(m_max=6), B=5, workers=5)
    assert report.noc == 1.0
    assert report.err == 0.0


def test_fast_decaying_correlation_does_no_worse_than_slow():
    errs = {}
    for zeta in (3.0, 0.01):
        setting = SimSetting(setting_id="2", dims=(50, 50), delta=3, total_area=500, zeta=zeta, seed=0)
        report = run_monte_carlo(setting, DetectorConfig(n_stride=5), B=20, workers=8)
        assert report.failures == 0
        errs[zeta] = report.err
    assert errs[3.0] <= errs[0.01] + 0.05


def test_reports_do_not_depend_on_worker_count():
    setting = SimSetting(setting_id="2", dims=(24, 24), delta=3, total_area=80, seed=5)
    serial = run_monte_carlo(setting, DetectorConfig(), B=10, workers=1)
    parallel = run_monte_carlo(setting, DetectorConfig(), B=10, workers=4)
    assert parallel.to_report_dict() == serial.to_report_dict()


@pytest.mark.parametrize("dims, count", [((15, 15), 1000), ((8, 8, 8), 200)])
def test_hull_counts_match_halfspace_enumeration(dims, count):
    rng = make_rng(2024)
    mismatches = 0
    checked = 0
    while checked < count:
        size = int(rng.integers(4, 30))
        coords = np.column_stack([rng.integers(1, n + 1, size) for n in dims])
        region = Region.from_array(coords)
        expected = _halfspace_count(region.coords())
        if expected < 0:
            continue
        checked += 1
        mismatches += hull_cardinality(region) != expected
    assert mismatches == 0


def test_detector_is_bounded_by_the_exact_minimum():
    rng = make_rng(7)
    for _ in range(500):
        field = Field.from_array(rng.normal(0.0, 1.0, (3, 3)))
        params = CostParams(beta=float(rng.uniform(0, 10)), lam=float(rng.uniform(0, 2)), mu0=0.0, sigma2=1.0)
        oracle = exact_minimise(field, params, max_labels=2)
        found = detect(field, DetectorConfig(params=params, m_max=2))
        assert found.best_cost.total >= oracle.best_cost - 1e-9


def test_detector_matches_the_oracle_at_high_signal():
    rng = make_rng(8)
    params = CostParams(beta=40, lam=40 / 9, mu0=0.0, sigma2=1.0)
    matches = 0
    for _ in range(500):
        values = rng.normal(0.0, 1.0, (3, 3))
        r, c = rng.integers(0, 2, 2)
        values[r:r + 2, c:c + 2] += 10.0
        field = Field.from_array(values)
        oracle = exact_minimise(field, params, max_labels=2)
        found = detect(field, DetectorConfig(params=params, m_max=2))
        matches += tuple(found.regions) == oracle.best_partition.anomalies
    assert matches >= 475


regions_2d = st.lists(st.tuples(st.integers(1, 10), st.integers(1, 10)), min_size=1, max_size=20).map(
    lambda pts: Region(tuple(pts))
)


@settings(max_examples=10_000, deadline=None)
@given(st.lists(regions_2d, min_size=1, max_size=4), st.randoms())
def test_err_properties(truth, random):
    assert err_metric(truth, truth) == 0.0
    assert err_metric(truth, []) == 1.0
    shuffled = list(truth)
    random.shuffle(shuffled)
    assert err_metric(truth, shuffled) == 0.0
