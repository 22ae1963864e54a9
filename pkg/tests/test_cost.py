import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import block, paint
from modules.cost import (
    MAD_SCALE,
    CostParams,
    fitted_loss,
    l0_cost,
    penalised_cost,
    regional_loss,
    resolve_params,
    robust_baseline,
    signal_penalties,
    theoretical_penalties,
)
from modules.errors import DegenerateScaleError, EmptyRegionError, InputError, PenaltyRegimeError
from modules.lattice import Field, GridSpec, Partition, Region


@pytest.fixture
def spot():
    return paint((5, 5), [(block(2, 2, 2, 2), 10.0)])


def test_params_accept_lambda_alias():
    params = CostParams.model_validate({"beta": 1, "lambda": 0.5})
    assert params.lam == 0.5
    assert CostParams(beta=1, lam=0.5) == params
    assert params.model_dump(by_alias=True)["lambda"] == 0.5
    assert not params.resolved


def test_params_reject_negative_penalties():
    with pytest.raises(ValueError):
        CostParams(beta=-1)
    with pytest.raises(ValueError):
        CostParams(sigma2=0)


def test_regional_and_fitted_loss():
    field = Field.from_array([[1.0, 2.0, 3.0]])
    row = Region(((1, 1), (1, 2), (1, 3)))
    assert regional_loss(field, row, 0.0, 2.0) == pytest.approx(7.0)
    assert regional_loss(field, Region(), 0.0, 2.0) == 0.0
    loss, mean = fitted_loss(field, row, 0.5)
    assert mean == pytest.approx(2.0)
    assert loss == pytest.approx(4.0)
    with pytest.raises(EmptyRegionError):
        fitted_loss(field, Region(), 1.0)


def test_penalised_cost_breakdown(spot):
    params = CostParams(beta=40, lam=1.6, mu0=0.0, sigma2=1.0)
    found = penalised_cost(spot, Partition.from_anomalies(spot, [block(2, 2, 2, 2)]), params)
    assert found.loss_baseline == 0.0
    assert found.loss_anomalies == 0.0
    assert found.penalty_count == 40.0
    assert found.penalty_hull == pytest.approx(6.4)
    assert found.total == pytest.approx(46.4)
    empty = penalised_cost(spot, Partition.from_anomalies(spot, []), params)
    assert empty.total == pytest.approx(400.0)
    assert empty.penalty_count == 0.0


def test_hull_penalty_charges_holes(spot):
    ring = block(1, 1, 3, 3).difference(Region(((2, 2),)))
    params = CostParams(beta=0, lam=1.0, mu0=0.0, sigma2=1.0)
    breakdown = penalised_cost(spot, Partition.from_anomalies(spot, [ring]), params)
    assert breakdown.penalty_hull == 9.0


def test_l0_cost_drops_the_hull_term(spot):
    params = CostParams(beta=40, lam=1.6, mu0=0.0, sigma2=1.0)
    partition = Partition.from_anomalies(spot, [block(2, 2, 2, 2)])
    assert l0_cost(spot, partition, params).total == pytest.approx(40.0)


def test_cost_needs_resolved_params(spot):
    with pytest.raises(InputError):
        penalised_cost(spot, Partition.from_anomalies(spot, []), CostParams(beta=1))


@given(
    arrays(np.float64, (4, 4), elements=st.floats(-5, 5)),
    st.floats(0, 10),
    st.floats(0, 2),
    st.integers(1, 3),
    st.integers(1, 3),
)
def test_total_is_the_sum_of_its_terms(values, beta, lam, rows, cols):
    field = Field.from_array(values)
    params = CostParams(beta=beta, lam=lam, mu0=0.0, sigma2=1.0)
    partition = Partition.from_anomalies(field, [block(1, 1, rows, cols)])
    b = penalised_cost(field, partition, params)
    assert b.total == pytest.approx(b.loss_baseline + b.loss_anomalies + b.penalty_count + b.penalty_hull)
    assert b.total >= l0_cost(field, partition, params).total - 1e-9


def test_robust_baseline():
    field = Field.from_array([[0.0, 1.0, -1.0, 0.0, 100.0]])
    mu0, sigma = robust_baseline(field)
    assert mu0 == 0.0
    assert sigma == pytest.approx(MAD_SCALE)


def test_robust_baseline_failures():
    with pytest.raises(DegenerateScaleError):
        robust_baseline(Field.from_array([[0.0, 0.0, 0.0, 0.0, 100.0]]))
    with pytest.raises(InputError):
        robust_baseline(Field.from_array([[3.0]]))


def test_resolve_params_fills_only_missing_values():
    field = Field.from_array([[0.0, 1.0, -1.0, 0.0, 100.0]])
    resolved = resolve_params(field, CostParams(beta=2, mu0=5.0))
    assert resolved.mu0 == 5.0
    assert resolved.sigma2 == pytest.approx(MAD_SCALE ** 2)
    assert resolved.beta == 2
    already = CostParams(mu0=1.0, sigma2=2.0)
    assert resolve_params(field, already) is already


def test_theoretical_penalties():
    grid = GridSpec((10, 10))
    beta, lam = theoretical_penalties(grid, 1.0, 2.0, 3.0)
    assert beta == pytest.approx(2.0 * 10 * math.log(100))
    assert lam == pytest.approx(3.0 * 0.1 * math.log(100))
    beta, lam = theoretical_penalties(grid, 1.0, 1.0, 1.0, phi=1.5)
    assert beta == pytest.approx(100 * math.log(100))
    assert lam == pytest.approx(math.log(100))


@pytest.mark.parametrize("phi", [0.5, 1.6])
def test_theoretical_penalties_regime(phi):
    with pytest.raises(PenaltyRegimeError):
        theoretical_penalties(GridSpec((10, 10)), 1.0, 1.0, 1.0, phi=phi)


def test_signal_penalties():
    assert signal_penalties(3.0, 25, 400) == pytest.approx((75.0, 0.1875))
    assert signal_penalties(3.0, 25, 400, scale=2.0) == pytest.approx((150.0, 0.375))
