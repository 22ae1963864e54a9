"""Least-squares loss, the double-penalised cost, and baseline estimation."""

import logging
import math
from typing import Optional, Tuple

import numpy as np
import pydantic
from pydantic import BaseModel, ConfigDict, NonNegativeFloat, PositiveFloat

from modules.errors import DegenerateScaleError, EmptyRegionError, InputError, PenaltyRegimeError
from modules.hull import hull_cardinality
from modules.lattice import Field, GridSpec, Partition, Region

logger = logging.getLogger(__name__)

# Gaussian consistency constant for the median absolute deviation.
MAD_SCALE = 1.4826


class CostParams(BaseModel):
    """Penalties and baseline parameters of the cost.

    mu0 and sigma2 may be left unset; `resolve_params` then fills them from the
    data with `robust_baseline`.
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    beta: NonNegativeFloat = 0.0
    lam: NonNegativeFloat = pydantic.Field(0.0, alias="lambda")
    sigma2: Optional[PositiveFloat] = None
    mu0: Optional[float] = None

    @property
    def resolved(self) -> bool:
        return self.sigma2 is not None and self.mu0 is not None


class CostBreakdown(BaseModel):
    loss_baseline: float
    loss_anomalies: float
    penalty_count: float
    penalty_hull: float
    total: float


def regional_loss(field: Field, region: Region, mu: float, sigma2: float) -> float:
    """L(R; mu) = sum over R of (Y - mu)^2 / sigma2."""
    if not len(region):
        return 0.0
    values = field.values_of(region)
    return float(np.sum((values - mu) ** 2) / sigma2)


def fitted_loss(field: Field, region: Region, sigma2: float) -> Tuple[float, float]:
    """Loss at the sample mean of the region, and that mean."""
    if not len(region):
        raise EmptyRegionError("fitted loss of an empty region")
    mu_hat = float(field.values_of(region).mean())
    return regional_loss(field, region, mu_hat, sigma2), mu_hat


def penalised_cost(field: Field, partition: Partition, params: CostParams) -> CostBreakdown:
    """C(m; R_1:m) = L(R_0) + sum L(R_j) + beta*m + lambda*sum |Co(R_j)|.

    The baseline always uses the fixed mu0; anomalies use fitted means. Terms are
    accumulated in partition order so totals are reproducible bit for bit.
    """
    if not params.resolved:
        raise InputError("cost parameters need mu0 and sigma2; call resolve_params first")
    loss_baseline = regional_loss(field, partition.baseline, params.mu0, params.sigma2)
    loss_anomalies = 0.0
    hull_points = 0
    for region in partition.anomalies:
        loss_anomalies += fitted_loss(field, region, params.sigma2)[0]
        if params.lam > 0:
            hull_points += hull_cardinality(region)
    penalty_count = params.beta * partition.m
    penalty_hull = params.lam * hull_points
    total = loss_baseline + loss_anomalies + penalty_count + penalty_hull
    return CostBreakdown(
        loss_baseline=loss_baseline,
        loss_anomalies=loss_anomalies,
        penalty_count=penalty_count,
        penalty_hull=penalty_hull,
        total=total,
    )


def l0_cost(field: Field, partition: Partition, params: CostParams) -> CostBreakdown:
    """The single-penalty cost L(R_1:m) + beta*m (no hull term)."""
    return penalised_cost(field, partition, params.model_copy(update={"lam": 0.0}))


def robust_baseline(field: Field) -> Tuple[float, float]:
    """Median baseline mean and MAD noise scale over the valid cells."""
    values = field.valid_values()
    if values.size < 2:
        raise InputError(f"robust baseline needs at least 2 valid cells, got {values.size}")
    mu0 = float(np.median(values))
    sigma = MAD_SCALE * float(np.median(np.abs(values - mu0)))
    if sigma <= 0:
        raise DegenerateScaleError("median absolute deviation is zero; supply sigma2 explicitly")
    return mu0, sigma


def resolve_params(field: Field, params: CostParams) -> CostParams:
    """Fill unset mu0/sigma2 from the robust baseline estimate."""
    if params.resolved:
        return params
    mu0, sigma = robust_baseline(field)
    update = {}
    if params.mu0 is None:
        update["mu0"] = mu0
    if params.sigma2 is None:
        update["sigma2"] = sigma ** 2
    logger.info("robust baseline: mu0=%.6g sigma=%.6g", mu0, sigma)
    return params.model_copy(update=update)


def theoretical_penalties(grid: GridSpec, sigma2: float, c_beta: float, c_lambda: float,
                          phi: float = 1.0, n: Optional[int] = None) -> Tuple[float, float]:
    """Penalty scalings beta = c_beta (n^phi / n_max) log n, lambda = c_lambda (n^(phi-1) / n_max) log n.

    phi = 1 gives the independent-noise scalings; phi > 1 the dependence-aware ones.
    Losses are already divided by sigma2, so sigma2 is only checked for sanity.
    `n` overrides the grid size when masked cells are excluded.
    """
    if sigma2 <= 0:
        raise InputError("sigma2 must be positive")
    n = grid.n if n is None else n
    if phi < 1 or n ** (phi - 1) > grid.n_max:
        raise PenaltyRegimeError(f"phi={phi} is outside 1 <= phi and n^(phi-1) <= n_max")
    log_n = math.log(n)
    beta = c_beta * (n ** phi / grid.n_max) * log_n
    lam = c_lambda * (n ** (phi - 1) / grid.n_max) * log_n
    return beta, lam


def signal_penalties(shift: float, min_area: int, n: int, scale: float = 1.0) -> Tuple[float, float]:
    """Simulation rule beta = shift * min_area, lambda = beta / n, both times `scale`."""
    beta = scale * shift * min_area
    return beta, beta / n
