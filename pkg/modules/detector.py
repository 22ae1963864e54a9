"""Approximate minimisation of the double-penalised cost over a (m, N) grid.

For every number of regions m and candidate prefix length N the candidates are
carved by CRS, the rest is baseline, and the cell is scored with the penalised
cost. The all-baseline model (m = 0) is always scored as well.
"""

import bisect
import logging
import math
from concurrent import futures
from dataclasses import dataclass
from functools import partial
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, NonNegativeFloat, PositiveFloat, PositiveInt

from modules.cost import CostBreakdown, CostParams, fitted_loss, penalised_cost, resolve_params
from modules.crs import CandidateOrder, carve_balls, crs, crs_radius_sq, sort_candidates
from modules.errors import InputError
from modules.hull import HullTracker
from modules.lattice import Field, GridSpec, Partition, Region

logger = logging.getLogger(__name__)


class DetectorConfig(BaseModel):
    """Search settings. Defaults follow the simulation study (xi_m = 20 floor(log10 sqrt n) / m)."""

    params: CostParams = CostParams()
    m_max: PositiveInt = 20
    n_stride: PositiveInt = 1
    xi_rule: Literal["log10", "constant"] = "log10"
    xi_scale: NonNegativeFloat = 20.0
    faithful: bool = False
    two_pass: bool = False
    penalty_scale: PositiveFloat = 1.0
    emit_cost_surface: bool = False
    workers: PositiveInt = 1

    def xi(self, m: int, n: int) -> float:
        """Minimum region size for the m-th search row on n valid cells."""
        if self.xi_rule == "constant":
            return self.xi_scale
        return self.xi_scale * math.floor(math.log10(math.sqrt(n))) / m


class DetectionResult(BaseModel):
    m_hat: int
    regions: List[Region]
    region_means: List[float]
    baseline: Region
    best_cost: CostBreakdown
    argmin_cell: Tuple[int, int]
    mu0: float
    sigma2: float
    cost_surface: Optional[List[List[Optional[float]]]] = None
    surface_n: Optional[List[int]] = None


@dataclass(frozen=True, eq=False)
class _SweepContext:
    grid: GridSpec
    points: np.ndarray
    deviations: Tuple[float, ...]
    n_values: Tuple[int, ...]
    params: CostParams
    config: DetectorConfig
    total_sq: float


def _effective_params(field: Field, config: DetectorConfig) -> CostParams:
    params = resolve_params(field, config.params)
    if config.penalty_scale != 1.0:
        params = params.model_copy(update={
            "beta": params.beta * config.penalty_scale,
            "lam": params.lam * config.penalty_scale,
        })
    return params


def _sweep_row(ctx: _SweepContext, m: int) -> np.ndarray:
    """Totals C(m, N) for every evaluated N, growing the carving one candidate at a time."""
    labels = carve_balls(ctx.points, crs_radius_sq(ctx.grid, m)).tolist()
    n = len(labels)
    xi = ctx.config.xi(m, n)
    beta, lam, sigma2 = ctx.params.beta, ctx.params.lam, ctx.params.sigma2
    faithful = ctx.config.faithful

    size: dict = {}
    s1: dict = {}
    s2: dict = {}
    members: dict = {}
    trackers: dict = {}
    fed: dict = {}
    qualifying: List[int] = []

    row = np.full(len(ctx.n_values), np.nan)
    j = 0
    for i in range(n):
        b = labels[i]
        dev = ctx.deviations[i]
        size[b] = size.get(b, 0) + 1
        s1[b] = s1.get(b, 0.0) + dev
        s2[b] = s2.get(b, 0.0) + dev * dev
        if lam > 0:
            members.setdefault(b, []).append(i)
        if size[b] >= xi and (size[b] == 1 or size[b] - 1 < xi):
            bisect.insort(qualifying, b)

        N = i + 1
        if j >= len(ctx.n_values) or ctx.n_values[j] != N:
            continue
        j += 1
        if faithful and m > N:
            continue
        kept = qualifying[:m]
        baseline_sq = ctx.total_sq
        anomaly_sq = 0.0
        hull_points = 0
        for k in kept:
            baseline_sq -= s2[k]
            anomaly_sq += max(s2[k] - s1[k] * s1[k] / size[k], 0.0)
            if lam > 0:
                tracker = trackers.setdefault(k, HullTracker())
                start = fed.get(k, 0)
                for idx in members[k][start:]:
                    tracker.add(ctx.points[idx])
                fed[k] = len(members[k])
                hull_points += tracker.cardinality()
        row[j - 1] = baseline_sq / sigma2 + anomaly_sq / sigma2 + beta * len(kept) + lam * hull_points
    logger.debug("row m=%d: %d balls, min total %.6g", m, max(labels) + 1 if labels else 0,
                 np.nanmin(row) if np.isfinite(row).any() else float("nan"))
    return row


def _evaluate(field: Field, config: DetectorConfig):
    params = _effective_params(field, config)
    order = sort_candidates(field, params.mu0)
    n = len(order)
    if n == 0:
        raise InputError("field has no valid cells")
    stride = 1 if config.faithful else config.n_stride
    n_values = tuple(range(1, n + 1, stride))
    m_limit = n if config.faithful else min(config.m_max, n)
    deviations = order.values - params.mu0
    total_sq = float(np.sum(deviations ** 2))
    ctx = _SweepContext(
        grid=field.grid,
        points=order.points,
        deviations=tuple(deviations.tolist()),
        n_values=n_values,
        params=params,
        config=config,
        total_sq=total_sq,
    )
    m_values = list(range(1, m_limit + 1))
    if config.workers > 1 and len(m_values) > 1:
        with futures.ProcessPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(partial(_sweep_row, ctx), m_values))
    else:
        rows = [_sweep_row(ctx, m) for m in m_values]

    surface = np.full((m_limit + 1, len(n_values) + 1), np.nan)
    surface[0, 0] = total_sq / params.sigma2
    for m, row in zip(m_values, rows):
        surface[m, 1:] = row
    return params, order, n_values, surface


def _argmin_cell(surface: np.ndarray, n_values: Sequence[int]) -> Tuple[int, int]:
    # First minimum in row-major order: smaller m wins ties, then smaller N.
    flat = int(np.nanargmin(surface))
    m, col = divmod(flat, surface.shape[1])
    return m, 0 if col == 0 else n_values[col - 1]


def _build_result(field: Field, config: DetectorConfig, params: CostParams, order: CandidateOrder,
                  n_values: Sequence[int], surface: np.ndarray) -> DetectionResult:
    m, N = _argmin_cell(surface, n_values)
    regions: List[Region] = []
    if m > 0:
        regions = crs(order, N, m, config.xi(m, len(order)), field.grid)
    partition = Partition.from_anomalies(field, regions)
    best = penalised_cost(field, partition, params)
    means = [fitted_loss(field, r, params.sigma2)[1] for r in regions]
    logger.info("argmin cell (m=%d, N=%d): %d regions, total cost %.6g", m, N, len(regions), best.total)

    result = DetectionResult(
        m_hat=len(regions),
        regions=regions,
        region_means=means,
        baseline=partition.baseline,
        best_cost=best,
        argmin_cell=(m, N),
        mu0=params.mu0,
        sigma2=params.sigma2,
    )
    if config.emit_cost_surface:
        result.cost_surface = [[None if np.isnan(v) else float(v) for v in row] for row in surface]
        result.surface_n = [0] + list(n_values)
    return result


def detect(field: Field, config: DetectorConfig) -> DetectionResult:
    """Single-pass detection; mu0/sigma2 come from the robust baseline when unset."""
    params, order, n_values, surface = _evaluate(field, config)
    return _build_result(field, config, params, order, n_values, surface)


def detect_two_pass(field: Field, config: DetectorConfig) -> DetectionResult:
    """Detect, re-estimate mu0 as the median over the detected baseline, detect again."""
    first = detect(field, config)
    if len(first.baseline):
        mu0 = float(np.median(field.values_of(first.baseline)))
    else:
        mu0 = first.mu0
    logger.info("second pass: baseline mean %.6g -> %.6g", first.mu0, mu0)
    params = config.params.model_copy(update={"mu0": mu0, "sigma2": first.sigma2})
    return detect(field, config.model_copy(update={"params": params}))


def run_detection(field: Field, config: DetectorConfig) -> DetectionResult:
    if config.two_pass:
        return detect_two_pass(field, config)
    return detect(field, config)


def cost_surface(field: Field, config: DetectorConfig) -> pd.DataFrame:
    """Per-cell totals C(m, N); row 0 / column 0 hold the all-baseline model."""
    _, _, n_values, surface = _evaluate(field, config)
    return pd.DataFrame(surface, index=pd.Index(range(surface.shape[0]), name="m"),
                        columns=pd.Index([0] + list(n_values), name="N"))


def beta_sweep(field: Field, config: DetectorConfig, betas: Sequence[float],
               lambda_ratio: Optional[float] = None) -> pd.DataFrame:
    """Detection outcome for each beta; lambda follows beta * lambda_ratio when given."""
    rows = []
    for beta in betas:
        update = {"beta": float(beta)}
        if lambda_ratio is not None:
            update["lam"] = float(beta) * lambda_ratio
        params = config.params.model_copy(update=update)
        result = run_detection(field, config.model_copy(update={"params": params}))
        rows.append({
            "beta": float(beta),
            "lambda": params.lam,
            "m_hat": result.m_hat,
            "total": result.best_cost.total,
        })
    return pd.DataFrame(rows)
