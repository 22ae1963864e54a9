"""Exhaustive minimiser of the penalised cost on tiny lattices.

Every assignment of the valid cells to {baseline, anomaly 1, ..., anomaly L} is
scored once per label-permutation class. Per-subset sums are tabulated over bit
masks, so each assignment costs a handful of table lookups.
"""

import logging
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from modules.cost import CostBreakdown, CostParams, penalised_cost, resolve_params
from modules.errors import OracleSizeError
from modules.hull import hull_cardinality
from modules.lattice import Field, Partition, Region, in_smooth_class

logger = logging.getLogger(__name__)

MAX_ORACLE_CELLS = 16
MAX_ORACLE_LABELS = 2
CHUNK = 1 << 16


class OracleResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    best_partition: Partition
    best_cost: float
    breakdown: CostBreakdown
    enumerated: int


def _subset_tables(points: np.ndarray, dev: np.ndarray, params: CostParams, K: Optional[int]):
    n = len(points)
    size = 1 << n
    masks = np.arange(size, dtype=np.int64)
    bits = (masks[:, None] >> np.arange(n)) & 1
    count = bits.sum(axis=1)
    s1 = bits @ dev
    s2 = bits @ (dev * dev)
    with np.errstate(invalid="ignore", divide="ignore"):
        fitted = np.where(count > 0, s2 - s1 * s1 / np.maximum(count, 1), 0.0)
    fitted = np.maximum(fitted, 0.0) / params.sigma2

    hull = np.zeros(size, dtype=np.int64)
    allowed = np.ones(size, dtype=bool)
    if params.lam > 0 or K is not None:
        for mask in range(1, size):
            region = Region.from_array(points[bits[mask].astype(bool)])
            if params.lam > 0:
                hull[mask] = hull_cardinality(region)
            if K is not None:
                allowed[mask] = in_smooth_class(region, K)
    return s2 / params.sigma2, fitted, hull, allowed


def exact_minimise(field: Field, params: CostParams, max_labels: int = 2,
                   K: Optional[int] = None) -> OracleResult:
    """Global minimum of the penalised cost over all labelings with at most `max_labels` anomalies.

    With K set, only anomalies inside the smooth class R_K are admitted.
    """
    n = field.n_valid
    if n > MAX_ORACLE_CELLS:
        raise OracleSizeError(f"exhaustive search is limited to {MAX_ORACLE_CELLS} cells, got {n}")
    if not 0 <= max_labels <= MAX_ORACLE_LABELS:
        raise OracleSizeError(f"max_labels must lie in [0, {MAX_ORACLE_LABELS}], got {max_labels}")
    params = resolve_params(field, params)
    points = field.valid_points()
    dev = field.valid_values() - params.mu0
    base_sq, fitted, hull, allowed = _subset_tables(points, dev, params, K)
    total_sq = float(base_sq[(1 << n) - 1])

    radix = max_labels + 1
    total = radix ** n
    powers = radix ** np.arange(n, dtype=np.int64)
    weights = np.int64(1) << np.arange(n, dtype=np.int64)

    best_value = np.inf
    best_code = 0
    enumerated = 0
    for start in range(0, total, CHUNK):
        codes = np.arange(start, min(start + CHUNK, total), dtype=np.int64)
        digits = (codes[:, None] // powers) % radix
        keep = np.ones(len(codes), dtype=bool)
        # Canonical labelling: labels appear in order of first occurrence.
        first = [np.where((digits == j).any(axis=1), (digits == j).argmax(axis=1), n)
                 for j in range(1, radix)]
        for j in range(len(first) - 1):
            keep &= (first[j + 1] == n) | (first[j] < first[j + 1])
        value = np.full(len(codes), total_sq)
        for j in range(1, radix):
            mask = ((digits == j) * weights).sum(axis=1)
            present = mask > 0
            keep &= allowed[mask]
            value = value - base_sq[mask] + fitted[mask] + params.beta * present + params.lam * hull[mask]
        enumerated += int(keep.sum())
        if not keep.any():
            continue
        value = np.where(keep, value, np.inf)
        idx = int(np.argmin(value))
        if value[idx] < best_value:
            best_value = float(value[idx])
            best_code = int(codes[idx])

    labels = [(best_code // radix ** k) % radix for k in range(n)]
    anomalies = [Region.from_array(points[[k for k in range(n) if labels[k] == j]])
                 for j in range(1, radix)]
    partition = Partition.from_anomalies(field, [r for r in anomalies if len(r)])
    breakdown = penalised_cost(field, partition, params)
    logger.info("oracle: %d labelings, best m=%d total=%.6g", enumerated, partition.m, breakdown.total)
    return OracleResult(
        best_partition=partition,
        best_cost=breakdown.total,
        breakdown=breakdown,
        enumerated=enumerated,
    )
