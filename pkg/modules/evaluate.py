"""Detection-quality metrics and the Monte-Carlo benchmark harness."""

import logging
import time
from concurrent import futures
from dataclasses import dataclass
from functools import partial
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel

from modules.cost import signal_penalties
from modules.detector import DetectorConfig, run_detection
from modules.errors import DplsError, InputError
from modules.lattice import GridSpec, Region
from modules.simulate import (
    GroundTruth,
    SimSetting,
    exponential_covariance_factor,
    make_truth,
    sample_truth_field,
)

logger = logging.getLogger(__name__)


class ReplicateRecord(BaseModel):
    seed: int
    m_hat: Optional[int] = None
    err: Optional[float] = None
    error: Optional[str] = None
    runtime: float = 0.0


class McReport(BaseModel):
    setting: SimSetting
    B: int
    m_star: int
    noc: float
    err: Optional[float]
    failures: int
    freq_map: List[int]
    per_replicate: List[ReplicateRecord]

    def to_report_dict(self) -> dict:
        """Report contents without wall-clock timings."""
        return self.model_dump(mode="json", exclude={"per_replicate": {"__all__": {"runtime"}}})

    def timings(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"seed": [r.seed for r in self.per_replicate], "runtime": [r.runtime for r in self.per_replicate]}
        )


def err_metric(truth: Sequence[Region], est: Sequence[Region]) -> float:
    """Area-normalised two-sided localisation error.

    Each estimate is charged its smallest excess over a true region, each true
    region its smallest shortfall against an estimate. An empty estimate gives 1.
    """
    truth = [r for r in truth if len(r)]
    if not truth:
        raise InputError("err metric needs at least one nonempty true region")
    true_sets = [r.as_set() for r in truth]
    est_sets = [r.as_set() for r in est if len(r)]
    total = sum(len(s) for s in true_sets)
    false_in = sum(min(len(e - t) for t in true_sets) for e in est_sets)
    if est_sets:
        missed = sum(min(len(t - e) for e in est_sets) for t in true_sets)
    else:
        missed = total
    return (false_in + missed) / total


def noc(m_hats: Sequence[Optional[int]], m_star: int) -> float:
    """Share of replicates with the right count; failed replicates (None) count as misses."""
    if not m_hats:
        raise InputError("noc needs at least one replicate")
    return sum(1 for m in m_hats if m == m_star) / len(m_hats)


def frequency_map(grid: GridSpec, estimates: Sequence[Sequence[Region]]) -> np.ndarray:
    """Per-cell count of replicates that flagged the cell as anomalous."""
    counts = np.zeros(grid.dims, dtype=np.int64)
    for regions in estimates:
        hit = np.zeros(grid.dims, dtype=bool)
        for region in regions:
            if len(region):
                hit[tuple((region.coords() - 1).T)] = True
        counts += hit
    return counts


def simulation_config(setting: SimSetting, truth: GroundTruth, base: DetectorConfig) -> DetectorConfig:
    """Fill the simulation defaults: beta = delta * smallest area, lambda = beta / n, known mu0 and sigma2.

    Penalties already set on `base` are kept.
    """
    params = base.params
    update = {}
    if params.beta == 0 and params.lam == 0:
        beta, lam = signal_penalties(setting.delta, truth.delta_min, setting.grid.n)
        update.update({"beta": beta, "lam": lam})
    if params.mu0 is None:
        update["mu0"] = truth.means[0]
    if params.sigma2 is None:
        # A noiseless field is fit exactly at any positive scale.
        update["sigma2"] = setting.sigma ** 2 if setting.sigma > 0 else 1.0
    if not update:
        return base
    return base.model_copy(update={"params": params.model_copy(update=update)})


@dataclass(frozen=True, eq=False)
class _ReplicateJob:
    truth: GroundTruth
    setting: SimSetting
    config: DetectorConfig
    factor: Optional[np.ndarray]


def _run_replicate(job: _ReplicateJob, seed: int):
    started = time.perf_counter()
    try:
        field = sample_truth_field(job.truth, job.setting, seed, job.factor)
        result = run_detection(field, job.config)
    except DplsError as exc:
        logger.warning("replicate seed=%d failed: %s", seed, exc)
        return ReplicateRecord(seed=seed, error=str(exc), runtime=time.perf_counter() - started), []
    err = err_metric(job.truth.regions, result.regions)
    record = ReplicateRecord(seed=seed, m_hat=result.m_hat, err=err, runtime=time.perf_counter() - started)
    return record, result.regions


def run_monte_carlo(setting: SimSetting, config: DetectorConfig, B: int, workers: int = 1) -> McReport:
    """B replicates over one fixed layout, seeds setting.seed + 1 .. setting.seed + B."""
    if B < 1:
        raise InputError(f"B must be at least 1, got {B}")
    truth = make_truth(setting)
    config = simulation_config(setting, truth, config)
    factor = None
    if setting.zeta is not None:
        factor = exponential_covariance_factor(truth.grid, setting.zeta)
    job = _ReplicateJob(truth, setting, config, factor)
    seeds = [setting.seed + b for b in range(1, B + 1)]

    if workers > 1:
        with futures.ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(partial(_run_replicate, job), seeds))
    else:
        outcomes = []
        for b, seed in enumerate(seeds, start=1):
            outcomes.append(_run_replicate(job, seed))
            if b % 10 == 0 or b == B:
                logger.info("replicate %d/%d done", b, B)

    records = [rec for rec, _ in outcomes]
    freq = frequency_map(truth.grid, [regions for _, regions in outcomes])
    errs = [r.err for r in records if r.err is not None]
    report = McReport(
        setting=setting,
        B=B,
        m_star=truth.m_star,
        noc=noc([r.m_hat for r in records], truth.m_star),
        err=float(np.mean(errs)) if errs else None,
        failures=sum(1 for r in records if r.error is not None),
        freq_map=freq.ravel().tolist(),
        per_replicate=records,
    )
    logger.info("setting %s: NoC=%.3f Err=%s over B=%d", setting.setting_id, report.noc,
                "n/a" if report.err is None else f"{report.err:.4f}", B)
    return report


def sweep_shift(setting: SimSetting, config: DetectorConfig, B: int, shifts: Sequence[float],
                workers: int = 1) -> pd.DataFrame:
    """NoC and Err for each mean shift, everything else held fixed."""
    rows = []
    for shift in shifts:
        report = run_monte_carlo(setting.model_copy(update={"delta": float(shift)}), config, B, workers)
        rows.append({"delta": float(shift), "noc": report.noc, "err": report.err})
    return pd.DataFrame(rows)
