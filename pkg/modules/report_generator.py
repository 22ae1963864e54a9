from datetime import datetime
from typing import List, Optional

from modules.cost import CostBreakdown
from modules.detector import DetectionResult
from modules.evaluate import McReport


def explain_cost(breakdown: CostBreakdown) -> str:
    """One line per cost term, then the total."""
    return "\n".join([
        f"  baseline loss      {breakdown.loss_baseline:.9g}",
        f"  anomaly loss       {breakdown.loss_anomalies:.9g}",
        f"  count penalty      {breakdown.penalty_count:.9g}",
        f"  hull penalty       {breakdown.penalty_hull:.9g}",
        f"  total              {breakdown.total:.9g}",
    ])


def generate_report(result: DetectionResult, dims, explain: bool = False,
                    generated_at: Optional[datetime] = None) -> str:
    """Generate detection report text."""
    lines: List[str] = [
        "Anomaly Detection Report",
        "========================",
    ]
    if generated_at is not None:
        lines.append(f"Date Generated: {generated_at.strftime('%Y-%m-%d %H:%M:%S')}")
    lines += [
        f"Grid: {' x '.join(str(v) for v in dims)}",
        f"Baseline: mu0={result.mu0:.6g}, sigma2={result.sigma2:.6g}, {len(result.baseline)} cells",
        f"Anomalies: {result.m_hat} (argmin cell m={result.argmin_cell[0]}, N={result.argmin_cell[1]})",
    ]
    for j, (region, mean) in enumerate(zip(result.regions, result.region_means), start=1):
        lines.append(f"  R{j}: {len(region)} cells, mean {mean:.6g}")
    if explain:
        lines.append("Cost:")
        lines.append(explain_cost(result.best_cost))
    return "\n".join(lines) + "\n"


def bench_summary(report: McReport) -> str:
    """Short text summary of a Monte-Carlo run."""
    s = report.setting
    err = "n/a" if report.err is None else f"{report.err:.4f}"
    lines = [
        f"Setting {s.setting_id} on {' x '.join(str(v) for v in s.dims)}: "
        f"delta={s.delta:g}, |R|={s.total_area}, sigma={s.sigma:g}"
        + ("" if s.zeta is None else f", zeta={s.zeta:g}"),
        f"B={report.B}  m*={report.m_star}  NoC={report.noc:.3f}  Err={err}",
    ]
    if report.failures:
        lines.append(f"{report.failures} replicate(s) failed")
    return "\n".join(lines) + "\n"
