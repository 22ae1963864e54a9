"""Command line entry point: simulate, detect, bench, hull, oracle, preprocess."""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pydantic

from modules.cost import CostParams, theoretical_penalties
from modules.detector import DetectorConfig, beta_sweep, run_detection
from modules.errors import InfeasibleError, InputError
from modules.evaluate import run_monte_carlo, sweep_shift
from modules.gridio import dumps_json, load_grid, load_region, load_stack, save_grid, save_json, save_result
from modules.hull import convex_hull, count_lattice_points
from modules.oracle import exact_minimise
from modules.preprocess import detrend_linear, max_composite
from modules.report_generator import bench_summary, generate_report
from modules.simulate import SimSetting, make_truth, sample_truth_field, settings_summary
from modules.visualization import field_heatmap, frequency_heatmap

logger = logging.getLogger("cli")

EXIT_INPUT = 2
EXIT_INFEASIBLE = 3


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _dims_for(setting_id: str, n: Optional[int], dims: Optional[Sequence[int]]) -> Tuple[int, ...]:
    if dims:
        return tuple(dims)
    d = 3 if setting_id == "three_d" else 2
    if n is None:
        return (12, 12, 12) if d == 3 else (50, 50)
    side = int(round(n ** (1.0 / d)))
    if side ** d != n:
        raise InputError(f"n={n} is not a perfect {'cube' if d == 3 else 'square'}; pass --dims")
    return (side,) * d


def _add_setting_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--setting", choices=["1", "2", "3", "three_d"], default="1")
    p.add_argument("--n", type=int, help="total cells; the grid is square (cubic for three_d)")
    p.add_argument("--dims", type=int, nargs="+", help="explicit grid dimensions")
    p.add_argument("--delta", type=float, default=3.0, help="smallest mean shift")
    p.add_argument("--area", type=int, default=None, help="total anomaly area (default n/5)")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--zeta", type=float, default=None, help="exponential correlation decay")
    p.add_argument("--jitter", type=float, default=0.25, help="boundary jitter probability")
    p.add_argument("--separation", type=float, default=2.0)
    p.add_argument("--K", type=int, default=8, help="smoothness bound for generated regions")
    p.add_argument("--seed", type=int, default=0)


def _setting_from(args) -> SimSetting:
    dims = _dims_for(args.setting, args.n, args.dims)
    area = args.area if args.area is not None else max(1, int(np.prod(dims)) // 5)
    return SimSetting(
        setting_id=args.setting,
        dims=dims,
        delta=args.delta,
        total_area=area,
        sigma=args.sigma,
        jitter_prob=args.jitter,
        zeta=args.zeta,
        seed=args.seed,
        separation=args.separation,
        K=args.K,
    )


def _add_detector_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="DetectorConfig JSON; flags override its fields")
    p.add_argument("--beta", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--mu0", type=float)
    p.add_argument("--m-max", type=int)
    p.add_argument("--n-stride", type=int)
    p.add_argument("--xi-rule", choices=["log10", "constant"])
    p.add_argument("--xi-scale", type=float)
    p.add_argument("--penalty-scale", type=float)
    p.add_argument("--faithful", action="store_true", default=None)
    p.add_argument("--two-pass", action="store_true", default=None)
    p.add_argument("--emit-cost-surface", action="store_true", default=None)
    p.add_argument("--workers", type=int)


def _config_from(args) -> DetectorConfig:
    base = DetectorConfig()
    if args.config is not None:
        base = DetectorConfig.model_validate_json(args.config.read_text())
    params = {k: v for k, v in {
        "beta": args.beta, "lam": args.lam, "sigma2": args.sigma2, "mu0": args.mu0,
    }.items() if v is not None}
    knobs = {k: v for k, v in {
        "m_max": args.m_max, "n_stride": args.n_stride, "xi_rule": args.xi_rule,
        "xi_scale": args.xi_scale, "penalty_scale": args.penalty_scale, "faithful": args.faithful,
        "two_pass": args.two_pass, "emit_cost_surface": args.emit_cost_surface, "workers": args.workers,
    }.items() if v is not None}
    if params:
        merged = base.params.model_dump()
        merged.update(params)
        knobs["params"] = CostParams(**merged)
    # Round-trip through validation so flag values get the same checks as the JSON file.
    return DetectorConfig.model_validate({**base.model_dump(), **knobs})


def _emit(text: str, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def cmd_simulate(args) -> int:
    setting = _setting_from(args)
    truth = make_truth(setting)
    field = sample_truth_field(truth, setting, setting.seed)
    save_grid(args.out, field)
    if args.truth is not None:
        save_json(args.truth, truth)
    if args.heatmap is not None:
        field_heatmap(args.heatmap, field.values)
    sys.stdout.write(dumps_json(settings_summary(truth)))
    return 0


def cmd_detect(args) -> int:
    field = load_grid(args.grid)
    config = _config_from(args)
    if args.theory is not None:
        c_beta, c_lambda = args.theory
        sigma2 = config.params.sigma2 or 1.0
        beta, lam = theoretical_penalties(field.grid, sigma2, c_beta, c_lambda, args.phi, n=field.n_valid)
        config = config.model_copy(update={"params": config.params.model_copy(update={"beta": beta, "lam": lam})})
    if args.beta_sweep is not None:
        table = beta_sweep(field, config, args.beta_sweep, args.lambda_ratio)
        _emit(table.to_csv(index=False, float_format="%.9g", lineterminator="\n"), args.out)
        return 0
    result = run_detection(field, config)
    if args.out is None:
        sys.stdout.write(dumps_json(result))
    else:
        save_result(args.out, result)
    if args.report is not None or args.explain_cost:
        text = generate_report(result, field.grid.dims, explain=args.explain_cost)
        if args.report is not None:
            args.report.write_text(text)
        else:
            sys.stderr.write(text)
    if args.heatmap is not None:
        labels = np.zeros(field.grid.dims)
        for j, region in enumerate(result.regions, start=1):
            labels[tuple((region.coords() - 1).T)] = j
        field_heatmap(args.heatmap, labels, field.valid_mask())
    return 0


def cmd_bench(args) -> int:
    setting = _setting_from(args)
    config = _config_from(args)
    workers = args.workers or 1
    # Replicates are the parallel unit here; each detection stays sequential.
    config = config.model_copy(update={"workers": 1})
    if args.shifts is not None:
        table = sweep_shift(setting, config, args.B, args.shifts, workers)
        _emit(table.to_csv(index=False, float_format="%.9g", lineterminator="\n"), args.out)
        return 0
    report = run_monte_carlo(setting, config, args.B, workers)
    _emit(dumps_json(report.to_report_dict()), args.out)
    freq = np.asarray(report.freq_map).reshape(setting.dims)
    if args.freq_map is not None:
        np.savetxt(args.freq_map, freq.reshape(-1, setting.dims[-1]), fmt="%d", delimiter=",")
    if args.heatmap is not None:
        frequency_heatmap(args.heatmap, freq, report.B)
    if args.timings is not None:
        report.timings().to_csv(args.timings, index=False)
    sys.stderr.write(bench_summary(report))
    return 0


def cmd_hull(args) -> int:
    region = load_region(args.region)
    hull = convex_hull(region)
    count = count_lattice_points(hull)
    payload = {
        "kind": hull.kind,
        "vertices": [list(v) for v in hull.vertices],
        "cardinality": count,
        "excess": count - len(region),
    }
    _emit(dumps_json(payload), args.out)
    return 0


def cmd_oracle(args) -> int:
    field = load_grid(args.grid)
    params = CostParams(beta=args.beta, lam=args.lam, sigma2=args.sigma2, mu0=args.mu0)
    result = exact_minimise(field, params, args.max_labels, args.K)
    _emit(dumps_json(result), args.out)
    return 0


def cmd_preprocess(args) -> int:
    stack = load_stack(args.stack)
    if not args.no_detrend:
        stack = detrend_linear(stack)
    field = max_composite(stack, args.window)
    save_grid(args.out, field)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lattice-anomaly",
                                     description="Anomaly-region detection on spatial lattices")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a synthetic field with known anomalies")
    _add_setting_args(p)
    p.add_argument("--out", type=Path, required=True, help="grid file (.csv or .bin)")
    p.add_argument("--truth", type=Path, help="ground-truth JSON")
    p.add_argument("--heatmap", type=Path, help="PGM image of the field")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", help="detect anomaly regions in a grid file")
    p.add_argument("grid", type=Path)
    _add_detector_args(p)
    p.add_argument("--theory", type=float, nargs=2, metavar=("C_BETA", "C_LAMBDA"),
                   help="use the theoretical penalty scalings with these constants")
    p.add_argument("--phi", type=float, default=1.0, help="dependence exponent for --theory")
    p.add_argument("--beta-sweep", type=_float_list, help="comma-separated betas; writes a CSV table")
    p.add_argument("--lambda-ratio", type=float, help="lambda = beta * ratio during --beta-sweep")
    p.add_argument("--out", type=Path, help="result JSON (stdout when omitted)")
    p.add_argument("--report", type=Path, help="text report")
    p.add_argument("--explain-cost", action="store_true")
    p.add_argument("--heatmap", type=Path, help="PGM image of the detected regions")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("bench", help="Monte-Carlo benchmark of a simulation setting")
    _add_setting_args(p)
    _add_detector_args(p)
    p.add_argument("--B", type=int, default=100)
    p.add_argument("--shifts", type=_float_list, help="comma-separated deltas; writes a NoC/Err CSV")
    p.add_argument("--out", type=Path, help="report JSON (stdout when omitted)")
    p.add_argument("--freq-map", type=Path, help="per-cell detection counts CSV")
    p.add_argument("--heatmap", type=Path, help="PGM image of the frequency map")
    p.add_argument("--timings", type=Path, help="per-replicate runtimes CSV")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("hull", help="convex hull and lattice-point count of a region")
    p.add_argument("region", type=Path)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_hull)

    p = sub.add_parser("oracle", help="exact minimiser for grids of at most 16 cells")
    p.add_argument("grid", type=Path)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--mu0", type=float)
    p.add_argument("--max-labels", type=int, default=2)
    p.add_argument("--K", type=int, help="restrict anomalies to the smooth class R_K")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("preprocess", help="detrend a raster stack and take its max composite")
    p.add_argument("stack", type=Path)
    p.add_argument("--window", default="M", help="pandas frequency, e.g. M or 30D")
    p.add_argument("--no-detrend", action="store_true")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_preprocess)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InputError, pydantic.ValidationError, FileNotFoundError) as exc:
        logger.debug("input error", exc_info=True)
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except InfeasibleError as exc:
        logger.debug("infeasible configuration", exc_info=True)
        sys.stderr.write(f"infeasible: {exc}\n")
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
