"""Command line front end.

Subcommands: embed-search, forecast, ccm, simulate, version.  Every run is
deterministic given its flags and seed; each command writes its outputs plus
a manifest JSON recording the resolved parameters, input digests, seed, and
tool version, so identical manifests imply bit-identical outputs.  The
worker-count flag never changes results, only wall time, and is therefore
excluded from the manifest.

Exit codes: 0 success, 1 computation error (for example an infeasible
neighbour search), 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bundled import DEFAULT_DATASET, bundled_path
from .ccm import CcmConfig, convergence_sweep
from .embedding import EmbeddingSpec
from .scenario import load_scenario_file, run_scenarios
from .simplex import (
    ForecastResult,
    SimplexConfig,
    embed_dimension_search,
    iterative_forecast,
    skill_eval,
)
from .smap import SMapConfig, coefficients_to_csv, smap_iterative_forecast
from .smap import skill_eval as smap_skill_eval
from .timeseries import load_csv, pearson_rho, rmse

__all__ = ["main"]


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(primary: Path, command: str, parameters: dict,
                    inputs: list[Path], seed: int | None, outputs: list[Path]) -> Path:
    manifest = {
        "command": command,
        "parameters": parameters,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "seed": seed,
        "version": __version__,
        "outputs": [str(p) for p in outputs],
    }
    path = primary.with_suffix(".manifest.json")
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path


def _resolve_data(arg: str | None) -> Path:
    if arg is None:
        return bundled_path(DEFAULT_DATASET)
    return Path(arg)


def _parse_range(text: str) -> list[int]:
    """Parse '1:10' (inclusive) or a comma list into sorted integers."""
    if ":" in text:
        lo, _, hi = text.partition(":")
        return list(range(int(lo), int(hi) + 1))
    return sorted({int(part) for part in text.split(",") if part.strip()})


def _parse_sizes(text: str) -> list[int]:
    """Parse a comma list, or 'lo:hi:count' for an evenly spaced grid."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"size grid {text!r} must be 'lo:hi:count' or a comma list")
        lo, hi, count = (int(p) for p in parts)
        return sorted({int(round(v)) for v in np.linspace(lo, hi, count)})
    return sorted({int(part) for part in text.split(",") if part.strip()})


def _allocate_lags(columns: list[str], dimension: int,
                   lags_arg: str | None) -> tuple[tuple[str, int], ...]:
    """Split the total dimension across columns, first columns filling up first."""
    if lags_arg:
        allocation = []
        for part in lags_arg.split(","):
            name, _, count = part.partition(":")
            if not count:
                raise ValueError(f"bad --lags entry {part!r}; expected name:count")
            allocation.append((name.strip(), int(count)))
        names = [n for n, _ in allocation]
        if sorted(names) != sorted(columns):
            raise ValueError(f"--lags columns {names} do not match --columns {columns}")
        total = sum(c for _, c in allocation)
        if total != dimension:
            raise ValueError(f"--lags total {total} does not match --e {dimension}")
        return tuple(allocation)
    m = len(columns)
    if dimension < m:
        raise ValueError(f"dimension {dimension} cannot cover {m} columns")
    base, extra = divmod(dimension, m)
    return tuple((name, base + (1 if i < extra else 0)) for i, name in enumerate(columns))


def _cmd_version(_args) -> int:
    print(f"edmkit {__version__}")
    return 0


def _cmd_embed_search(args) -> int:
    data_path = _resolve_data(args.data)
    data = load_csv(data_path)
    dimensions = _parse_range(args.e)
    result = embed_dimension_search(
        data, args.target, dimensions,
        train_end=args.train_end, tau=args.tau,
        eval_start=args.eval_start, eval_end=args.eval_end,
        threads=args.threads,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    result.to_csv(out)
    summary_path = out.with_suffix(".summary.json")
    best_row = next(r for r in result.rows if r[0] == result.best_dimension)
    summary = {
        "best_E": result.best_dimension,
        "best_rho": None if math.isnan(best_row[1]) else best_row[1],
        "best_rmse": None if math.isnan(best_row[2]) else best_row[2],
    }
    with open(summary_path, "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write("\n")
    _write_manifest(
        out, "embed-search",
        {
            "data": str(data_path), "target": args.target, "e": args.e,
            "tau": args.tau, "train_end": args.train_end,
            "eval_start": args.eval_start, "eval_end": args.eval_end,
        },
        [data_path], None, [out, summary_path],
    )
    print(f"best E = {result.best_dimension} (rho = {best_row[1]:.4f}); table: {out}")
    return 0


def _combine_results(insample: ForecastResult | None,
                     extrapolation: ForecastResult | None, target: str) -> ForecastResult:
    parts = [p for p in (insample, extrapolation) if p is not None]
    times = np.concatenate([p.times for p in parts])
    predicted = np.concatenate([p.predicted for p in parts])
    band = np.concatenate([p.band_halfwidth for p in parts])
    step_var = np.concatenate([p.step_variance for p in parts])
    observed = np.concatenate([
        p.observed if p.observed is not None else np.full(p.times.shape[0], np.nan)
        for p in parts
    ])
    coefficients = None
    labels = None
    if all(p.coefficients is not None for p in parts):
        coefficients = np.concatenate([p.coefficients for p in parts], axis=0)
        labels = parts[0].coefficient_labels
    return ForecastResult(
        target=target,
        times=times,
        predicted=predicted,
        observed=observed,
        rho=pearson_rho(observed, predicted),
        rmse=rmse(observed, predicted),
        band_halfwidth=band,
        step_variance=step_var,
        coefficients=coefficients,
        coefficient_labels=labels,
    )


def _write_svg(path: Path, result: ForecastResult, with_band: bool) -> None:
    """Minimal static line chart: observed and predicted, optional band."""
    width, height, pad = 760, 420, 48
    times = result.times.astype(float)
    series = [result.predicted]
    if result.observed is not None:
        series.append(result.observed)
    if with_band:
        series.append(result.predicted - result.band_halfwidth)
        series.append(result.predicted + result.band_halfwidth)
    stacked = np.concatenate(series)
    stacked = stacked[~np.isnan(stacked)]
    lo, hi = float(stacked.min()), float(stacked.max())
    if hi == lo:
        hi = lo + 1.0

    def sx(t: float) -> float:
        return pad + (t - times[0]) / max(times[-1] - times[0], 1.0) * (width - 2 * pad)

    def sy(v: float) -> float:
        return height - pad - (v - lo) / (hi - lo) * (height - 2 * pad)

    def polyline(values: np.ndarray, colour: str, dash: str = "") -> str:
        points = " ".join(
            f"{sx(t):.2f},{sy(v):.2f}" for t, v in zip(times, values) if not math.isnan(v)
        )
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        return (f'<polyline fill="none" stroke="{colour}" stroke-width="1.5"{extra} '
                f'points="{points}"/>')

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if with_band:
        upper = [(t, p + h) for t, p, h in zip(times, result.predicted, result.band_halfwidth)
                 if not math.isnan(p)]
        lower = [(t, p - h) for t, p, h in zip(times, result.predicted, result.band_halfwidth)
                 if not math.isnan(p)]
        ring = upper + lower[::-1]
        points = " ".join(f"{sx(t):.2f},{sy(v):.2f}" for t, v in ring)
        parts.append(f'<polygon fill="#cfe2f3" stroke="none" points="{points}"/>')
    parts.append(polyline(result.predicted, "#1155cc"))
    if result.observed is not None:
        parts.append(polyline(result.observed, "#333333", dash="4 3"))
    parts.append(
        f'<text x="{pad}" y="{pad - 16}" font-family="sans-serif" font-size="13">'
        f"{result.target}: observed (dashed) and predicted</text>"
    )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")


def _cmd_forecast(args) -> int:
    data_path = _resolve_data(args.data)
    data = load_csv(data_path)
    columns = [part.strip() for part in args.columns.split(",") if part.strip()]
    if not columns:
        raise ValueError("--columns must name at least one series")
    target = columns[0]
    allocation = _allocate_lags(columns, args.e, args.lags)
    spec = EmbeddingSpec(allocation, tau=args.tau, exclusion_radius=args.exclusion_radius)
    self_condition = not args.fixed_library

    insample = None
    extrapolation = None
    in_sample_end = min(args.to, data.end_year)
    if args.method == "smap":
        if args.theta is None:
            raise ValueError("--method smap needs --theta")
        cfg = SMapConfig(spec, args.theta, ridge=args.ridge)
        if in_sample_end > args.train_end:
            insample = smap_skill_eval(data, target, cfg, args.train_end, eval_end=in_sample_end)
        if args.to > data.end_year:
            extrapolation = smap_iterative_forecast(data, target, cfg, args.to,
                                                    self_condition=self_condition)
    else:
        cfg = SimplexConfig(spec, k=args.knn)
        if in_sample_end > args.train_end:
            insample = skill_eval(data, target, cfg, args.train_end, eval_end=in_sample_end)
        if args.to > data.end_year:
            extrapolation = iterative_forecast(data, target, cfg, args.to,
                                               self_condition=self_condition)
    if insample is None and extrapolation is None:
        raise ValueError(f"nothing to forecast: horizon {args.to} inside train range")
    combined = _combine_results(insample, extrapolation, target)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    outputs = [out]
    combined.to_csv(out)
    json_path = out.with_suffix(".json")
    combined.to_json(json_path)
    outputs.append(json_path)
    if args.method == "smap" and combined.coefficients is not None:
        coef_path = out.with_name(out.stem + "_coefficients.csv")
        coefficients_to_csv(combined, coef_path)
        outputs.append(coef_path)
    if args.svg:
        svg_path = Path(args.svg)
        _write_svg(svg_path, combined, with_band=not args.no_band)
        outputs.append(svg_path)
    _write_manifest(
        out, "forecast",
        {
            "data": str(data_path), "method": args.method, "columns": args.columns,
            "e": args.e, "tau": args.tau, "theta": args.theta, "knn": args.knn,
            "lags": args.lags, "train_end": args.train_end, "to": args.to,
            "ridge": args.ridge, "band": not args.no_band,
            "fixed_library": args.fixed_library,
            "exclusion_radius": args.exclusion_radius,
        },
        [data_path], None, outputs,
    )
    rho_text = "undefined" if math.isnan(combined.rho) else f"{combined.rho:.4f}"
    print(f"{args.method} forecast of {target!r} to {args.to}: rho = {rho_text}; wrote {out}")
    return 0


def _cmd_ccm(args) -> int:
    data_path = _resolve_data(args.data)
    data = load_csv(data_path)
    series_a = data[args.a]
    series_b = data[args.b]
    n_points = data.n_years - (args.e - 1) * args.tau
    if args.sizes is None:
        sizes = sorted({int(round(v)) for v in np.linspace(args.e + 2, n_points, 20)})
    else:
        sizes = _parse_sizes(args.sizes)
    cfg = CcmConfig(
        dimension=args.e,
        library_sizes=tuple(sizes),
        tau=args.tau,
        samples_per_size=args.samples,
        seed=args.seed,
        replacement=args.replacement,
        method=args.method,
        exclusion_radius=args.exclusion_radius,
    )
    result = convergence_sweep(series_a, series_b, cfg, threads=args.threads)
    stem = Path(args.out)
    stem.parent.mkdir(parents=True, exist_ok=True)
    curves_path = stem.with_suffix(".csv") if stem.suffix == "" else stem
    result.to_csv(curves_path)
    summary_path = curves_path.with_suffix(".summary.json")
    result.to_json(summary_path)
    _write_manifest(
        curves_path, "ccm",
        {
            "data": str(data_path), "a": args.a, "b": args.b, "e": args.e,
            "tau": args.tau, "sizes": sizes, "samples": args.samples,
            "replacement": args.replacement, "method": args.method,
            "exclusion_radius": args.exclusion_radius,
        },
        [data_path], args.seed, [curves_path, summary_path],
    )
    for direction in result.directions:
        final = direction.final_mean_rho
        final_text = "undefined" if math.isnan(final) else f"{final:.4f}"
        print(f"{direction.label}: final mean rho = {final_text}, verdict = {direction.verdict}")
    if result.insufficient_grid:
        print("insufficient grid: convergence needs at least two library sizes")
    return 0


def _cmd_simulate(args) -> int:
    scenario_arg = args.scenarios
    if scenario_arg is None:
        scenario_path = bundled_path("scenarios/table2.cfg")
    else:
        scenario_path = Path(scenario_arg)
        if not scenario_path.exists():
            fallback = bundled_path(scenario_arg)
            if fallback.exists():
                scenario_path = fallback
    config, scenarios = load_scenario_file(scenario_path)
    data_path = _resolve_data(args.data)
    data = load_csv(data_path)
    reports = run_scenarios(data, scenarios, config, threads=args.threads)

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / "mitigation_report.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["scenario", "kind", "debris_2050", "margin_of_error", "pct_mitigated"]
        )
        for report in reports:
            writer.writerow([
                report.scenario.name, report.scenario.kind,
                repr(report.debris_2050), repr(report.margin_of_error),
                repr(report.pct_mitigated),
            ])
    json_path = outdir / "mitigation_report.json"
    with open(json_path, "w", encoding="utf-8") as handle:
        json.dump([r.as_dict() for r in reports], handle, indent=2, sort_keys=True)
        handle.write("\n")
    outputs = [csv_path, json_path]
    for report in reports:
        trajectory_path = outdir / f"trajectory_{report.scenario.name}.csv"
        report.trajectory.to_csv(trajectory_path)
        outputs.append(trajectory_path)
    _write_manifest(
        csv_path, "simulate",
        {"data": str(data_path), "scenarios": str(scenario_path)},
        [data_path, scenario_path], None, outputs,
    )
    for report in reports:
        print(f"{report.scenario.name}: 2050 debris = {report.debris_2050:.0f}, "
              f"mitigated = {report.pct_mitigated:.2f}%")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edmkit",
        description="Empirical dynamic modeling: embeddings, forecasts, causality, policy runs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--data", default=None,
                       help="input CSV (default: bundled yearly dataset)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker cap; never changes results")

    p = sub.add_parser("embed-search", help="skill table over embedding dimensions")
    add_common(p)
    p.add_argument("--target", default="debris")
    p.add_argument("--e", default="1:10", help="dimension range 'lo:hi' or comma list")
    p.add_argument("--tau", type=int, default=1)
    p.add_argument("--train-end", type=int, default=1990, dest="train_end")
    p.add_argument("--eval-start", type=int, default=None, dest="eval_start")
    p.add_argument("--eval-end", type=int, default=None, dest="eval_end")
    p.add_argument("--out", default="embed_search.csv")
    p.set_defaults(func=_cmd_embed_search)

    p = sub.add_parser("forecast", help="one-step evaluation plus extrapolation")
    add_common(p)
    p.add_argument("--method", choices=("simplex", "smap"), required=True)
    p.add_argument("--columns", default="debris",
                   help="comma list of input series; first one is the forecast target")
    p.add_argument("--e", type=int, required=True, help="total embedding dimension")
    p.add_argument("--tau", type=int, default=1)
    p.add_argument("--theta", type=float, default=None, help="S-map localisation")
    p.add_argument("--knn", type=int, default=None, help="simplex neighbour count")
    p.add_argument("--lags", default=None, help="per-column lag counts, e.g. debris:2,total:2")
    p.add_argument("--train-end", type=int, default=1990, dest="train_end")
    p.add_argument("--to", type=int, required=True, help="last forecast year")
    p.add_argument("--ridge", type=float, default=0.0)
    p.add_argument("--exclusion-radius", type=int, default=None, dest="exclusion_radius")
    p.add_argument("--no-band", action="store_true", dest="no_band")
    p.add_argument("--fixed-library", action="store_true", dest="fixed_library",
                   help="never append predictions to the library")
    p.add_argument("--svg", default=None, help="also write a static SVG chart here")
    p.add_argument("--out", default="forecast.csv")
    p.set_defaults(func=_cmd_forecast)

    p = sub.add_parser("ccm", help="convergent cross mapping between two series")
    add_common(p)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--e", type=int, default=4)
    p.add_argument("--tau", type=int, default=1)
    p.add_argument("--sizes", default=None, help="'lo:hi:count' or comma list")
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replacement", action="store_true")
    p.add_argument("--method", choices=("random", "contiguous"), default="random")
    p.add_argument("--exclusion-radius", type=int, default=0, dest="exclusion_radius")
    p.add_argument("--out", default="ccm")
    p.set_defaults(func=_cmd_ccm)

    p = sub.add_parser("simulate", help="run mitigation-policy scenarios")
    add_common(p)
    p.add_argument("--scenarios", default=None,
                   help="scenario config path (default: bundled table2.cfg)")
    p.add_argument("--outdir", default=".")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("version", help="print the tool version")
    p.set_defaults(func=_cmd_version)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError, KeyError) as error:
        message = error.args[0] if error.args else error
        print(f"error: {message}", file=sys.stderr)
        return 2
    except RuntimeError as error:
        print(f"error: {error}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
