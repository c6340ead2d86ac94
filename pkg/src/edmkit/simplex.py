"""Simplex projection: forecasting by distance-weighted nearest neighbours.

The forecast for a query state is the weighted average of the forward values
of its k nearest library points, with raw weights ``exp(-d_j / d_1)`` so the
nearest neighbour always contributes ``e**-1`` when ``d_1 > 0``.  By default
``k = dimension + 1``, the bounding simplex of the reconstructed space.

An exact match (``d_1 = 0``) would make the weight ratio singular, so
zero-distance neighbours take raw weight 1 while positive-distance
neighbours are scaled by the smallest positive distance; if every neighbour
sits at distance 0 the weights are uniform.

Two evaluation modes are provided: an expanding-window one-step-ahead skill
evaluation against held-out history, and an iterative extrapolation that by
default appends its own predictions to the library ("self conditioning") so
the reconstruction can extend past the observed record.
"""

from __future__ import annotations

import concurrent.futures
import csv
import json
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .embedding import (
    EmbeddingLibrary,
    EmbeddingSpec,
    knn,
    multivariate_embed,
    state_vector,
)
from .timeseries import UNDEFINED_SKILL, Dataset, TimeSeries, pearson_rho, rmse

__all__ = [
    "SimplexConfig",
    "ForecastResult",
    "DimensionSearchResult",
    "simplex_predict",
    "skill_eval",
    "embed_dimension_search",
    "iterative_forecast",
]


@dataclass(frozen=True)
class SimplexConfig:
    """Simplex settings: embedding layout plus neighbour count.

    ``k`` of None means the bounding-simplex default ``dimension + 1``.
    Only one-step horizons are supported; longer ranges are reached by
    iterating one-step forecasts.
    """

    spec: EmbeddingSpec
    tp: int = 1
    k: int | None = None

    def __post_init__(self) -> None:
        if self.tp != 1:
            raise ValueError("only one-step horizons are supported; iterate for longer ranges")
        if self.k is not None and self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")

    @property
    def effective_k(self) -> int:
        return self.spec.dimension + 1 if self.k is None else self.k


@dataclass(frozen=True)
class ForecastResult:
    """Per-step predictions with skill metrics and a 95% band.

    ``predicted`` may contain NaN where no prediction exists; metrics are
    computed only over steps with both a prediction and an observation.
    ``band_halfwidth`` is ``1.96 * sqrt(variance)``, where the variance is
    per-step for one-step evaluations and accumulated across steps for
    iterative extrapolations.  S-map forecasts also carry the local
    regression coefficients for each step (intercept first).
    """

    target: str
    times: np.ndarray
    predicted: np.ndarray
    observed: np.ndarray | None
    rho: float
    rmse: float
    band_halfwidth: np.ndarray
    step_variance: np.ndarray
    coefficients: np.ndarray | None = None
    coefficient_labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=int)
        predicted = np.asarray(self.predicted, dtype=float)
        band = np.asarray(self.band_halfwidth, dtype=float)
        step_var = np.asarray(self.step_variance, dtype=float)
        n = times.shape[0]
        if predicted.shape != (n,) or band.shape != (n,) or step_var.shape != (n,):
            raise ValueError("times, predicted, band_halfwidth, step_variance must match")
        observed = self.observed
        if observed is not None:
            observed = np.asarray(observed, dtype=float)
            if observed.shape != (n,):
                raise ValueError("observed must match times")
            observed.setflags(write=False)
        coefficients = self.coefficients
        if coefficients is not None:
            coefficients = np.asarray(coefficients, dtype=float)
            if coefficients.shape[0] != n:
                raise ValueError("coefficients must have one row per step")
            coefficients.setflags(write=False)
        for arr in (times, predicted, band, step_var):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "predicted", predicted)
        object.__setattr__(self, "observed", observed)
        object.__setattr__(self, "band_halfwidth", band)
        object.__setattr__(self, "step_variance", step_var)
        object.__setattr__(self, "coefficients", coefficients)

    def value_at(self, year: int) -> float:
        where = np.nonzero(self.times == year)[0]
        if where.size == 0:
            raise ValueError(f"no forecast step for year {year}")
        return float(self.predicted[where[0]])

    def to_csv(self, path) -> None:
        """Write rows of (year, predicted, observed, band_lo, band_hi)."""
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["year", "predicted", "observed", "band_lo", "band_hi"])
            for i, year in enumerate(self.times):
                pred = self.predicted[i]
                obs = self.observed[i] if self.observed is not None else math.nan
                half = self.band_halfwidth[i]
                writer.writerow([
                    int(year),
                    _cell(pred),
                    _cell(obs),
                    _cell(pred - half),
                    _cell(pred + half),
                ])

    def as_dict(self) -> dict:
        return {
            "target": self.target,
            "rho": None if math.isnan(self.rho) else self.rho,
            "rmse": None if math.isnan(self.rmse) else self.rmse,
            "rows": [
                {
                    "year": int(self.times[i]),
                    "predicted": _jsonable(self.predicted[i]),
                    "observed": _jsonable(self.observed[i]) if self.observed is not None else None,
                    "band_halfwidth": _jsonable(self.band_halfwidth[i]),
                }
                for i in range(self.times.shape[0])
            ],
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.as_dict(), handle, indent=2, sort_keys=True)
            handle.write("\n")


def _cell(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def _jsonable(v: float):
    return None if math.isnan(v) else float(v)


def simplex_weights(distances: np.ndarray) -> np.ndarray:
    """Normalised exponential weights over sorted neighbour distances."""
    distances = np.asarray(distances, dtype=float)
    positive = distances[distances > 0.0]
    if positive.size == 0:
        raw = np.ones_like(distances)
    else:
        scale = float(positive.min())  # equals d_1 whenever d_1 > 0
        raw = np.where(distances > 0.0, np.exp(-distances / scale), 1.0)
    return raw / raw.sum()


def simplex_predict(library: EmbeddingLibrary, query: tuple[int, Sequence[float]],
                    cfg: SimplexConfig) -> tuple[float, float]:
    """One simplex forecast: returns (prediction, weighted target variance)."""
    neighbours = knn(library, query, cfg.effective_k)
    weights = simplex_weights(neighbours.distances)
    targets = library.targets[neighbours.indices]
    prediction = float(weights @ targets)
    variance = float(weights @ (targets - prediction) ** 2)
    return prediction, variance


def _resolve_eval_years(data: Dataset, train_end: int,
                        eval_start: int | None, eval_end: int | None) -> range:
    start = train_end + 1 if eval_start is None else eval_start
    end = data.end_year if eval_end is None else eval_end
    if start <= train_end:
        raise ValueError(f"evaluation must start after train_end={train_end}, got {start}")
    if end < start:
        raise ValueError(f"empty evaluation range {start}..{end}")
    if start <= data.start_year or end > data.end_year:
        raise ValueError(
            f"evaluation range {start}..{end} outside data {data.start_year}..{data.end_year}"
        )
    return range(start, end + 1)


def one_step_eval(data: Dataset, spec: EmbeddingSpec, target: str, eval_years: Iterable[int],
                  predict_one: Callable[[EmbeddingLibrary, tuple[int, np.ndarray]], tuple[float, float]],
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Expanding-window one-step protocol shared by the forecasting methods.

    For each evaluation year t the library holds every embeddable point whose
    target falls at or before t-1, and the query is the state at t-1; the
    model never sees the value it is asked to predict.
    """
    full = multivariate_embed(data, spec, target, tp=1)
    years = np.asarray(list(eval_years), dtype=int)
    predicted = np.empty(years.shape[0], dtype=float)
    variance = np.empty(years.shape[0], dtype=float)
    for i, t in enumerate(years):
        library = full.targets_through(int(t) - 1)
        query_time = int(t) - 1
        query = (query_time, state_vector(data, spec, query_time, norms=full.norms))
        predicted[i], variance[i] = predict_one(library, query)
    return years, predicted, variance


def skill_eval(data: Dataset, target: str, cfg: SimplexConfig, train_end: int,
               eval_start: int | None = None, eval_end: int | None = None) -> ForecastResult:
    """Expanding-window one-step simplex evaluation over a year range.

    Each year is predicted from a library containing only earlier-targeted
    points, then scored against the observations with Pearson rho and RMSE.
    """
    years = _resolve_eval_years(data, train_end, eval_start, eval_end)
    times, predicted, variance = one_step_eval(
        data, cfg.spec, target, years,
        lambda library, query: simplex_predict(library, query, cfg),
    )
    observed = np.array([data[target].value_at(int(t)) for t in times], dtype=float)
    return ForecastResult(
        target=target,
        times=times,
        predicted=predicted,
        observed=observed,
        rho=pearson_rho(observed, predicted),
        rmse=rmse(observed, predicted),
        band_halfwidth=1.96 * np.sqrt(variance),
        step_variance=variance,
    )


@dataclass(frozen=True)
class DimensionSearchResult:
    """Skill table over candidate embedding dimensions plus the winner."""

    rows: tuple[tuple[int, float, float], ...]  # (dimension, rho, rmse)
    best_dimension: int

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["E", "rho", "rmse"])
            for dimension, rho_value, rmse_value in self.rows:
                writer.writerow([dimension, _cell(rho_value), _cell(rmse_value)])


def embed_dimension_search(data: Dataset, target: str, dimensions: Iterable[int],
                           train_end: int, tau: int = 1,
                           eval_start: int | None = None, eval_end: int | None = None,
                           exclusion_radius: int | None = None,
                           threads: int = 1) -> DimensionSearchResult:
    """Evaluate one-step skill per embedding dimension and pick the argmax.

    Each dimension runs with its simplex default ``k = dimension + 1``.
    Ties in rho break toward the smallest dimension; dimensions whose skill
    is undefined never win.
    """
    dims = sorted(set(int(d) for d in dimensions))
    if not dims:
        raise ValueError("no embedding dimensions to search")

    def evaluate(dimension: int) -> tuple[int, float, float]:
        spec = EmbeddingSpec.univariate(target, dimension, tau, exclusion_radius)
        result = skill_eval(data, target, SimplexConfig(spec), train_end, eval_start, eval_end)
        return dimension, result.rho, result.rmse

    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            rows = tuple(pool.map(evaluate, dims))
    else:
        rows = tuple(evaluate(d) for d in dims)

    best: tuple[int, float] | None = None
    for dimension, rho_value, _ in rows:
        if math.isnan(rho_value):
            continue
        if best is None or rho_value > best[1]:
            best = (dimension, rho_value)
    if best is None:
        raise RuntimeError("no embedding dimension produced a defined skill")
    return DimensionSearchResult(rows=rows, best_dimension=best[0])


def extension_names(spec: EmbeddingSpec, target: str) -> tuple[str, ...]:
    """Series an iterative forecast must extend: every input, plus the target."""
    names = [name for name, _ in spec.columns]
    if target not in names:
        names.append(target)
    return tuple(names)


def run_iterative(data: Dataset, spec: EmbeddingSpec, target: str, horizon_end: int,
                  predict_step: Callable, self_condition: bool = True,
                  adjust: Callable[[int, dict[str, float]], dict[str, float]] | None = None,
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray, list]:
    """Year-at-a-time extrapolation loop shared by simplex and S-map.

    ``predict_step(ext_data, last_year, cap_year, norms)`` must return
    ``(values, variances, coefficients)`` where the dicts cover every series
    being extended.  With self conditioning (the default) each prediction is
    appended as if observed, so the library grows along the forecast; without
    it the library stays capped at the observed record while query states are
    still formed from the extended series.  ``adjust`` is applied to each
    year's predictions before they are appended, which lets policy engines
    inject interventions the later steps can see.
    """
    if horizon_end <= data.end_year:
        raise ValueError(
            f"horizon {horizon_end} must lie beyond the observed record ({data.end_year})"
        )
    names = extension_names(spec, target)
    extended = {name: list(data[name].values) for name in names}
    norms = multivariate_embed(data, spec, target, tp=1).norms  # frozen from observed data
    observed_end = data.end_year

    forecast_years = np.arange(observed_end + 1, horizon_end + 1)
    predictions = np.empty(forecast_years.shape[0], dtype=float)
    variances = np.empty(forecast_years.shape[0], dtype=float)
    coefficient_rows: list = []
    for i, year in enumerate(forecast_years):
        last_year = int(year) - 1
        ext_data = Dataset(tuple(
            TimeSeries(name, data.start_year, extended[name]) for name in names
        ))
        cap_year = last_year if self_condition else observed_end
        values, step_vars, coefficients = predict_step(ext_data, last_year, cap_year, norms)
        if adjust is not None:
            values = adjust(int(year), values)
        for name in names:
            extended[name].append(values[name])
        predictions[i] = values[target]
        variances[i] = step_vars[target]
        coefficient_rows.append(coefficients)
    return forecast_years, predictions, variances, coefficient_rows


def iterative_forecast(data: Dataset, target: str, cfg: SimplexConfig, horizon_end: int,
                       self_condition: bool = True,
                       exclusion_radius: int = 0) -> ForecastResult:
    """Extrapolate one year at a time until horizon_end.

    Multivariate specs extend every input series jointly: all series share
    the neighbour weights from the common manifold, each averaging its own
    forward values.  The band accumulates the per-step weighted neighbour
    variance along the horizon (so it can only widen).

    The temporal exclusion window defaults to 0 inside the generative loop:
    recent states (including the forecast's own appended values) are the
    only analogues of the advancing edge, and the window's anti-shortcut
    purpose applies to held-out scoring, not open-ended continuation.
    """
    names = extension_names(cfg.spec, target)

    def step(ext_data: Dataset, last_year: int, cap_year: int, norms):
        libraries = {
            name: multivariate_embed(ext_data, cfg.spec, name, tp=1, norms=norms)
            .targets_through(cap_year)
            for name in names
        }
        query = (last_year, state_vector(ext_data, cfg.spec, last_year, norms=norms))
        neighbours = knn(libraries[target], query, cfg.effective_k,
                         exclusion_radius=exclusion_radius)
        weights = simplex_weights(neighbours.distances)
        values: dict[str, float] = {}
        step_vars: dict[str, float] = {}
        for name in names:
            targets = libraries[name].targets[neighbours.indices]
            value = float(weights @ targets)
            values[name] = value
            step_vars[name] = float(weights @ (targets - value) ** 2)
        return values, step_vars, None

    years, predictions, variances, _ = run_iterative(
        data, cfg.spec, target, horizon_end, step, self_condition
    )
    return ForecastResult(
        target=target,
        times=years,
        predicted=predictions,
        observed=None,
        rho=UNDEFINED_SKILL,
        rmse=UNDEFINED_SKILL,
        band_halfwidth=1.96 * np.sqrt(np.cumsum(variances)),
        step_variance=variances,
    )
