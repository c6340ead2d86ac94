"""Mitigation-policy counterfactuals on the debris system.

Three families of intervention are modelled, all effective from a chosen
year (2000 by default) through the end of the observed record:

* post-mission disposal (PMD): every object launched after the effective
  year is deorbited once its operational lifetime plus the disposal window
  has elapsed, removing it from both the debris and total-body counts;
* launch reduction: a fraction of each year's launches never happens, so
  the total-body count loses the cumulative shortfall and the debris count
  loses the shortfall scaled by the historical debris-per-launched-object
  ratio (or nothing, in "z_only" mode);
* active debris removal (ADR): a fixed number of debris objects is removed
  from each year's count (an optional cumulative mode keeps every removal
  off the books permanently; the annual mode matches how such campaigns are
  usually scored against aggregate counts).

The adjusted history is then re-forecast with the tuned S-map.  PMD keeps
intervening during the forecast: each predicted year is reduced by the
cohorts whose disposal falls due that year, before the value joins the
library, so later steps learn the policy dynamic.  Once the last cohort has
deorbited the forecast runs clean to the horizon, and the confidence band
restarts there, since that final stretch is a fresh prediction problem with
its own (shorter) horizon.

Every adjusted series is floored at zero.  A disposal window at or beyond
the current 25-year practice leaves the recorded history untouched, so such
scenarios are defined to equal the baseline exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .embedding import EmbeddingSpec
from .simplex import ForecastResult
from .smap import SMapConfig, smap_iterative_forecast
from .timeseries import Dataset

__all__ = [
    "CURRENT_PMD_YEARS",
    "PolicyScenario",
    "ScenarioModelConfig",
    "MitigationReport",
    "pmd_adjust",
    "launch_reduction_adjust",
    "adr_adjust",
    "simulate",
    "run_scenarios",
    "load_scenario_file",
]

#: Disposal window of the policy already in force; scenarios at or above it
#: cannot differ from the recorded history.
CURRENT_PMD_YEARS = 25


@dataclass(frozen=True)
class PolicyScenario:
    """One mitigation policy: kind plus exactly that kind's parameters."""

    kind: str
    name: str = ""
    effective_year: int = 2000
    operational_lifetime: int = 10
    pmd_years: int | None = None
    reduction_fraction: float | None = None
    adr_per_year: int | None = None
    compliance: float = 1.0
    adr_cumulative: bool = False
    launch_x_mode: str = "ratio"

    def __post_init__(self) -> None:
        required = {
            "pmd": "pmd_years",
            "launch_reduction": "reduction_fraction",
            "adr": "adr_per_year",
        }
        if self.kind not in required:
            raise ValueError(f"unknown scenario kind {self.kind!r}; use {sorted(required)}")
        values = {
            "pmd_years": self.pmd_years,
            "reduction_fraction": self.reduction_fraction,
            "adr_per_year": self.adr_per_year,
        }
        needed = required[self.kind]
        if values[needed] is None:
            raise ValueError(f"{self.kind} scenario needs {needed}")
        for field_name, value in values.items():
            if field_name != needed and value is not None:
                raise ValueError(f"{self.kind} scenario must not set {field_name}")
        if self.kind == "pmd" and self.pmd_years < 0:
            raise ValueError("pmd_years must be >= 0")
        if self.kind == "launch_reduction" and not 0.0 <= self.reduction_fraction <= 1.0:
            raise ValueError(f"reduction_fraction must lie in [0, 1], got {self.reduction_fraction}")
        if self.kind == "adr" and self.adr_per_year < 0:
            raise ValueError("adr_per_year must be >= 0")
        if not 0.0 <= self.compliance <= 1.0:
            raise ValueError(f"compliance must lie in [0, 1], got {self.compliance}")
        if self.launch_x_mode not in ("ratio", "z_only"):
            raise ValueError(f"launch_x_mode must be 'ratio' or 'z_only', got {self.launch_x_mode!r}")
        if not self.name:
            object.__setattr__(self, "name", self._default_name())

    def _default_name(self) -> str:
        if self.kind == "pmd":
            return f"pmd_{self.pmd_years}yr"
        if self.kind == "launch_reduction":
            return f"launch_minus_{round(self.reduction_fraction * 100)}pct"
        return f"adr_{self.adr_per_year}"

    def adjust_window_end(self, data_end: int) -> int:
        """Last year the policy can still alter (PMD reaches past the record)."""
        if self.kind == "pmd":
            return data_end + self.operational_lifetime + self.pmd_years
        return data_end


@dataclass(frozen=True)
class ScenarioModelConfig:
    """Forecast settings shared by a batch of scenario runs.

    Two-input runs (PMD, ADR) embed debris and total bodies with ``lags``
    lags each; launch-reduction runs add the launch series using
    ``three_input_lags``.  Series roles are resolved by name so other
    datasets can reuse the engine.
    """

    theta: float = 7.0
    lags: int = 2
    tau: int = 1
    ridge: float = 0.0
    horizon_end: int = 2050
    debris: str = "debris"
    launched: str = "launched"
    total: str = "total"
    three_input_lags: tuple[int, int, int] = (1, 1, 1)

    def two_input_config(self) -> SMapConfig:
        spec = EmbeddingSpec(
            ((self.debris, self.lags), (self.total, self.lags)), tau=self.tau
        )
        return SMapConfig(spec, self.theta, ridge=self.ridge)

    def three_input_config(self) -> SMapConfig:
        lx, ly, lz = self.three_input_lags
        spec = EmbeddingSpec(
            ((self.debris, lx), (self.launched, ly), (self.total, lz)), tau=self.tau
        )
        return SMapConfig(spec, self.theta, ridge=self.ridge)


@dataclass(frozen=True)
class MitigationReport:
    """Outcome of one scenario run against its kind-appropriate baseline."""

    scenario: PolicyScenario
    debris_2050: float
    baseline_2050: float
    pct_mitigated: float
    margin_of_error: float
    trajectory: ForecastResult

    def as_dict(self) -> dict:
        return {
            "scenario": self.scenario.name,
            "kind": self.scenario.kind,
            "debris_2050": self.debris_2050,
            "baseline_2050": self.baseline_2050,
            "pct_mitigated": self.pct_mitigated,
            "margin_of_error": self.margin_of_error,
        }


def _deorbit_cohorts(data: Dataset, scenario: PolicyScenario, launched: str) -> dict[int, float]:
    """Deorbit totals keyed by the year they fall due.

    Cohort y (objects launched in year y, from the effective year on) comes
    down in year y + operational_lifetime + pmd_years; only recorded launch
    years contribute.
    """
    launches = data[launched]
    due: dict[int, float] = {}
    first = max(scenario.effective_year, launches.start_year)
    for year in range(first, launches.end_year + 1):
        due_year = year + scenario.operational_lifetime + scenario.pmd_years
        due[due_year] = due.get(due_year, 0.0) + scenario.compliance * launches.value_at(year)
    return due


def cumulative_deorbited(data: Dataset, scenario: PolicyScenario, year: int,
                         launched: str = "launched") -> float:
    """Total objects deorbited by the policy up to and including a year."""
    due = _deorbit_cohorts(data, scenario, launched)
    return sum(v for d, v in due.items() if d <= year)


def pmd_adjust(data: Dataset, scenario: PolicyScenario,
               debris: str = "debris", launched: str = "launched",
               total: str = "total") -> Dataset:
    """Subtract cumulative PMD deorbits from the recorded debris and totals.

    Only the observed window changes here; disposals falling due after the
    record ends are applied during the forecast (see ``simulate``).
    """
    if scenario.kind != "pmd":
        raise ValueError(f"pmd_adjust needs a pmd scenario, got {scenario.kind!r}")
    for name in (debris, launched, total):
        if name not in data:
            raise ValueError(f"dataset is missing required series {name!r}")
    due = _deorbit_cohorts(data, scenario, launched)
    x = list(data[debris].values)
    z = list(data[total].values)
    removed = 0.0
    for year in range(scenario.effective_year, data.end_year + 1):
        removed += due.get(year, 0.0)
        if removed > 0.0 and year >= data.start_year:
            i = year - data.start_year
            x[i] = max(0.0, x[i] - removed)
            z[i] = max(0.0, z[i] - removed)
    return data.with_values({debris: x, total: z})


def launch_reduction_adjust(data: Dataset, scenario: PolicyScenario,
                            debris: str = "debris", launched: str = "launched",
                            total: str = "total") -> Dataset:
    """Scale launches down over the policy window and propagate the shortfall.

    Every unlaunched object is one fewer body in the total count; the debris
    count drops by the per-year debris-per-launched-object ratio times the
    cumulative shortfall ("ratio" mode) or not at all ("z_only" mode).
    """
    if scenario.kind != "launch_reduction":
        raise ValueError(
            f"launch_reduction_adjust needs a launch_reduction scenario, got {scenario.kind!r}"
        )
    for name in (debris, launched, total):
        if name not in data:
            raise ValueError(f"dataset is missing required series {name!r}")
    fraction = scenario.reduction_fraction
    x = list(data[debris].values)
    y = list(data[launched].values)
    z = list(data[total].values)
    original_y = data[launched].to_array()
    cumulative_launched = np.cumsum(original_y)
    shortfall = 0.0
    for year in range(scenario.effective_year, data.end_year + 1):
        if year < data.start_year:
            continue
        i = year - data.start_year
        shortfall += fraction * original_y[i]
        y[i] = (1.0 - fraction) * original_y[i]
        z[i] = max(0.0, z[i] - shortfall)
        if scenario.launch_x_mode == "ratio" and cumulative_launched[i] > 0:
            ratio = data[debris].values[i] / cumulative_launched[i]
            x[i] = max(0.0, x[i] - ratio * shortfall)
    return data.with_values({debris: x, launched: y, total: z})


def adr_adjust(data: Dataset, scenario: PolicyScenario,
               debris: str = "debris", total: str = "total") -> Dataset:
    """Remove debris by campaign: annual level reduction, or cumulative.

    Removed debris objects are also bodies, so both counts drop.  The annual
    mode reduces each recorded year by the yearly removal count; cumulative
    mode subtracts everything removed so far (and floors hard at zero).
    """
    if scenario.kind != "adr":
        raise ValueError(f"adr_adjust needs an adr scenario, got {scenario.kind!r}")
    for name in (debris, total):
        if name not in data:
            raise ValueError(f"dataset is missing required series {name!r}")
    x = list(data[debris].values)
    z = list(data[total].values)
    for year in range(scenario.effective_year, data.end_year + 1):
        if year < data.start_year:
            continue
        i = year - data.start_year
        if scenario.adr_cumulative:
            removal = scenario.adr_per_year * (year - scenario.effective_year + 1)
        else:
            removal = scenario.adr_per_year
        x[i] = max(0.0, x[i] - removal)
        z[i] = max(0.0, z[i] - removal)
    return data.with_values({debris: x, total: z})


def _reset_band(trajectory: ForecastResult, reset_year: int) -> ForecastResult:
    """Restart the cumulative band at reset_year (fresh final-phase horizon)."""
    variance = trajectory.step_variance
    cumulative = np.empty_like(variance)
    running = 0.0
    for i, year in enumerate(trajectory.times):
        if int(year) == reset_year:
            running = 0.0
        running += variance[i]
        cumulative[i] = running
    return replace(trajectory, band_halfwidth=1.96 * np.sqrt(cumulative))


def _floor_counts(_year: int, values: dict[str, float]) -> dict[str, float]:
    # population counts cannot go negative; policy trajectories are floored
    return {name: max(0.0, value) for name, value in values.items()}


def baseline_forecast(data: Dataset, config: ScenarioModelConfig,
                      three_input: bool = False) -> ForecastResult:
    """The no-intervention trajectory a scenario is scored against."""
    cfg = config.three_input_config() if three_input else config.two_input_config()
    return smap_iterative_forecast(data, config.debris, cfg, config.horizon_end,
                                   adjust=_floor_counts)


def simulate(data: Dataset, scenario: PolicyScenario, config: ScenarioModelConfig,
             baseline: ForecastResult | None = None,
             baseline_three_input: ForecastResult | None = None) -> MitigationReport:
    """Run one policy scenario end to end and score it against its baseline.

    Pipeline: apply the kind's adjustment to the observed window, re-forecast
    to the horizon (PMD keeps subtracting cohorts as they fall due, inside
    the loop), then compare the final-year debris prediction against the
    kind-appropriate baseline.  Launch-reduction scenarios are scored against
    the three-input baseline, because adding the launch series changes the
    system evolution wholesale; everything else uses the two-input baseline.
    """
    horizon = config.horizon_end
    if scenario.kind == "launch_reduction":
        if baseline_three_input is None:
            baseline_three_input = baseline_forecast(data, config, three_input=True)
        reference = baseline_three_input
    else:
        if baseline is None:
            baseline = baseline_forecast(data, config)
        reference = baseline
    baseline_value = reference.value_at(horizon)

    if scenario.kind == "pmd":
        trajectory = _simulate_pmd(data, scenario, config, reference)
    elif scenario.kind == "launch_reduction":
        adjusted = launch_reduction_adjust(
            data, scenario, config.debris, config.launched, config.total
        )
        trajectory = smap_iterative_forecast(
            adjusted, config.debris, config.three_input_config(), horizon,
            adjust=_floor_counts,
        )
    else:
        adjusted = adr_adjust(data, scenario, config.debris, config.total)
        trajectory = smap_iterative_forecast(
            adjusted, config.debris, config.two_input_config(), horizon,
            adjust=_floor_counts,
        )

    debris_final = trajectory.value_at(horizon)
    pct = 100.0 * (baseline_value - debris_final) / baseline_value
    return MitigationReport(
        scenario=scenario,
        debris_2050=debris_final,
        baseline_2050=baseline_value,
        pct_mitigated=pct,
        margin_of_error=float(trajectory.band_halfwidth[-1]),
        trajectory=trajectory,
    )


def _simulate_pmd(data: Dataset, scenario: PolicyScenario, config: ScenarioModelConfig,
                  baseline: ForecastResult) -> ForecastResult:
    if scenario.pmd_years >= CURRENT_PMD_YEARS:
        # Already current practice: the recorded history embeds this policy,
        # so the scenario is defined to equal the baseline.
        return baseline
    horizon = config.horizon_end
    adjusted = pmd_adjust(data, scenario, config.debris, config.launched, config.total)
    due = _deorbit_cohorts(data, scenario, config.launched)

    def apply_due_deorbits(year: int, values: dict[str, float]) -> dict[str, float]:
        out = _floor_counts(year, values)
        removal = due.get(year, 0.0)
        if removal > 0.0:
            out[config.debris] = max(0.0, out[config.debris] - removal)
            out[config.total] = max(0.0, out[config.total] - removal)
        return out

    trajectory = smap_iterative_forecast(
        adjusted, config.debris, config.two_input_config(), horizon,
        adjust=apply_due_deorbits,
    )
    window_end = scenario.adjust_window_end(data.end_year)
    if window_end < horizon:
        trajectory = _reset_band(trajectory, window_end + 1)
    return trajectory


def run_scenarios(data: Dataset, scenarios: Iterable[PolicyScenario],
                  config: ScenarioModelConfig, threads: int = 1) -> list[MitigationReport]:
    """Run a batch of scenarios against shared baselines, in input order."""
    todo = list(scenarios)
    baseline = baseline_forecast(data, config)
    baseline3 = None
    if any(s.kind == "launch_reduction" for s in todo):
        baseline3 = baseline_forecast(data, config, three_input=True)

    def run(scenario: PolicyScenario) -> MitigationReport:
        return simulate(data, scenario, config, baseline, baseline3)

    if threads > 1:
        import concurrent.futures

        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, todo))
    return [run(s) for s in todo]


_MODEL_KEYS = {
    "theta": float,
    "lags": int,
    "tau": int,
    "ridge": float,
    "horizon": int,
    "debris": str,
    "launched": str,
    "total": str,
    "three_input_lags": str,
}

_SCENARIO_KEYS = {
    "kind": str,
    "effective_year": int,
    "operational_lifetime": int,
    "pmd_years": int,
    "reduction_fraction": float,
    "adr_per_year": int,
    "compliance": float,
    "adr_cumulative": bool,
    "launch_x_mode": str,
}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def load_scenario_file(path) -> tuple[ScenarioModelConfig, list[PolicyScenario]]:
    """Parse a declarative scenario file into model settings plus scenarios.

    Format: ``key = value`` lines; keys before the first ``[section]`` set
    the shared model (theta, lags, tau, ridge, horizon, series names),
    each ``[name]`` section defines one scenario.  ``#`` lines are comments.
    Malformed or unknown keys raise ValueError naming the offending line.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such scenario file: {path}")
    model_kwargs: dict = {}
    sections: list[tuple[str, dict]] = []
    current: dict | None = None
    with open(path, encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                name = line[1:-1].strip()
                if not name:
                    raise ValueError(f"{path}: line {line_no}: empty section name")
                current = {"name": name}
                sections.append((name, current))
                continue
            if "=" not in line:
                raise ValueError(f"{path}: line {line_no}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            schema = _MODEL_KEYS if current is None else _SCENARIO_KEYS
            if key not in schema:
                raise ValueError(f"{path}: line {line_no}: unknown key {key!r}")
            caster = schema[key]
            try:
                parsed = _parse_bool(value) if caster is bool else caster(value)
            except ValueError:
                raise ValueError(
                    f"{path}: line {line_no}: bad value {value!r} for key {key!r}"
                ) from None
            if current is None:
                model_kwargs[key] = parsed
            else:
                current[key] = parsed

    if "horizon" in model_kwargs:
        model_kwargs["horizon_end"] = model_kwargs.pop("horizon")
    if "three_input_lags" in model_kwargs:
        parts = [p.strip() for p in str(model_kwargs["three_input_lags"]).split(",")]
        if len(parts) != 3:
            raise ValueError(f"{path}: three_input_lags needs three comma-separated integers")
        model_kwargs["three_input_lags"] = tuple(int(p) for p in parts)
    config = ScenarioModelConfig(**model_kwargs)

    scenarios = []
    for name, entries in sections:
        if "kind" not in entries:
            raise ValueError(f"{path}: scenario [{name}] is missing 'kind'")
        scenarios.append(PolicyScenario(**entries))
    if not scenarios:
        raise ValueError(f"{path}: no scenario sections found")
    return config, scenarios
