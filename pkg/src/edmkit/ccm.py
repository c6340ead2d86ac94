"""Convergent cross mapping: causality detection via cross-map skill.

To test whether series A drives series B, the *effect* series B is delay
embedded and each of its manifold states estimates the contemporaneous value
of A as the kernel-weighted average of A at the nearest neighbour times
(Manhattan distance, ``dimension + 1`` neighbours, weights
``exp(-d_j / d_1)``).  If A truly forces B, then B's history carries A's
signature, and the Pearson correlation between estimated and actual A rises
toward a positive plateau as the library grows.  Sweeping the library size
with seeded random subsamples produces that convergence curve for both
directions at once.

By default each query's own time index is left out of the neighbour pool,
otherwise every in-library query would trivially reconstruct itself and the
null behaviour of unrelated series would be destroyed.  The degenerate
self-mapping identity (a manifold predicting its own observable exactly) is
still available by disabling leave-one-out.

Every (size, sample) cell derives its RNG stream from (seed, size, sample
index), so sweep results are independent of scheduling order and thread
count.
"""

from __future__ import annotations

import concurrent.futures
import csv
import json
from dataclasses import dataclass

import numpy as np

from .embedding import EmbeddingSpec, multivariate_embed
from .timeseries import Dataset, TimeSeries, pearson_rho

__all__ = [
    "CcmConfig",
    "CcmDirection",
    "CcmResult",
    "cross_map",
    "convergence_sweep",
]


@dataclass(frozen=True)
class CcmConfig:
    """Sweep settings for convergent cross mapping.

    ``library_sizes`` must be increasing, at least ``dimension + 2`` each,
    and no larger than the number of embeddable points.  ``method`` selects
    random-index subsampling (default) or contiguous blocks.
    """

    dimension: int
    library_sizes: tuple[int, ...]
    tau: int = 1
    samples_per_size: int = 20
    seed: int = 0
    replacement: bool = False
    method: str = "random"
    exclusion_radius: int = 0
    convergence_margin: float = 0.05
    plateau_tolerance: float = 0.02

    def __post_init__(self) -> None:
        sizes = tuple(int(s) for s in self.library_sizes)
        if not sizes:
            raise ValueError("library_sizes is empty")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError(f"library_sizes must be strictly increasing: {sizes}")
        if sizes[0] < self.dimension + 2:
            raise ValueError(
                f"smallest library size {sizes[0]} below dimension+2 = {self.dimension + 2}"
            )
        if self.samples_per_size < 1:
            raise ValueError("samples_per_size must be >= 1")
        if self.method not in ("random", "contiguous"):
            raise ValueError(f"unknown subsampling method {self.method!r}")
        object.__setattr__(self, "library_sizes", sizes)


def cross_map(cause: TimeSeries, effect: TimeSeries, dimension: int, tau: int = 1,
              library_indices=None, exclusion_radius: int = 0,
              leave_one_out: bool = True) -> float:
    """Cross-map skill: how well the effect's manifold recovers the cause.

    The effect series is embedded with the given dimension and delay; for
    every reconstructable time, the cause value is estimated from the
    ``dimension + 1`` nearest manifold points drawn from ``library_indices``
    (all points when None).  Returns the Pearson correlation between
    estimates and actual cause values (the undefined-skill marker when the
    estimate has zero variance).

    An exact zero-distance match takes the whole kernel weight, which is the
    continuous limit of the exponential kernel; with ``leave_one_out`` off
    and a full library this makes a series reconstruct itself exactly.
    """
    if cause.start_year != effect.start_year or len(cause) != len(effect):
        raise ValueError(
            f"series must be aligned: {cause.name!r} {cause.start_year}..{cause.end_year}, "
            f"{effect.name!r} {effect.start_year}..{effect.end_year}"
        )
    spec = EmbeddingSpec.univariate(effect.name, dimension, tau, exclusion_radius=0)
    if cause.name == effect.name:
        data = Dataset((effect,))
    else:
        data = Dataset((effect, cause))
    library = multivariate_embed(data, spec, cause.name, tp=0)

    n = len(library)
    if library_indices is None:
        indices = np.arange(n)
    else:
        indices = np.asarray(library_indices, dtype=int)
        if indices.ndim != 1 or indices.size == 0:
            raise ValueError("library_indices must be a non-empty 1-D index collection")
        if indices.min() < 0 or indices.max() >= n:
            raise ValueError(f"library indices out of range 0..{n - 1}")
    k = dimension + 1
    if indices.size < dimension + 2:
        raise ValueError(
            f"cross-map library needs at least dimension+2 = {dimension + 2} points, "
            f"have {indices.size}"
        )

    lib_vectors = library.vectors[indices]
    lib_times = library.times[indices]
    lib_cause = library.targets[indices]
    estimates = np.empty(n, dtype=float)
    for i in range(n):
        distances = np.abs(lib_vectors - library.vectors[i]).sum(axis=1)
        keep = np.ones(indices.size, dtype=bool)
        if leave_one_out:
            keep &= lib_times != library.times[i]
        if exclusion_radius > 0:
            keep &= np.abs(lib_times - library.times[i]) > exclusion_radius
        candidates = np.nonzero(keep)[0]
        if candidates.size < k:
            raise ValueError(
                f"cross-map query at {int(library.times[i])} has only {candidates.size} "
                f"admissible neighbours, needs {k}"
            )
        order = np.lexsort((lib_times[candidates], distances[candidates]))
        chosen = candidates[order[:k]]
        d = distances[chosen]
        if d[0] == 0.0:
            weights = (d == 0.0).astype(float)
        else:
            weights = np.exp(-d / d[0])
        weights /= weights.sum()
        estimates[i] = weights @ lib_cause[chosen]
    return pearson_rho(library.targets, estimates)


@dataclass(frozen=True)
class CcmDirection:
    """One cross-map direction: rho versus library size, plus a verdict.

    ``samples[i, j]`` is the skill of sample j at ``library_sizes[i]``;
    ``spread`` is the sample standard deviation per size.
    """

    cause: str
    effect: str
    library_sizes: tuple[int, ...]
    mean_rho: tuple[float, ...]
    spread: tuple[float, ...]
    samples: np.ndarray
    verdict: str

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=float)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def label(self) -> str:
        return f"{self.cause}|M({self.effect})"

    @property
    def final_mean_rho(self) -> float:
        return self.mean_rho[-1]


@dataclass(frozen=True)
class CcmResult:
    """Both cross-map directions of a series pair on identical grids and seeds."""

    a_from_b: CcmDirection
    b_from_a: CcmDirection
    insufficient_grid: bool
    seed: int

    @property
    def directions(self) -> tuple[CcmDirection, CcmDirection]:
        return (self.a_from_b, self.b_from_a)

    def to_csv(self, path) -> None:
        """Write every sample as (direction, library_size, sample, rho)."""
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["direction", "library_size", "sample", "rho"])
            for direction in self.directions:
                for i, size in enumerate(direction.library_sizes):
                    for j in range(direction.samples.shape[1]):
                        value = direction.samples[i, j]
                        writer.writerow([
                            direction.label, size, j,
                            "" if np.isnan(value) else repr(float(value)),
                        ])

    def summary(self) -> dict:
        def describe(direction: CcmDirection) -> dict:
            return {
                "cause": direction.cause,
                "effect": direction.effect,
                "library_sizes": list(direction.library_sizes),
                "mean_rho": [None if np.isnan(v) else v for v in direction.mean_rho],
                "spread": [None if np.isnan(v) else v for v in direction.spread],
                "final_mean_rho": None if np.isnan(direction.final_mean_rho)
                else direction.final_mean_rho,
                "verdict": direction.verdict,
            }

        return {
            "directions": [describe(d) for d in self.directions],
            "insufficient_grid": self.insufficient_grid,
            "seed": self.seed,
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.summary(), handle, indent=2, sort_keys=True)
            handle.write("\n")


def _verdict(means: np.ndarray, cfg: CcmConfig) -> str:
    final = means[-1]
    if np.isnan(final):
        return "non-convergent"
    if final <= 0.0:
        return "negative"
    if means.size < 2:
        return "non-convergent"
    rising = final - means[0] > cfg.convergence_margin
    plateau = abs(means[-1] - means[-2]) < cfg.plateau_tolerance
    return "convergent-positive" if rising and plateau else "non-convergent"


def _draw_indices(rng: np.random.Generator, n: int, size: int, cfg: CcmConfig) -> np.ndarray:
    if cfg.method == "contiguous":
        start = int(rng.integers(0, n - size + 1))
        return np.arange(start, start + size)
    return rng.choice(n, size=size, replace=cfg.replacement)


def convergence_sweep(a: TimeSeries, b: TimeSeries, cfg: CcmConfig,
                      threads: int = 1) -> CcmResult:
    """Sweep cross-map skill over library sizes in both directions.

    A direction is "convergent-positive" when its mean curve rises by more
    than the margin from first to final size, ends positive, and its last
    two grid points agree within the plateau tolerance.  A single-size grid
    cannot exhibit convergence, so the result is flagged insufficient.
    """
    n = min(len(a), len(b)) - (cfg.dimension - 1) * cfg.tau
    sizes = cfg.library_sizes
    if sizes[-1] > n:
        raise ValueError(f"largest library size {sizes[-1]} exceeds embeddable points {n}")

    cells = [(i, size, j) for i, size in enumerate(sizes) for j in range(cfg.samples_per_size)]

    def run_cell(cell: tuple[int, int, int]) -> tuple[int, int, float, float]:
        i, size, j = cell
        rng = np.random.default_rng((cfg.seed, size, j))
        indices = _draw_indices(rng, n, size, cfg)
        rho_ab = cross_map(a, b, cfg.dimension, cfg.tau, indices, cfg.exclusion_radius)
        rho_ba = cross_map(b, a, cfg.dimension, cfg.tau, indices, cfg.exclusion_radius)
        return i, j, rho_ab, rho_ba

    results_ab = np.empty((len(sizes), cfg.samples_per_size), dtype=float)
    results_ba = np.empty_like(results_ab)
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run_cell, cells))
    else:
        outcomes = [run_cell(cell) for cell in cells]
    for i, j, rho_ab, rho_ba in outcomes:
        results_ab[i, j] = rho_ab
        results_ba[i, j] = rho_ba

    def direction(cause: str, effect: str, samples: np.ndarray) -> CcmDirection:
        means = samples.mean(axis=1)
        spreads = samples.std(axis=1)
        return CcmDirection(
            cause=cause,
            effect=effect,
            library_sizes=sizes,
            mean_rho=tuple(float(v) for v in means),
            spread=tuple(float(v) for v in spreads),
            samples=samples,
            verdict=_verdict(means, cfg),
        )

    return CcmResult(
        a_from_b=direction(a.name, b.name, results_ab),
        b_from_a=direction(b.name, a.name, results_ba),
        insufficient_grid=len(sizes) < 2,
        seed=cfg.seed,
    )
