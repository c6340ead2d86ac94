"""Delay-coordinate state-space reconstruction and neighbour search.

A scalar series ``x`` with dimension ``E`` and delay ``tau`` is unfolded into
vectors ``<x(t), x(t - tau), ..., x(t - (E-1) tau)>``; multivariate layouts
concatenate the lag blocks of several series in a declared column order.
Faithful reconstruction classically requires the dimension to exceed twice
the (unobservable) attractor dimension, so that condition is documented here
rather than enforced; in practice the dimension is chosen by forecast skill.

Neighbour search is a brute-force scan, which is the reference semantics:
libraries in this problem domain hold at most a few hundred points, and any
accelerated index would have to match the scan exactly anyway.  Ties at
equal distance break deterministically toward the earlier time index.

The temporal exclusion window suppresses autocorrelation shortcuts: with a
radius ``r > 0``, candidates within ``r`` steps of the query time are removed
from neighbour candidacy.  A radius of 0 disables the window entirely (an
exact self-match is then admissible).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .timeseries import Dataset, TimeSeries

__all__ = [
    "EmbeddingError",
    "NeighborShortfallError",
    "EmbeddingSpec",
    "EmbeddingLibrary",
    "NeighborSet",
    "delay_embed",
    "multivariate_embed",
    "state_vector",
    "knn",
]


class EmbeddingError(RuntimeError):
    """The data cannot support the requested embedding."""


class NeighborShortfallError(RuntimeError):
    """Fewer admissible neighbours than the query requires."""


@dataclass(frozen=True)
class EmbeddingSpec:
    """Layout of a delay-coordinate embedding.

    Parameters
    ----------
    columns : ordered (series name, lag count) pairs
        Each pair contributes the block ``s(t), s(t-tau), ...`` to the
        vector; the total coordinate count is the embedding dimension.
    tau : int
        Delay between lags, in whole years.  Fractional delays are rejected.
    exclusion_radius : int or None
        Temporal exclusion window for neighbour search.  None means the
        default ``dimension * tau``; 0 disables exclusion.
    normalize : bool
        When True each series is z-scored (over its full extent) before
        coordinates are formed, so distances mix series of very different
        magnitudes evenly.  Default False: raw coordinates.
    """

    columns: tuple[tuple[str, int], ...]
    tau: int = 1
    exclusion_radius: int | None = None
    normalize: bool = False

    def __post_init__(self) -> None:
        cols = tuple((str(name), int(lags)) for name, lags in self.columns)
        if not cols:
            raise ValueError("embedding needs at least one (series, lags) column")
        for name, lags in cols:
            if lags < 1:
                raise ValueError(f"lag count for {name!r} must be >= 1, got {lags}")
        names = [name for name, _ in cols]
        if len(set(names)) != len(names):
            raise ValueError(f"series may appear only once in an embedding: {names}")
        if not float(self.tau).is_integer() or int(self.tau) < 1:
            raise ValueError(f"tau must be a whole positive number of years, got {self.tau}")
        if self.exclusion_radius is not None and int(self.exclusion_radius) < 0:
            raise ValueError(f"exclusion radius must be >= 0, got {self.exclusion_radius}")
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "tau", int(self.tau))
        if self.exclusion_radius is not None:
            object.__setattr__(self, "exclusion_radius", int(self.exclusion_radius))

    @staticmethod
    def univariate(name: str, dimension: int, tau: int = 1,
                   exclusion_radius: int | None = None,
                   normalize: bool = False) -> "EmbeddingSpec":
        if dimension < 1:
            raise ValueError(f"embedding dimension must be >= 1, got {dimension}")
        return EmbeddingSpec(((name, int(dimension)),), tau, exclusion_radius, normalize)

    @property
    def dimension(self) -> int:
        """Total coordinate count."""
        return sum(lags for _, lags in self.columns)

    @property
    def radius(self) -> int:
        """Effective exclusion radius (defaults to dimension * tau)."""
        if self.exclusion_radius is None:
            return self.dimension * self.tau
        return self.exclusion_radius

    @property
    def max_offset(self) -> int:
        """Largest backward index offset any coordinate reaches."""
        return max((lags - 1) * self.tau for _, lags in self.columns)

    def coordinate_labels(self) -> tuple[str, ...]:
        labels = []
        for name, lags in self.columns:
            for j in range(lags):
                labels.append(f"{name}(t)" if j == 0 else f"{name}(t-{j * self.tau})")
        return tuple(labels)


@dataclass(frozen=True)
class EmbeddingLibrary:
    """Delay vectors with their head times and forward targets.

    ``vectors[i]`` is the state at ``times[i]`` and ``targets[i]`` is the
    value of the target series at ``times[i] + tp``.  Points are stored in
    ascending time order.  ``norms`` records any per-series (mean, std)
    applied to the coordinates so queries can be transformed identically.
    """

    spec: EmbeddingSpec
    target_name: str
    tp: int
    times: np.ndarray
    vectors: np.ndarray
    targets: np.ndarray
    norms: tuple[tuple[str, float, float], ...] | None = None

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=int)
        vectors = np.asarray(self.vectors, dtype=float)
        targets = np.asarray(self.targets, dtype=float)
        if vectors.ndim != 2 or vectors.shape[1] != self.spec.dimension:
            raise ValueError(f"vectors must be (n, {self.spec.dimension}), got {vectors.shape}")
        if times.shape != (vectors.shape[0],) or targets.shape != times.shape:
            raise ValueError("times, vectors, and targets must have matching lengths")
        for arr in (times, vectors, targets):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "targets", targets)

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def target_times(self) -> np.ndarray:
        return self.times + self.tp

    def targets_through(self, last_target_year: int) -> "EmbeddingLibrary":
        """The sub-library whose targets fall at or before the given year."""
        count = int(np.searchsorted(self.times, last_target_year - self.tp, side="right"))
        return EmbeddingLibrary(
            spec=self.spec,
            target_name=self.target_name,
            tp=self.tp,
            times=self.times[:count],
            vectors=self.vectors[:count],
            targets=self.targets[:count],
            norms=self.norms,
        )


@dataclass(frozen=True)
class NeighborSet:
    """Library row indices and distances, ascending by (distance, time)."""

    indices: np.ndarray
    distances: np.ndarray

    def __post_init__(self) -> None:
        indices = np.asarray(self.indices, dtype=int)
        distances = np.asarray(self.distances, dtype=float)
        if indices.shape != distances.shape or indices.ndim != 1:
            raise ValueError("indices and distances must be matching 1-D arrays")
        for arr in (indices, distances):
            arr.setflags(write=False)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "distances", distances)

    def __len__(self) -> int:
        return self.indices.shape[0]


def _resolve_norms(data: Dataset, spec: EmbeddingSpec) -> tuple[tuple[str, float, float], ...] | None:
    if not spec.normalize:
        return None
    norms = []
    for name, _ in spec.columns:
        values = data[name].to_array()
        std = float(values.std())
        norms.append((name, float(values.mean()), std if std > 0.0 else 1.0))
    return tuple(norms)


def _transform(values: np.ndarray, name: str,
               norms: tuple[tuple[str, float, float], ...] | None) -> np.ndarray:
    if norms is None:
        return values
    for norm_name, mean, std in norms:
        if norm_name == name:
            return (values - mean) / std
    return values


def multivariate_embed(data: Dataset, spec: EmbeddingSpec, target: str, tp: int = 1,
                       norms: tuple[tuple[str, float, float], ...] | None = None,
                       ) -> EmbeddingLibrary:
    """Embed several series jointly; column blocks follow the spec's order.

    The target column supplies the forward value at ``t + tp``.  Every
    coordinate and every target must exist in the data; there is no padding.
    Pass ``norms`` to reuse a transform computed elsewhere (otherwise it is
    derived from this dataset when the spec asks for normalization).
    """
    if tp < 0:
        raise ValueError(f"prediction horizon must be >= 0, got {tp}")
    if target not in data:
        raise ValueError(f"unknown target series {target!r}; have {list(data.names)}")
    for name, _ in spec.columns:
        if name not in data:
            raise ValueError(f"unknown series {name!r} in embedding; have {list(data.names)}")

    first_idx = spec.max_offset
    last_idx = data.n_years - 1 - tp
    if last_idx < first_idx:
        raise EmbeddingError(
            f"series of length {data.n_years} too short for embedding "
            f"(needs more than {spec.max_offset + tp} points)"
        )
    if norms is None:
        norms = _resolve_norms(data, spec)

    n = last_idx - first_idx + 1
    head = np.arange(first_idx, last_idx + 1)
    vectors = np.empty((n, spec.dimension), dtype=float)
    col = 0
    for name, lags in spec.columns:
        values = _transform(data[name].to_array(), name, norms)
        for j in range(lags):
            vectors[:, col] = values[head - j * spec.tau]
            col += 1
    targets = data[target].to_array()[head + tp]
    times = data.start_year + head
    return EmbeddingLibrary(spec, target, tp, times, vectors, targets, norms)


def delay_embed(series: TimeSeries, spec: EmbeddingSpec, tp: int = 1) -> EmbeddingLibrary:
    """Embed a single series; the spec must name exactly that series."""
    if len(spec.columns) != 1 or spec.columns[0][0] != series.name:
        raise ValueError(
            f"delay_embed needs a univariate spec for {series.name!r}, got {spec.columns}"
        )
    return multivariate_embed(Dataset((series,)), spec, series.name, tp)


def state_vector(data: Dataset, spec: EmbeddingSpec, time_index: int,
                 norms: tuple[tuple[str, float, float], ...] | None = None) -> np.ndarray:
    """The delay vector at a single time, for use as a query point."""
    if norms is None:
        norms = _resolve_norms(data, spec)
    if time_index - spec.max_offset < data.start_year or time_index > data.end_year:
        raise EmbeddingError(
            f"cannot form a state vector at {time_index}: needs data on "
            f"{time_index - spec.max_offset}..{time_index}, have "
            f"{data.start_year}..{data.end_year}"
        )
    idx = time_index - data.start_year
    out = np.empty(spec.dimension, dtype=float)
    col = 0
    for name, lags in spec.columns:
        values = _transform(data[name].to_array(), name, norms)
        for j in range(lags):
            out[col] = values[idx - j * spec.tau]
            col += 1
    return out


def _distances(vectors: np.ndarray, query: np.ndarray, metric: str) -> np.ndarray:
    diffs = vectors - query
    if metric == "euclidean":
        return np.sqrt(np.einsum("ij,ij->i", diffs, diffs))
    if metric == "manhattan":
        return np.abs(diffs).sum(axis=1)
    raise ValueError(f"unknown metric {metric!r}; use 'euclidean' or 'manhattan'")


def admissible_mask(times: np.ndarray, query_time: int, radius: int) -> np.ndarray:
    """Candidacy mask under the exclusion window (radius 0 admits everything)."""
    if radius <= 0:
        return np.ones(times.shape[0], dtype=bool)
    return np.abs(times - query_time) > radius


def knn(library: EmbeddingLibrary, query: tuple[int, Sequence[float]], k: int,
        metric: str = "euclidean", exclusion_radius: int | None = None) -> NeighborSet:
    """The k nearest library points to a query, after temporal exclusion.

    Parameters
    ----------
    query : (time_index, vector)
        The query's own time index drives the exclusion window.
    exclusion_radius : optional override of the library spec's radius
        (library subsampling schemes need radius 0 regardless of the spec).

    Raises NeighborShortfallError, naming the shortfall, when fewer than
    ``k`` admissible candidates remain.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    query_time, query_vector = query
    query_vector = np.asarray(query_vector, dtype=float)
    radius = library.spec.radius if exclusion_radius is None else int(exclusion_radius)
    dists = _distances(library.vectors, query_vector, metric)
    keep = admissible_mask(library.times, query_time, radius)
    candidates = np.nonzero(keep)[0]
    if candidates.shape[0] < k:
        raise NeighborShortfallError(
            f"need k={k} neighbours but only {candidates.shape[0]} admissible "
            f"points remain (library size {len(library)}, exclusion radius {radius})"
        )
    order = np.lexsort((library.times[candidates], dists[candidates]))
    chosen = candidates[order[:k]]
    return NeighborSet(indices=chosen, distances=dists[chosen])
