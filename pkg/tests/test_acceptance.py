"""Acceptance suite: one test per criterion, each printing its verdict.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
pass/fail lines.  The paper-number reproductions run against the bundled
yearly dataset; the property and oracle suites are data independent.
"""

import math
import subprocess
import sys
import time

import numpy as np
import pytest

from edmkit.bundled import bundled_path, load_bundled
from edmkit.ccm import CcmConfig, convergence_sweep, cross_map
from edmkit.embedding import EmbeddingLibrary, EmbeddingSpec, knn
from edmkit.scenario import load_scenario_file, run_scenarios
from edmkit.simplex import (
    SimplexConfig,
    embed_dimension_search,
    simplex_predict,
    simplex_weights,
    skill_eval,
)
from edmkit.smap import SMapConfig, smap_predict, smap_weights, theta_search
from edmkit.timeseries import skill_defined

from helpers import (
    coupled_logistic_pair,
    logistic_series,
    oracle_knn,
    oracle_simplex,
    oracle_wls,
)

TWO_INPUT = EmbeddingSpec((("debris", 2), ("total", 2)))


def report(name: str, ok: bool, detail: str = "") -> bool:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f"  ({detail})" if detail else ""))
    return ok


@pytest.fixture(scope="module")
def data():
    return load_bundled()


@pytest.fixture(scope="module")
def table2():
    config, scenarios = load_scenario_file(bundled_path("scenarios/table2.cfg"))
    return config, scenarios


# ---------------------------------------------------------------------------
# criterion 1: paper-number reproduction on the bundled dataset

def test_dimension_search_criterion(data):
    start = time.perf_counter()
    result = embed_dimension_search(data, "debris", range(1, 11), train_end=1990)
    elapsed = time.perf_counter() - start
    rho4 = dict((e, r) for e, r, _ in result.rows)[4]
    ok = (result.best_dimension == 4
          and abs(rho4 - 0.966) <= 0.03
          and elapsed < 1.0)
    assert report("1a embed-dimension search: E*=4, rho(4)=0.966 +/- 0.03, <1s",
                  ok, f"E*={result.best_dimension} rho4={rho4:.4f} t={elapsed:.2f}s")


def test_theta_search_criterion(data):
    start = time.perf_counter()
    result = theta_search(data, "debris", TWO_INPUT, train_end=1990)
    elapsed = time.perf_counter() - start
    ok = (result.best_theta == 7.0
          and abs(result.best_rho - 0.971) <= 0.03
          and elapsed < 5.0)
    assert report("1b theta search: theta*=7, rho=0.971 +/- 0.03, <5s",
                  ok, f"theta*={result.best_theta:g} rho={result.best_rho:.4f} "
                      f"t={elapsed:.2f}s")


def test_baseline_2050_criterion(data, table2):
    config, scenarios = table2
    reports = run_scenarios(data, [s for s in scenarios if s.name == "pmd_25yr"], config)
    value = reports[0].debris_2050
    ok = abs(value - 31758) <= 0.15 * 31758 and value > 30000 * 0.85
    assert report("1c baseline S-map debris forecast for 2050 within 15% of 31758",
                  ok, f"2050={value:.0f}")


def test_ccm_criterion(data):
    start = time.perf_counter()
    n = data.n_years - 3
    sizes = tuple(sorted({int(round(v)) for v in np.linspace(6, n, 20)}))
    sweeps = {}
    for a, b, tag in (("debris", "total", "XZ"), ("debris", "launched", "XY"),
                      ("launched", "total", "YZ")):
        sweeps[tag] = convergence_sweep(
            data[a], data[b], CcmConfig(4, sizes, samples_per_size=20, seed=7))
    elapsed = time.perf_counter() - start
    xz = sweeps["XZ"]
    xz_floor = min(d.final_mean_rho for d in xz.directions)
    other_top = max(d.final_mean_rho
                    for tag in ("XY", "YZ") for d in sweeps[tag].directions)
    verdicts = tuple(d.verdict for d in xz.directions)
    ok = (xz_floor > other_top
          and verdicts == ("convergent-positive", "convergent-positive")
          and elapsed < 30.0)
    assert report("1d CCM: X:Z strongest pairing, convergent both ways, <30s",
                  ok, f"XZ>={xz_floor:.3f} others<={other_top:.3f} "
                      f"verdicts={verdicts} t={elapsed:.1f}s")


def test_table2_criterion(data, table2):
    config, scenarios = table2
    reports = {r.scenario.name: r for r in run_scenarios(data, scenarios, config)}
    pmd = {p: reports[f"pmd_{p}yr"].pct_mitigated for p in (25, 15, 10, 5, 0)}
    targets = {0: 83.82, 10: 51.14, 5: 43.26, 15: 29.90, 25: 0.0}
    bands = {p: abs(pmd[p] - targets[p]) <= 10.0 for p in targets}
    ordering = pmd[0] > pmd[10] > pmd[5] > pmd[15] >= pmd[25]
    lr = [reports[f"launch_minus_{f}pct"].pct_mitigated for f in (10, 20, 30, 40)]
    adr = [reports[f"adr_{r}"].pct_mitigated for r in (100, 300, 1000, 3000)]
    lr_monotone = all(b > a for a, b in zip(lr, lr[1:]))
    adr_monotone = all(b > a for a, b in zip(adr, adr[1:]))
    ok = all(bands.values()) and ordering and lr_monotone and adr_monotone
    assert report(
        "1e Table 2: PMD ordering+bands, launch/ADR mitigation monotone",
        ok,
        f"pmd={ {p: round(v, 1) for p, v in pmd.items()} } bands={bands} "
        f"order={ordering} lr={[round(v, 1) for v in lr]} "
        f"adr={[round(v, 1) for v in adr]}",
    )


# ---------------------------------------------------------------------------
# criterion 2: property and oracle suites (data independent)

def test_simplex_weight_properties():
    rng = np.random.default_rng(2024)
    ok = True
    for _ in range(1000):
        n = int(rng.integers(4, 20))
        dists = np.sort(rng.uniform(0.0, 5.0, size=n))
        k = int(rng.integers(1, n + 1))
        chosen = dists[:k]
        weights = simplex_weights(chosen)
        ok &= abs(weights.sum() - 1.0) <= 1e-12
        positive = chosen[chosen > 0]
        if positive.size and chosen[0] > 0.0:
            raw_first = math.exp(-1.0)
            ok &= abs(math.exp(-chosen[0] / chosen[0]) - raw_first) < 1e-15
    assert report("2a simplex weights: sum to 1 +/- 1e-12, nearest raw weight e^-1 "
                  "(1000 instances)", bool(ok))


def test_predictors_match_oracles():
    rng = np.random.default_rng(555)
    ok_simplex = True
    ok_smap = True
    for _ in range(100):
        n = int(rng.integers(8, 40))
        dim = int(rng.integers(1, 4))
        spec = EmbeddingSpec((("s", dim),), exclusion_radius=0)
        lib = EmbeddingLibrary(spec, "s", 0, np.arange(n),
                               rng.normal(size=(n, dim)), rng.normal(size=n))
        query = (int(rng.integers(0, n)), rng.normal(size=dim))
        k = int(rng.integers(1, 5))
        value, _ = simplex_predict(lib, query, SimplexConfig(spec, k=k))
        expected, _ = oracle_simplex(lib.vectors, lib.times, lib.targets,
                                     query[1], query[0], k, 0)
        ok_simplex &= abs(value - expected) <= 1e-10

        theta = float(rng.uniform(0.0, 9.0))
        step = smap_predict(lib, query, SMapConfig(spec, theta))
        dists = np.sqrt(((lib.vectors - query[1]) ** 2).sum(axis=1))
        weights = smap_weights(dists, theta)
        expected_smap, _ = oracle_wls(lib.vectors, lib.targets, weights, query[1])
        ok_smap &= abs(step.prediction - expected_smap) <= 1e-8
    assert report("2b simplex/S-map match independent oracles (1e-10 / 1e-8, "
                  "100 libraries)", bool(ok_simplex and ok_smap))


def test_theta_zero_is_ols_and_affine_exact():
    rng = np.random.default_rng(808)
    ok = True
    for _ in range(50):
        n = int(rng.integers(10, 40))
        dim = int(rng.integers(1, 4))
        spec = EmbeddingSpec((("s", dim),), exclusion_radius=0)
        vectors = rng.normal(size=(n, dim))
        lib = EmbeddingLibrary(spec, "s", 0, np.arange(n), vectors, rng.normal(size=n))
        query = (n + 5, rng.normal(size=dim))
        step = smap_predict(lib, query, SMapConfig(spec, 0.0))
        design = np.concatenate([np.ones((n, 1)), vectors], axis=1)
        ols, *_ = np.linalg.lstsq(design, lib.targets, rcond=None)
        ok &= np.allclose(step.coefficients, ols, atol=1e-8)

        beta = rng.normal(size=dim)
        affine = EmbeddingLibrary(spec, "s", 0, np.arange(n), vectors,
                                  1.25 + vectors @ beta)
        for theta in (0.0, 1.0, 7.0):
            fitted = smap_predict(affine, query, SMapConfig(spec, theta))
            ok &= fitted.variance <= 1e-10
    assert report("2c theta-0 S-map equals OLS (1e-8); affine data fits exactly "
                  "for theta in {0,1,7}", bool(ok))


def test_knn_exhaustive_oracle_equivalence():
    rng = np.random.default_rng(31)
    ok = True
    for n in (10, 100, 1000):
        dim = 3
        vectors = rng.normal(size=(n, dim))
        times = np.arange(n)
        spec = EmbeddingSpec((("s", dim),), exclusion_radius=0)
        lib = EmbeddingLibrary(spec, "s", 0, times, vectors, np.zeros(n))
        query_time = int(rng.integers(0, n))
        query = rng.normal(size=dim)
        for metric in ("euclidean", "manhattan"):
            for radius in (0, 4):
                expected = oracle_knn(vectors, times, query, query_time, n,
                                      metric, radius)
                step = max(1, len(expected) // 17)
                for k in range(1, len(expected) + 1, step):
                    ns = knn(lib, (query_time, query), k, metric,
                             exclusion_radius=radius)
                    ok &= ns.indices.tolist() == [i for i, _ in expected[:k]]
    assert report("2d knn equals brute force (both metrics, with/without "
                  "exclusion, n up to 1e3)", bool(ok))


def test_logistic_map_one_step_skill():
    from edmkit.timeseries import Dataset

    series = logistic_series(200)
    result = skill_eval(Dataset((series,)), "x",
                        SimplexConfig(EmbeddingSpec.univariate("x", 2)),
                        train_end=100)
    ok = result.rho > 0.99
    assert report("2e logistic map (r=3.8, 200 pts): simplex one-step rho > 0.99 "
                  "at E=2", ok, f"rho={result.rho:.4f}")


def test_ccm_benchmark_directionality_and_null():
    x, y = coupled_logistic_pair(400)
    forward = cross_map(x, y, dimension=2)
    reverse = cross_map(y, x, dimension=2)
    directional = forward > 0.8 and forward > reverse

    small = 0
    for seed in range(50):
        rng_a = np.random.default_rng(seed)
        rng_b = np.random.default_rng(10_000 + seed)
        a = logistic_series(300, x0=0.11 + 0.5 * rng_a.random(), name="a")
        b = logistic_series(300, r=3.9, x0=0.13 + 0.5 * rng_b.random(), name="b")
        rho = cross_map(a, b, dimension=3)
        small += (not skill_defined(rho)) or abs(rho) < 0.2
    ok = directional and small >= 45
    assert report("2f CCM benchmark: driver recovered (rho>0.8), independent "
                  "null |rho|<0.2 in >=90% of 50 seeds",
                  ok, f"forward={forward:.3f} reverse={reverse:.3f} null={small}/50")


def test_cli_determinism(tmp_path):
    data_path = bundled_path("leo_debris_1960_2022.csv")
    outputs = []
    for tag, threads in (("a", "1"), ("b", "8")):
        outdir = tmp_path / tag
        outdir.mkdir()
        commands = [
            [sys.executable, "-m", "edmkit.cli", "embed-search",
             "--data", str(data_path), "--e", "1:6",
             "--out", str(outdir / "table.csv"), "--threads", threads],
            [sys.executable, "-m", "edmkit.cli", "ccm",
             "--data", str(data_path), "--a", "debris", "--b", "total",
             "--e", "4", "--seed", "7", "--samples", "5", "--sizes", "10,30,55",
             "--out", str(outdir / "ccm"), "--threads", threads],
        ]
        for argv in commands:
            completed = subprocess.run(argv, capture_output=True, text=True)
            assert completed.returncode == 0, completed.stderr
        outputs.append({
            "table": (outdir / "table.csv").read_bytes(),
            "ccm": (outdir / "ccm.csv").read_bytes(),
            "summary": (outdir / "ccm.summary.json").read_bytes(),
        })
    ok = all(outputs[0][key] == outputs[1][key] for key in outputs[0])
    assert report("2g CLI outputs byte-identical across runs and --threads {1,8}",
                  ok)
