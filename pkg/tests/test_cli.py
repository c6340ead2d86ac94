import json
import math

import numpy as np
import pytest

from edmkit.cli import main


@pytest.fixture()
def data_csv(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "toy.csv"
    years = range(1960, 2023)
    debris, total, launched = [], [], []
    x, i = 100.0, 50.0
    for n, year in enumerate(years):
        x += 120.0 + 40.0 * math.sin(2.0 * math.pi * n / 9.0) + 4.0 * rng.normal()
        i += 30.0 + 2.0 * rng.normal()
        debris.append(round(x))
        total.append(round(x + i))
        launched.append(round(80.0 + 10.0 * math.sin(n / 3.0) + n))
    lines = ["year,debris,launched,total"]
    for year, d, l, t in zip(years, debris, launched, total):
        lines.append(f"{year},{d},{l},{t}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_version_exits_zero(capsys):
    assert main(["version"]) == 0
    assert "edmkit" in capsys.readouterr().out


def test_help_exits_zero():
    for sub in ("embed-search", "forecast", "ccm", "simulate"):
        with pytest.raises(SystemExit) as excinfo:
            main([sub, "--help"])
        assert excinfo.value.code == 0


def test_unknown_flag_exits_two():
    with pytest.raises(SystemExit) as excinfo:
        main(["embed-search", "--bogus"])
    assert excinfo.value.code == 2


def test_missing_file_exits_two(tmp_path, capsys):
    out = tmp_path / "t.csv"
    code = main(["embed-search", "--data", str(tmp_path / "nope.csv"),
                 "--out", str(out)])
    assert code == 2
    assert "nope.csv" in capsys.readouterr().err


def test_embed_search_outputs(data_csv, tmp_path):
    out = tmp_path / "table.csv"
    code = main(["embed-search", "--data", str(data_csv), "--target", "debris",
                 "--e", "1:6", "--train-end", "1990", "--out", str(out)])
    assert code == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "E,rho,rmse"
    assert len(lines) == 7
    summary = json.loads(out.with_suffix(".summary.json").read_text(encoding="utf-8"))
    assert 1 <= summary["best_E"] <= 6
    manifest = json.loads(out.with_suffix(".manifest.json").read_text(encoding="utf-8"))
    assert manifest["command"] == "embed-search"
    assert str(data_csv) in manifest["inputs"]
    assert len(manifest["inputs"][str(data_csv)]) == 64


def test_embed_search_singleton_range(data_csv, tmp_path):
    out = tmp_path / "one.csv"
    assert main(["embed-search", "--data", str(data_csv), "--e", "3:3",
                 "--out", str(out)]) == 0
    assert len(out.read_text(encoding="utf-8").splitlines()) == 2


def test_forecast_simplex_and_smap(data_csv, tmp_path):
    for method, extra in (("simplex", []), ("smap", ["--theta", "2"])):
        out = tmp_path / f"fc_{method}.csv"
        code = main(["forecast", "--method", method, "--data", str(data_csv),
                     "--columns", "debris,total", "--e", "4", "--to", "2035",
                     "--out", str(out), *extra])
        assert code == 0
        lines = out.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "year,predicted,observed,band_lo,band_hi"
        years = [int(line.split(",")[0]) for line in lines[1:]]
        assert years[0] == 1991 and years[-1] == 2035
        assert out.with_suffix(".json").exists()
    assert (tmp_path / "fc_smap_coefficients.csv").exists()


def test_forecast_horizon_inside_data(data_csv, tmp_path):
    out = tmp_path / "insample.csv"
    code = main(["forecast", "--method", "simplex", "--data", str(data_csv),
                 "--columns", "debris", "--e", "3", "--to", "2020",
                 "--out", str(out)])
    assert code == 0
    years = [int(line.split(",")[0])
             for line in out.read_text(encoding="utf-8").splitlines()[1:]]
    assert years[-1] == 2020  # no extrapolation rows


def test_forecast_smap_requires_theta(data_csv, tmp_path, capsys):
    code = main(["forecast", "--method", "smap", "--data", str(data_csv),
                 "--columns", "debris", "--e", "3", "--to", "2030",
                 "--out", str(tmp_path / "x.csv")])
    assert code == 2
    assert "theta" in capsys.readouterr().err


def test_forecast_svg(data_csv, tmp_path):
    out = tmp_path / "fc.csv"
    svg = tmp_path / "fc.svg"
    code = main(["forecast", "--method", "simplex", "--data", str(data_csv),
                 "--columns", "debris", "--e", "3", "--to", "2030",
                 "--out", str(out), "--svg", str(svg)])
    assert code == 0
    assert svg.read_text(encoding="utf-8").startswith("<svg")


def test_ccm_outputs_and_determinism(data_csv, tmp_path):
    out_a = tmp_path / "ccm_a"
    out_b = tmp_path / "ccm_b"
    argv = ["ccm", "--data", str(data_csv), "--a", "debris", "--b", "total",
            "--e", "3", "--samples", "5", "--seed", "7",
            "--sizes", "10,25,45"]
    assert main([*argv, "--out", str(out_a)]) == 0
    assert main([*argv, "--out", str(out_b), "--threads", "8"]) == 0
    csv_a = (tmp_path / "ccm_a.csv").read_bytes()
    csv_b = (tmp_path / "ccm_b.csv").read_bytes()
    assert csv_a == csv_b
    summary = json.loads((tmp_path / "ccm_a.summary.json").read_text(encoding="utf-8"))
    assert len(summary["directions"]) == 2
    assert not summary["insufficient_grid"]


def test_ccm_singleton_grid_flagged(data_csv, tmp_path):
    out = tmp_path / "ccm_one"
    assert main(["ccm", "--data", str(data_csv), "--a", "debris", "--b", "total",
                 "--e", "3", "--samples", "3", "--sizes", "40",
                 "--out", str(out)]) == 0
    summary = json.loads((tmp_path / "ccm_one.summary.json").read_text(encoding="utf-8"))
    assert summary["insufficient_grid"]


def test_simulate_with_config(data_csv, tmp_path):
    cfg = tmp_path / "mini.cfg"
    cfg.write_text(
        "theta = 2\nlags = 2\nridge = 10000\nhorizon = 2035\n"
        "[adr_small]\nkind = adr\nadr_per_year = 100\n"
        "[late_start]\nkind = adr\nadr_per_year = 500\neffective_year = 2030\n",
        encoding="utf-8",
    )
    outdir = tmp_path / "reports"
    code = main(["simulate", "--data", str(data_csv), "--scenarios", str(cfg),
                 "--outdir", str(outdir)])
    assert code == 0
    report = (outdir / "mitigation_report.csv").read_text(encoding="utf-8").splitlines()
    assert report[0] == "scenario,kind,debris_2050,margin_of_error,pct_mitigated"
    assert len(report) == 3
    rows = {line.split(",")[0]: line.split(",") for line in report[1:]}
    # a policy starting after the record equals the baseline exactly
    assert float(rows["late_start"][4]) == 0.0
    assert (outdir / "trajectory_adr_small.csv").exists()
    assert (outdir / "mitigation_report.manifest.json").exists()


def test_simulate_malformed_config_exits_two(data_csv, tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[s]\nkind = adr\nadr_per_year = 100\nwarp = 9\n", encoding="utf-8")
    code = main(["simulate", "--data", str(data_csv), "--scenarios", str(cfg),
                 "--outdir", str(tmp_path / "r")])
    assert code == 2
    assert "line 4" in capsys.readouterr().err


def test_cli_byte_identical_reruns(data_csv, tmp_path):
    argv_sets = [
        ["embed-search", "--data", str(data_csv), "--e", "1:4", "--out", None],
        ["forecast", "--method", "smap", "--theta", "2", "--data", str(data_csv),
         "--columns", "debris,total", "--e", "4", "--to", "2030", "--out", None],
    ]
    for argv in argv_sets:
        paths = []
        for tag in ("one", "two"):
            out = tmp_path / f"{argv[0]}_{tag}.csv"
            full = [a if a is not None else str(out) for a in argv]
            threads = ["--threads", "8"] if tag == "two" else []
            assert main([*full, *threads]) == 0
            paths.append(out)
        assert paths[0].read_bytes() == paths[1].read_bytes()
