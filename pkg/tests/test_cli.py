import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from photonsub.cli import (
    RunConfig,
    UsageError,
    cmd_info,
    cmd_reconstruct,
    cmd_simulate,
    cmd_stats,
    cmd_sweep_M,
    cmd_sweep_R,
    cmd_work,
    load_config_file,
    main,
)
from photonsub.channels import ExperimentConfig, herald
from photonsub.fockdist import subtracted_thermal_pmf, thermal_pmf
from photonsub.mc import ClickHistogram
from photonsub.tables import ResultTable, config_hash
from photonsub.thermo import available_work, max_mutual_information_z, moments
from photonsub.tomo import forward_matrix


def _read_csv(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def test_stats_ideal_table():
    t = cmd_stats(RunConfig())
    assert t.column("m") == [0, 1, 2, 3]
    for m, mean, g2, fano in zip(t.column("m"), t.column("mean"), t.column("g2"), t.column("fano")):
        assert abs(mean - 2 * (m + 1)) < 1e-9
        assert abs(g2 - (1 + 1 / (1 + m))) < 1e-9
        assert abs(fano - 3) < 1e-9


def test_stats_full_model_small_tap():
    ideal = cmd_stats(RunConfig())
    full = cmd_stats(RunConfig(model="full", reflectivity=1e-4, eta=1.0))
    for col in ("mean", "g2", "fano"):
        assert np.allclose(full.column(col), ideal.column(col), rtol=1e-3, atol=0)


def test_stats_empty_grid():
    with pytest.raises(UsageError):
        cmd_stats(RunConfig(m=[]))


def test_work_table():
    t = cmd_work(RunConfig())
    assert all(abs(v - math.log(3)) < 1e-15 for v in t.column("cooling_benchmark"))
    assert t.column("work")[0] == pytest.approx(0, abs=1e-15)
    assert t.column("above_cooling")[0] is False and t.column("above_heated")[0] is False
    assert t.column("above_cooling")[3] is True and t.column("above_heated")[3] is True


def test_info_table():
    t = cmd_info(RunConfig())
    caps = t.column("capacity")
    assert caps[3] > 0.9
    assert abs(caps[0] - t.column("thermal_threshold")[0]) < 1e-12
    assert caps[0] == pytest.approx(0.46976, abs=1e-4)
    for m, pe in zip(t.column("m"), t.column("p_error")):
        assert pe == pytest.approx(3.0 ** -(m + 1), rel=1e-14)


def test_sweep_r():
    t = cmd_sweep_R(RunConfig(m=[3], eta=1.0, r_grid=[1e-5] + list(np.linspace(0.001, 0.5, 50))))
    assert t.summary["work_monotone_non_increasing"] is True
    assert t.summary["capacity_monotone_non_increasing"] is True
    assert abs(t.column("work")[0] - t.summary["ideal_work_kBT"]) < 1e-3
    assert abs(t.column("capacity")[0] - t.summary["ideal_capacity_bits"]) < 1e-3


def test_sweep_r_at_exact_tap():
    t = cmd_sweep_R(RunConfig(m=[3], r_grid=[0.05]))
    assert t.column("above_tightest_benchmark") == [True]


def test_sweep_m():
    t = cmd_sweep_M(RunConfig(m=[1], modes=[1, 2, 4, 8, 16, 32, 64]))
    assert t.summary["work_per_mode_strictly_decreasing"] is True
    assert t.summary["info_per_mode_strictly_decreasing"] is True
    assert t.summary["entropy_increases_every_M"] is True
    assert t.summary["work_per_mode_last_over_first"] < 0.01
    single = subtracted_thermal_pmf(2, 1)
    assert abs(t.column("work")[0] - available_work(single, 2)) < 1e-12
    assert abs(t.column("info")[0] - max_mutual_information_z(1 / 9)) < 1e-12


def test_parallel_sweep_preserves_order():
    grid = [0.3, 0.01, 0.1]
    serial = cmd_sweep_R(RunConfig(m=[2], r_grid=grid))
    parallel = cmd_sweep_R(RunConfig(m=[2], r_grid=grid, jobs=2))
    assert serial.rows == parallel.rows
    assert serial.column("R") == sorted(grid)


def test_simulate_heralding_rate():
    t, hist = cmd_simulate(RunConfig(m=[1], eta=1.0, shots=1_000_000))
    rate, se = t.column("heralding_rate")[0], t.column("heralding_rate_stderr")[0]
    exact = herald(ExperimentConfig(n_th=2, R=0.05, m_subtract=1)).success_probability
    assert abs(rate - exact) < 3 * se
    assert hist.heralded_shots == t.column("heralded_shots")[0]


def test_simulate_files_are_byte_identical(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["simulate", "--shots", "50000", "--seed", "7", "--out", str(out)]) == 0
        outs.append(out)
    for fname in ("simulate_summary.csv", "histogram.csv"):
        assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()


def test_simulate_zero_shots(tmp_path, capsys):
    assert main(["simulate", "--shots", "0", "--out", str(tmp_path)]) == 2


def test_reconstruct_exact_histogram():
    model = forward_matrix(8, 0.6, 128)
    counts = np.round(model.predict(thermal_pmf(2)) * 1e9).astype(np.int64)
    hist = ClickHistogram(counts, int(counts.sum()), int(counts.sum()))
    t, dist, res = cmd_reconstruct(RunConfig(eta_pnrd=0.6), hist)
    assert res.converged and t.summary["converged"] is True
    assert t.summary["iterations"] == res.iterations > 0
    assert abs(t.column("mean")[0] - 2) < 1e-3
    assert len(dist.rows) == 129


def test_reconstruct_rejects_impossible_bin(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("j[clicks],count[events]\n0,10\n9,3\n")
    assert main(["reconstruct", str(path), "--out", str(tmp_path)]) == 2


def test_reconstruct_missing_file(tmp_path):
    assert main(["reconstruct", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 2


def test_simulate_then_reconstruct(tmp_path):
    out = tmp_path / "run"
    argv = ["--m", "0", "--reflectivity", "0", "--eta-pnrd", "0.6", "--shots", "400000",
            "--max-iters", "1000000", "--out", str(out)]
    assert main(["simulate", *argv, "--format", "json"]) == 0
    assert main(["reconstruct", str(out / "histogram.json"), *argv, "--format", "json"]) == 0
    doc = json.loads((out / "reconstruct_moments.json").read_text())
    mean = doc["rows"][0][doc["columns"].index("mean[photons]")]
    assert abs(mean - 2) < 0.05
    assert doc["summary"]["converged"] is True


def test_non_convergence_exit_code(tmp_path):
    out = tmp_path / "run"
    argv = ["--m", "0", "--reflectivity", "0", "--eta-pnrd", "0.6", "--shots", "10000", "--out", str(out)]
    assert main(["simulate", *argv]) == 0
    assert main(["reconstruct", str(out / "histogram.csv"), *argv, "--max-iters", "5"]) == 3
    assert (out / "reconstruct_moments.csv").exists()


def test_numerical_failure_exit_code(tmp_path):
    # no light is tapped, so the herald can never fire
    rc = main(["work", "--model", "full", "--reflectivity", "0", "--m", "1", "--out", str(tmp_path)])
    assert rc == 3


def test_usage_exit_codes(tmp_path):
    assert main(["stats", "--eta", "0", "--out", str(tmp_path)]) == 2
    assert main(["stats", "--n-th", "-1", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["stats", "--model", "other"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 2


def test_units_and_provenance(tmp_path):
    assert main(["work", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "work.csv").read_text()
    assert "# config_hash: " in text and "# version: " in text
    header = [ln for ln in text.splitlines() if not ln.startswith("#")][0]
    assert all("[" in cell and cell.endswith("]") for cell in header.split(","))
    assert "work[kBT]" in header
    assert main(["info", "--format", "json", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "info.json").read_text())
    assert "capacity[bits]" in doc["columns"]
    assert doc["provenance"]["config_hash"] == config_hash(doc["provenance"]["config"])


def test_table_output_is_deterministic(tmp_path):
    for d in ("x", "y"):
        assert main(["sweep-m", "--out", str(tmp_path / d), "--format", "json"]) == 0
    assert (tmp_path / "x" / "sweep_m.json").read_bytes() == (tmp_path / "y" / "sweep_m.json").read_bytes()


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('n_th = 1.0\nm = [0, 2]\nmodel = "ideal"\n')
    assert main(["stats", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = _read_csv(tmp_path / "stats.csv")
    assert [float(r["mean[photons]"]) for r in rows] == pytest.approx([1.0, 3.0])
    assert main(["stats", "--config", str(cfg), "--n-th", "2", "--out", str(tmp_path)]) == 0
    rows = _read_csv(tmp_path / "stats.csv")
    assert [float(r["mean[photons]"]) for r in rows] == pytest.approx([2.0, 6.0])


def test_config_file_unknown_key(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("n_thermal = 2\n")
    with pytest.raises(UsageError):
        load_config_file(cfg)
    assert main(["stats", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_grid_syntax(tmp_path):
    assert main(["sweep-r", "--r-grid", "0.01:0.1:4", "--out", str(tmp_path)]) == 0
    rows = _read_csv(tmp_path / "sweep_r.csv")
    assert [float(r["R[1]"]) for r in rows] == pytest.approx([0.01, 0.04, 0.07, 0.1])


def test_figures(tmp_path):
    assert main(["figures", "--out", str(tmp_path)]) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    expected = [f"{kind}_{model}.csv" for kind in ("info", "stats", "work") for model in ("full", "ideal")]
    assert names == sorted(expected + ["sweep_m.csv", "sweep_r.csv"])


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "photonsub", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for name in ("stats", "work", "info", "sweep-r", "sweep-m", "simulate", "reconstruct", "figures"):
        assert name in res.stdout


def test_table_requires_units():
    with pytest.raises(ValueError):
        ResultTable([("x", "")])


def test_moments_match_table():
    t = cmd_stats(RunConfig(m=[2]))
    assert t.column("mdr")[0] == pytest.approx(moments(subtracted_thermal_pmf(2, 2)).mdr, abs=1e-15)
