import json
import os
import subprocess
import sys

import numpy as np
import pytest

from latentfoil.cli import EXIT_ERROR, EXIT_OK, EXIT_UNCONVERGED, RunConfig, main
from latentfoil.framework import HEATMAP_COLUMNS
from latentfoil.geometry import ParsecParams, read_selig
from latentfoil.sampling import Dataset

TINY = {"vae_first": {"epochs": 100, "step_epochs": 50},
        "vae_transfer": {"epochs": 30, "step_epochs": 15},
        "mlp_first": {"epochs": 100, "step_epochs": 50},
        "mlp_transfer": {"epochs": 30, "step_epochs": 15}}


def write_config(tmp_path, **kw):
    cfg = {"solver": "analytic", "doe_size": 30, "training": TINY,
           "ea": {"population": 20, "generations": 8}, "output_dir": str(tmp_path / "out"),
           "max_iterations": 1, **kw}
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Output directory holding a DoE dataset and trained models."""
    tmp = tmp_path_factory.mktemp("cli")
    cfg = write_config(tmp)
    assert main(["doe", "--config", cfg]) == EXIT_OK
    assert main(["train", "--config", cfg]) == EXIT_OK
    return tmp, cfg


def test_doe_writes_requested_rows(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["doe", "--config", cfg, "--n", "10", "--seed", "3"]) == EXIT_OK
    ds = Dataset.load(tmp_path / "out" / "dataset.csv")
    assert len(ds) == 10 and ds.count("train") == 8
    assert (tmp_path / "out" / "dataset.csv.meta.json").exists()


def test_default_doe_size():
    assert RunConfig().doe_size == 500 and RunConfig().split_ratio == 0.8


def test_doe_is_idempotent(tmp_path):
    cfg = write_config(tmp_path)
    main(["doe", "--config", cfg, "--n", "12"])
    first = {p.name: p.read_bytes() for p in (tmp_path / "out").iterdir()}
    main(["doe", "--config", cfg, "--n", "12"])
    again = {p.name: p.read_bytes() for p in (tmp_path / "out").iterdir()}
    assert first == again


def test_invalid_bounds_exit_1_without_files(tmp_path, capsys):
    cfg = write_config(tmp_path, space={"lower": [0.05, 0.3, 0.09, 0.3, -0.15, -0.02]})
    assert main(["doe", "--config", cfg]) == EXIT_ERROR
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


@pytest.mark.parametrize("extra", [{"bogus": 1}, {"mode": "triple"}, {"training": {"x": {}}},
                                   {"conditions": {"mach": 1.5}}, {"split_ratio": 2.0}])
def test_bad_config_exit_1(tmp_path, extra):
    assert main(["doe", "--config", write_config(tmp_path, **extra)]) == EXIT_ERROR


def test_missing_config_file_exit_1(tmp_path):
    assert main(["doe", "--config", str(tmp_path / "nope.json")]) == EXIT_ERROR


def test_config_round_trip():
    cfg = RunConfig.from_dict({"solver": "analytic", "training": TINY, "max_iterations": 7})
    again = RunConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    assert again.mlp_first.epochs == 100 and again.vae_first.gamma == 0.5


def test_flag_overrides(tmp_path):
    from latentfoil.cli import build_parser, load_config
    args = build_parser().parse_args(["run", "--config", write_config(tmp_path), "--seed", "9",
                                      "--workers", "2", "--solver", "builtin"])
    cfg = load_config(args)
    assert (cfg.seed, cfg.workers, cfg.solver) == (9, 2, "builtin")


def test_missing_dataset_exit_1(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["run", "--config", cfg]) == EXIT_ERROR
    assert main(["train", "--config", cfg]) == EXIT_ERROR


def test_cap_zero_exit_2(workdir):
    tmp, cfg = workdir
    assert main(["run", "--config", cfg, "--max-iterations", "0"]) == EXIT_UNCONVERGED


def test_run_unconverged_writes_ledger(workdir):
    tmp, _ = workdir
    cfg = write_config(tmp, threshold_pct=1e-9, max_iterations=2)
    assert main(["run", "--config", cfg]) == EXIT_UNCONVERGED
    run = tmp / "out" / "run"
    for name in ("run_report.json", "ledger.csv", "summary.csv", "summary.txt",
                 "dataset_final.csv", "models/vae.json"):
        assert (run / name).exists()
    assert len((run / "ledger.csv").read_text().splitlines()) == 3
    report = json.loads((run / "run_report.json").read_text())
    assert report["converged"] is False and len(report["iterations"]) == 2


def test_run_converged_exit_0(workdir):
    tmp, _ = workdir
    cfg = write_config(tmp, threshold_pct=1e9)
    assert main(["run", "--config", cfg]) == EXIT_OK


@pytest.mark.parametrize("resolution,rows", [(50, 2500), (1, 1), (2, 4)])
def test_heatmap_rows(workdir, resolution, rows):
    tmp, cfg = workdir
    assert main(["heatmap", "--config", cfg, "--resolution", str(resolution)]) == EXIT_OK
    lines = (tmp / "out" / "heatmap.csv").read_text().splitlines()
    assert lines[0] == ",".join(HEATMAP_COLUMNS) and len(lines) == rows + 1


def test_heatmap_svg_flag(workdir):
    tmp, cfg = workdir
    assert main(["heatmap", "--config", cfg, "--resolution", "4", "--svg"]) == EXIT_OK
    for col in ("l_over_d", "area"):
        assert (tmp / "out" / f"heatmap_{col}.svg").read_text().startswith("<svg")


def test_heatmap_errors(tmp_path, workdir):
    assert main(["heatmap", "--config", write_config(tmp_path)]) == EXIT_ERROR
    _, cfg = workdir
    assert main(["heatmap", "--config", cfg, "--resolution", "0"]) == EXIT_ERROR


def test_validate_writes_report(workdir):
    tmp, cfg = workdir
    assert main(["validate", "--config", cfg]) == EXIT_OK
    lines = (tmp / "out" / "validation.csv").read_text().splitlines()
    assert len(lines) == 6
    assert main(["validate", "--config", cfg, "--z", "0.1", "0.2"]) == EXIT_OK


def test_export_airfoil(tmp_path, workdir):
    path = tmp_path / "base.dat"
    assert main(["export-airfoil", "--path", str(path)]) == EXIT_OK
    name, x, z = read_selig(path)
    assert len(x) == 199 and name.startswith("latentfoil")
    p = ParsecParams.baseline().free_vector()
    assert main(["export-airfoil", "--path", str(tmp_path / "p.dat"), "--params",
                 *map(str, p)]) == EXIT_OK
    assert (tmp_path / "p.dat").read_text().splitlines()[1:] == path.read_text().splitlines()[1:]
    _, cfg = workdir
    assert main(["export-airfoil", "--config", cfg, "--z", "0", "0",
                 "--path", str(tmp_path / "z.dat")]) == EXIT_OK
    assert main(["export-airfoil", "--params", "-0.01", "0.4", "0.1", "0.3", "-0.1", "0",
                 "--path", str(tmp_path / "bad.dat")]) == EXIT_ERROR


def test_xfoil_without_executable_exit_1(tmp_path, monkeypatch):
    monkeypatch.setenv("LATENTFOIL_XFOIL", str(tmp_path / "missing-xfoil"))
    monkeypatch.setenv("PATH", "")
    cfg = write_config(tmp_path, solver="xfoil")
    assert main(["doe", "--config", cfg, "--n", "5"]) == EXIT_ERROR


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "latentfoil.cli", "--help"], capture_output=True,
                         text=True, env={**os.environ})
    assert out.returncode == 0
    for cmd in ("doe", "train", "run", "validate", "heatmap", "export-airfoil"):
        assert cmd in out.stdout


def test_results_are_finite(workdir):
    tmp, cfg = workdir
    main(["heatmap", "--config", cfg, "--resolution", "3"])
    data = np.loadtxt(tmp / "out" / "heatmap.csv", delimiter=",", skiprows=1)
    assert data.shape == (9, 12) and np.all(np.isfinite(data))
