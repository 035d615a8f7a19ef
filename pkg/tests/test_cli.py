import csv
import json

import pytest

from antbif.cli import DESK_PRESETS, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, build_parser, main, parse_chi
from antbif.fields import read_snapshot
from antbif.model import ValidationError


def run(tmp_path, *argv):
    return main([*argv, "--out-dir", str(tmp_path), "--quiet"])


def manifest(tmp_path, command):
    return json.loads((tmp_path / f"{command}_manifest.json").read_text())


def test_parse_chi():
    assert parse_chi("1.05x", 10.0) == pytest.approx(10.5)
    assert parse_chi("12.5", 10.0) == 12.5
    assert parse_chi(None, 10.0, 10.0) == 10.0
    for bad in ("abc", "1.0y", "x"):
        with pytest.raises(ValidationError):
            parse_chi(bad, 10.0)
    with pytest.raises(ValidationError):
        parse_chi(None, 10.0)


def test_parser_lists_commands():
    text = build_parser().format_help()
    for cmd in ("coeffs", "spectrum", "dispersion", "evolve", "bifdiag", "verify"):
        assert cmd in text


def test_coeffs_writes_report_and_manifest(tmp_path):
    assert run(tmp_path, "coeffs", "--sigma-k", "0.05", "--tau", "10") == EXIT_OK
    rep = json.loads((tmp_path / "coeffs_k1.json").read_text())
    assert rep["lane_criticality"] == "subcritical" and rep["spot_criticality"] == "subcritical"
    m = manifest(tmp_path, "coeffs")
    assert m["command"] == "coeffs" and set(m["versions"]) >= {"antbif", "numpy", "scipy", "python"}
    assert m["outputs"] == [str(tmp_path / "coeffs_k1.json")]


def test_coeffs_pythagorean(tmp_path):
    assert run(tmp_path, "coeffs", "--k", "5") == EXIT_VALIDATION
    assert run(tmp_path, "coeffs", "--k", "5", "--allow-pythagorean", "--sigma-theta", "0.01") == EXIT_OK
    assert json.loads((tmp_path / "kernel_k5.json").read_text())["dimension"] == 12


def test_bad_parameters_exit_2(tmp_path, capsys):
    assert run(tmp_path, "coeffs", "--param", "sigma_x=-1") == EXIT_VALIDATION
    assert run(tmp_path, "coeffs", "--param", "nonsense") == EXIT_VALIDATION
    assert run(tmp_path, "coeffs", "--sigma-k", "0") == EXIT_VALIDATION
    assert run(tmp_path, "coeffs", "--config", str(tmp_path / "missing.cfg")) == EXIT_VALIDATION
    assert "error (coeffs)" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_config_file_and_prefix(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# desk run\nsigma_x = 0.05\ntau = 0.0\n")
    assert main(["coeffs", "--config", str(cfg), "--param", "sigma_theta=0.001", "--out-dir",
                 str(tmp_path), "--prefix", "a_", "--quiet"]) == EXIT_OK
    m = manifest(tmp_path, "a_coeffs")
    assert m["params"]["sigma_x"] == 0.05 and m["params"]["sigma_theta"] == 0.001


def test_spectrum_and_dispersion(tmp_path):
    assert run(tmp_path, "spectrum", "--chi", "1.02x", "--k-max", "2", "--n-c", "32", "--figure") == EXIT_OK
    data = json.loads((tmp_path / "spectrum.json").read_text())
    assert data["max_re"] > 0 and data["chi"] == pytest.approx(1.02 * data["chi_1"])
    assert (tmp_path / "spectrum.png").stat().st_size > 0
    assert run(tmp_path, "dispersion", "--chi", "0.98x", "--n-c", "32", "--n-roots", "5", "--scan", "0.5") == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "dispersion.csv").open()))
    assert len(rows) == 5 and float(rows[0]["mu_re"]) < 0
    assert (tmp_path / "dispersion_scan.csv").read_text().count("\n") == 102


def test_verify_passes_and_detects_mutation(tmp_path):
    grid = "sigma_k=0.2 tau=0,1"
    assert run(tmp_path, "verify", "--grid", grid) == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "verify.csv").open()))
    assert rows and all(r["passed"] == "true" for r in rows)
    assert run(tmp_path, "verify", "--grid", grid, "--mutate", "pairing") == EXIT_NUMERICAL
    assert manifest(tmp_path, "verify")["failed"] == ["pairing[sigma_k=0.2,tau_k=0]", "pairing[sigma_k=0.2,tau_k=1]"]
    assert run(tmp_path, "verify", "--grid", "sigma_k=-1") == EXIT_VALIDATION


def test_evolve_uniform_below_threshold(tmp_path):
    assert run(tmp_path, "evolve", "--init", "uniform", "--chi", "0.9x", "--grid", "8,32") == EXIT_OK
    f = read_snapshot(tmp_path / "final.bin")
    assert f.shape == (8, 8, 32)
    summary = manifest(tmp_path, "evolve")["summary"]
    assert summary["converged"] and summary["mass"] == pytest.approx(1.0)
    assert (tmp_path / "diagnostics.csv").read_text().startswith("t,residual")


def test_evolve_reports_non_convergence(tmp_path):
    code = run(tmp_path, "evolve", "--init", "lane", "--chi", "1.05x", "--grid", "8,32", "--t-max", "0.1",
               "--no-newton", "--tol", "1e-14")
    assert code == EXIT_NUMERICAL
    assert not manifest(tmp_path, "evolve")["summary"]["converged"]


def test_evolve_file_seed_needs_path(tmp_path):
    assert run(tmp_path, "evolve", "--init", "file", "--chi", "1.0x", "--grid", "8,32") == EXIT_VALIDATION
    assert run(tmp_path, "evolve", "--init", "uniform", "--chi", "1x", "--grid", "8") == EXIT_VALIDATION


def test_bifdiag_uniform_branch(tmp_path):
    assert run(tmp_path, "bifdiag", "--branch", "uniform", "--grid", "16,32", "--steps", "5",
               "--chi-start", "0.9x", "--chi-end", "1.1x", "--figure") == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "bifdiag_uniform.csv").open()))
    assert [r["stable"] for r in rows][:2] == ["true", "true"] and rows[-1]["stable"] == "false"
    m = manifest(tmp_path, "bifdiag")
    assert m["params"]["sigma_x"] == float(DESK_PRESETS["uniform"]["sigma_x"])
    assert m["diagrams"][0]["chi_fold"] is None
    assert (tmp_path / "bifdiag.png").exists()


@pytest.mark.slow
def test_bifdiag_lane_is_reproducible(tmp_path):
    args = ("bifdiag", "--branch", "lane", "--grid", "16,32", "--steps", "3", "--chi-start", "1.04x",
            "--chi-end", "1.0x", "--no-eigs", "--no-uniform")
    assert run(tmp_path / "a", *args) == EXIT_OK
    assert run(tmp_path / "b", *args) == EXIT_OK
    a = (tmp_path / "a" / "bifdiag_lane.csv").read_text()
    assert a == (tmp_path / "b" / "bifdiag_lane.csv").read_text()
    labels = [r["branch_label"] for r in csv.DictReader(a.splitlines())]
    assert labels[0] == "lane"
