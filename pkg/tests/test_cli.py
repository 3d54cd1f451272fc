import json
import subprocess
import sys

import pytest

from slelab.cli import main, read_config_file


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_phi_json(capsys):
    code, out, _ = run(capsys, "phi", "--kappa", "3", "--grid", "0:1:0.5", "--format", "json")
    doc = json.loads(out)
    assert code == 0
    assert doc["config"]["kappa"] == 3.0 and "workers" not in doc["config"]
    rows = doc["result"]["rows"]
    assert rows[0][1] == 0.0 and rows[-1][1] == pytest.approx(1.0)


def test_phi_csv_has_config_header(capsys):
    code, out, _ = run(capsys, "phi", "--kappa", "2", "--grid", "0.1:0.9:0.4")
    lines = out.splitlines()
    assert code == 0
    assert lines[0].startswith("# slelab")
    assert any(l == "# kappa=2.0" for l in lines)
    data = [l for l in lines if not l.startswith("#")]
    assert len(data) == 4  # header + three grid points


def test_excursion(capsys):
    code, out, _ = run(capsys, "excursion", "--x2", "0.5", "--y2", "1", "--format", "json")
    assert code == 0
    assert json.loads(out)["result"]


@pytest.mark.parametrize("argv", [
    ["phi", "--kappa", "9"],
    ["phi", "--kappa", "3", "--bogus"],
    ["two-psi", "--kappa", "3", "--x", "1.5", "--n", "10"],
    ["three-psi", "--kappa", "3", "--pairs", "0,2;1,3;4,5", "--n", "10"],
    ["restriction", "--kappa", "2", "--n", "10"],
    ["two-psi", "--kappa", "3", "--x", "0.5", "--n", "10", "--workers", "0"],
    [],
])
def test_bad_configuration_exit_code(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 1
    assert "invalid configuration" in err


def test_numerical_failure_exit_code(capsys, tmp_path):
    code, _, err = run(capsys, "dist-tail", "--kappa", "3", "--n", "3", "--eps", "0.4:0.2", "--dt", "4e-3")
    # three paths cannot populate the grid
    assert code == 2 and "numerical failure" in err


def test_two_psi_deterministic_across_workers(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    base = ["two-psi", "--kappa", "2.6666666666666665", "--x", "0.5", "--n", "40", "--seed", "11"]
    assert main(base + ["--workers", "1", "--out", str(a)]) == 0
    assert main(base + ["--workers", "2", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    capsys.readouterr()


def test_seed_changes_result(tmp_path):
    outs = []
    for s in ("1", "2"):
        p = tmp_path / f"{s}.json"
        main(["two-psi", "--kappa", "3", "--x", "0.5", "--n", "30", "--seed", s, "--format", "json", "--out", str(p)])
        outs.append(json.loads(p.read_text())["result"])
    assert outs[0] != outs[1]


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nkappa = 3\ngrid = 0:1:0.25\n\nformat = json\n")
    assert read_config_file(cfg) == ["--kappa=3", "--grid=0:1:0.25", "--format=json"]
    code, out, _ = run(capsys, "phi", "--config", str(cfg), "--kappa", "2")
    doc = json.loads(out)
    assert code == 0 and doc["config"]["kappa"] == 2.0 and len(doc["result"]["rows"]) == 5


def test_config_negative_value(capsys, tmp_path):
    cfg = tmp_path / "exc.cfg"
    cfg.write_text("x1 = -inf\ny1 = 0\nformat = json\n")
    code, out, _ = run(capsys, "excursion", "--config", str(cfg))
    assert code == 0 and json.loads(out)["config"]["x1"] == "-inf"


def test_missing_config_file(capsys, tmp_path):
    code, _, _ = run(capsys, "phi", "--config", str(tmp_path / "none.cfg"))
    assert code == 1


@pytest.mark.parametrize("argv", [
    ["three-psi", "--kappa", "2.6666666666666665", "--pairs", "0,inf;0.3,0.5;1,2", "--n", "20", "--marginal", "1"],
    ["deriv-check"],
    ["bessel", "--kappa", "3", "--n-paths", "20", "--horizon", "1", "--dt", "1e-2"],
    ["jacobi", "--kappa", "3", "--n-paths", "20", "--horizon", "1", "--dt", "1e-2", "--drift"],
    ["time-change", "--kappa", "3", "--horizon", "0.2", "--dt", "1e-3"],
    ["restriction", "--kappa", "2", "--t", "0.05", "--n", "20"],
    ["restriction", "--kappa", "2.6666666666666665", "--n", "20"],
    ["weighted-tail", "--kappa", "3", "--n", "200", "--eps", "0.4:0.2", "--dt", "4e-3"],
])
def test_subcommands_run(capsys, argv):
    code, out, err = run(capsys, *argv, "--format", "json")
    assert code == 0, err
    doc = json.loads(out)
    assert doc["config"]["command"] == argv[0]


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "slelab", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "slelab" in r.stdout
