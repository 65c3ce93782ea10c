import csv
import hashlib
import io
import json
import subprocess
import sys

import pytest

from schiffer_lab.cli import main
from schiffer_lab.errors import ConfigError, LengthMismatch
from schiffer_lab.experiments import SEED_ENV, emit_plot_data, resolve_config


def run_cli(tmp_path, name, *args, config=None):
    argv = [name, "--out", str(tmp_path / "out")]
    tmp_path.mkdir(parents=True, exist_ok=True)
    if config is not None:
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        argv += ["--config", str(path)]
    return main(argv + list(args))


def read_table(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ----------------------------------------------------------------------
# emit_plot_data

def test_emit_two_columns():
    text = emit_plot_data({"a": [1, 2, 3], "b": [0.1, 0.2, 0.3]})
    assert text.count("\r\n") == 4
    assert text.splitlines()[0] == "a,b"
    assert text.splitlines()[2] == "2,0.20000000000000001"


def test_emit_empty_and_mixed():
    assert emit_plot_data({"x": [], "y": []}) == "x,y\r\n"
    text = emit_plot_data({"flag": [True, False], "v": [None, 1.5], "name": ["a,b", "c"]})
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[1] == ["true", "", "a,b"]
    assert rows[2] == ["false", "1.5", "c"]


def test_emit_length_mismatch():
    with pytest.raises(LengthMismatch):
        emit_plot_data({"a": [1, 2], "b": [1]})


# ----------------------------------------------------------------------
# configuration

def test_resolve_precedence(monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)
    assert resolve_config("solve", {"seed": 4}, {})["seed"] == 4
    monkeypatch.setenv(SEED_ENV, "9")
    assert resolve_config("solve", {"seed": 4}, {})["seed"] == 9
    assert resolve_config("solve", {"seed": 4}, {"seed": 11})["seed"] == 11
    monkeypatch.setenv(SEED_ENV, "x")
    with pytest.raises(ConfigError):
        resolve_config("solve", {}, {})


def test_unknown_key_exits_2_without_files(tmp_path):
    assert run_cli(tmp_path, "schiffer-check", config={"foo": 1}) == 2
    assert not (tmp_path / "out").exists()


@pytest.mark.parametrize("config", [{"curve": "nonsense"}, {"bc": "robin"}, {"count": "many"}])
def test_bad_values_exit_2(tmp_path, config):
    assert run_cli(tmp_path, "solve", config=config) == 2
    assert not (tmp_path / "out").exists()


def test_numerical_failure_exits_3(tmp_path):
    assert run_cli(tmp_path, "solve", "--h", "5.0") == 3


def test_failed_check_exits_1(tmp_path):
    assert run_cli(tmp_path, "symmetry-check", config={"curve": "kidney", "expect_p0": True}) == 1


# ----------------------------------------------------------------------
# experiments

def test_monotonicity_experiment(tmp_path):
    assert run_cli(tmp_path, "monotonicity") == 0
    rows = read_table(tmp_path / "out" / "monotonicity.csv")
    assert [float(r["R"]) for r in rows] == [0.5, 0.75, 1.0, 1.25]
    lam = [float(r["Lambda_fem"]) for r in rows]
    assert all(b < a for a, b in zip(lam, lam[1:]))


def test_schiffer_check_disk(tmp_path):
    assert run_cli(tmp_path, "schiffer-check") == 0
    row = read_table(tmp_path / "out" / "schiffer.csv")[0]
    assert float(row["conj4_residual"]) < 0.02


def test_solve_with_mesh_dump(tmp_path):
    assert run_cli(tmp_path, "solve", "--bc", "neumann", "--count", "3", config={"dump_mesh": True}) == 0
    out = tmp_path / "out"
    rows = read_table(out / "eigenvalues.csv")
    assert len(rows) == 3 and abs(float(rows[0]["lambda"])) < 1e-6
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["passed"] is True


def test_manifest_hashes(tmp_path):
    assert run_cli(tmp_path, "disk-oracle") == 0
    out = tmp_path / "out"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["files"]
    for name, digest in manifest["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert {"config", "seed", "versions", "wall_time_s"} <= set(manifest)


def test_seed_env_changes_random_fields(tmp_path, monkeypatch):
    cfg = {"alpha": "random", "n_random": 1}
    monkeypatch.setenv(SEED_ENV, "1")
    run_cli(tmp_path / "a", "fd-check", config=cfg)
    monkeypatch.setenv(SEED_ENV, "2")
    run_cli(tmp_path / "b", "fd-check", config=cfg)
    a = (tmp_path / "a" / "out" / "fd_check.csv").read_bytes()
    b = (tmp_path / "b" / "out" / "fd_check.csv").read_bytes()
    assert a != b
    manifest = json.loads((tmp_path / "b" / "out" / "manifest.json").read_text())
    assert manifest["seed"] == 2


@pytest.mark.slow
def test_flow_history_has_one_row_per_iterate(tmp_path):
    # tol 0 keeps the flow running until max_iter or a stalled step
    code = run_cli(tmp_path, "flow", "--max-iter", "200", "--tol", "1e-12",
                   config={"max_disk_defect": None})
    rows = read_table(tmp_path / "out" / "flow.csv")
    assert list(rows[0]) == ["iter", "J", "grad_norm", "disk_defect", "step"]
    verdict = json.loads((tmp_path / "out" / "manifest.json").read_text())["info"]["verdict"]
    assert len(rows) == verdict["iterations"] + 1
    if verdict["status"] == "not converged":
        assert len(rows) == 201
    assert code in (0, 1)


def test_entry_point_help():
    proc = subprocess.run([sys.executable, "-m", "schiffer_lab.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "flow" in proc.stdout
