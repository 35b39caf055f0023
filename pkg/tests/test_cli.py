import json
import shutil
import subprocess

import numpy as np
import pytest

from mrcfie.cli import apply_thread_env, main
from mrcfie.operators import load_operator
from mrcfie.solvers import read_history_csv

CUBE = ["--shape", "cube", "--size", "1", "--h", "0.5", "--frequency", "1e6"]


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def test_mesh_summary_and_output(capsys, tmp_path):
    code, out = run(capsys, "mesh", *CUBE[:6], "--output", str(tmp_path / "c.off"))
    info = json.loads(out.out)
    assert code == 0 and info["triangles"] == 48 and info["genus"] == 0 and info["closed"]
    assert (tmp_path / "c.off").is_file()
    code, out = run(capsys, "mesh", "--input", str(tmp_path / "c.off"))
    assert json.loads(out.out)["rwg"] == 72


def test_mesh_torus_genus(capsys):
    code, out = run(capsys, "mesh", "--shape", "torus")
    assert code == 0 and json.loads(out.out)["genus"] == 1


def test_assemble_round_trip(capsys, tmp_path):
    p = tmp_path / "z.npz"
    code, _ = run(capsys, "assemble", *CUBE, "--operator", "EFIE", "--output", str(p))
    z = load_operator(p)
    assert code == 0 and z.entries.shape == (72, 72)


def test_solve_outputs(capsys, tmp_path):
    code, _ = run(capsys, "solve", *CUBE, "--formulation", "EFIE", "--basis", "MR-hier",
                  "--stop-level", "0", "--output", str(tmp_path / "s.json"),
                  "--history", str(tmp_path / "h.csv"), "--solution", str(tmp_path / "x.npy"))
    info = json.loads((tmp_path / "s.json").read_text())
    assert code == 0 and info["converged"] and info["stop_level"] == 0
    assert info["precond"] == "CoarseBlockLU"
    hist = read_history_csv(tmp_path / "h.csv")
    assert len(hist) == info["iterations"] + 1 and hist[-1] <= 1e-4
    assert np.load(tmp_path / "x.npy").shape == (72,)


def test_solve_not_converged_exit_code(capsys):
    code, out = run(capsys, "solve", *CUBE, "--formulation", "EFIE", "--max-iter", "2",
                    "--tol", "1e-12")
    assert code == 3 and not json.loads(out.out)["converged"]


def test_solve_config_file(capsys, tmp_path):
    cfg = tmp_path / "s.toml"
    cfg.write_text('[solver]\nmethod = "BiCGStab"\ntol = 1e-6\n')
    code, out = run(capsys, "solve", *CUBE, "--config", str(cfg))
    assert code == 0 and json.loads(out.out)["final_residual"] <= 1e-6


def test_stop_level_with_rwg_rejected(capsys):
    code, out = run(capsys, "solve", *CUBE, "--stop-level", "1")
    assert code == 2 and "MR" in out.err


def test_cond_reports_improvement(capsys):
    _, out = run(capsys, "cond", *CUBE, "--formulation", "EFIE")
    rwg = json.loads(out.out)["kappa"]
    _, out = run(capsys, "cond", *CUBE, "--formulation", "EFIE", "--basis", "MR-hier", "--stop-level", "0")
    assert json.loads(out.out)["kappa"] < rwg / 10


def test_rcs_with_mie(capsys, tmp_path):
    p = tmp_path / "rcs.csv"
    code, out = run(capsys, "rcs", "--shape", "sphere", "--size", "0.5", "--subdivisions", "2",
                    "--output", str(p), "--angles", "19", "--mie")
    info = json.loads(out.out)
    lines = p.read_text().splitlines()
    assert code == 0 and lines[0] == "theta_deg,rcs_m2,mie_m2" and len(lines) == 20
    assert info["rms_relative_error"] < 0.1


def test_experiment_strict_and_seed(capsys, tmp_path):
    cfg = tmp_path / "e.json"
    cfg.write_text(json.dumps({"scenario": "cube_refinement", "refinements": [1], "formulations": ["EFIE"],
                               "bases": ["RWG"], "compute_condition": False}))
    code, out = run(capsys, "experiment", "--config", str(cfg), "--output-dir", str(tmp_path / "o"),
                    "--seed", "7", "--strict")
    assert code == 0 and "ok" in out.out
    assert json.loads((tmp_path / "o" / "report.json").read_text())["environment"]["seed"] == 7
    bad = json.loads(cfg.read_text())
    bad["solver"] = {"max_iter": 1}
    cfg.write_text(json.dumps(bad))
    code, out = run(capsys, "experiment", "--config", str(cfg), "--strict")
    assert code == 1 and "not converged" in out.out
    code, out = run(capsys, "experiment", "--config", str(cfg))
    assert code == 0


def test_experiment_config_errors(capsys, tmp_path):
    code, out = run(capsys, "experiment")
    assert code == 2 and "config error" in out.err
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"scenario": "cube_refinement", "bases": []}))
    code, out = run(capsys, "experiment", "--config", str(cfg))
    assert code == 2
    code, out = run(capsys, "experiment", "--config", str(tmp_path / "missing.toml"))
    assert code == 2


def test_thread_env():
    env = {"MRCFIE_THREADS": "2", "OMP_NUM_THREADS": "4"}
    assert apply_thread_env(env) == "2"
    assert env["OMP_NUM_THREADS"] == "4" and env["OPENBLAS_NUM_THREADS"] == "2"
    assert env["NUMBA_NUM_THREADS"] == "2"
    assert apply_thread_env({}) is None
    with pytest.raises(SystemExit):
        apply_thread_env({"MRCFIE_THREADS": "0"})


@pytest.mark.skipif(shutil.which("mrcfie") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["mrcfie", "mesh", "--shape", "cube", "--size", "1", "--h", "1"],
                         capture_output=True, text=True, timeout=120)
    assert res.returncode == 0 and json.loads(res.stdout)["triangles"] == 12
