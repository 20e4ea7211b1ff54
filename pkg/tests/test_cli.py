import json
import math
import os

import numpy as np
import pytest

from robinlab.cli import main


def run(args):
    return main(args)


def test_mesh_command(tmp_path, capsys):
    code = run(["mesh", "--domain", "square", "--h", "0.05",
                "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "mesh.txt").exists()
    out = capsys.readouterr().out
    assert "NV=" in out and "NT=" in out


def test_mesh_disk_command(tmp_path):
    code = run(["mesh", "--domain", "disk", "--segments", "128", "--h", "0.05",
                "--out", str(tmp_path)])
    assert code == 0
    header = (tmp_path / "mesh.txt").read_text().splitlines()[0]
    nv, nt, nb = map(int, header.split())
    assert nb == 128


def test_mesh_invalid_polygon_exit_2(tmp_path, capsys):
    code = run(["mesh", "--domain", "polygon", "--vertices", "0,0;1,1;1,0;0,1",
                "--h", "0.2", "--out", str(tmp_path)])
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_solve_neumann(tmp_path):
    code = run(["solve", "--domain", "square", "--alpha", "0", "--n", "1",
                "--h", "0.25", "--out", str(tmp_path)])
    assert code == 0
    record = json.loads((tmp_path / "spectrum.json").read_text())
    assert abs(record["pairs"][0]["lambda"]) <= 1e-8


def test_solve_missing_mesh_file_exit_2(tmp_path):
    code = run(["solve", "--mesh", str(tmp_path / "nope.txt"), "--alpha", "1",
                "--out", str(tmp_path)])
    assert code == 2


def test_solve_from_mesh_file(tmp_path):
    assert run(["mesh", "--domain", "square", "--h", "0.1",
                "--out", str(tmp_path)]) == 0
    code = run(["solve", "--mesh", str(tmp_path / "mesh.txt"), "--alpha", "1",
                "--n", "2", "--out", str(tmp_path), "--eigenvectors"])
    assert code == 0
    assert (tmp_path / "eigenvectors" / "psi_000.txt").exists()


def test_analytic_disk_counts(tmp_path, capsys):
    code = run(["analytic", "--disk", "--alpha", "4.5", "--out", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "disk_branches.csv").read_text().splitlines()
    assert len(lines) == 6  # header + 5 branches
    assert "5 branches" in capsys.readouterr().out


def test_analytic_interval(tmp_path):
    code = run(["analytic", "--interval", "--alpha", "3", "--out", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "interval_branches.csv").read_text().splitlines()
    assert len(lines) == 3


def test_sweep_writes_csv_and_manifest(tmp_path):
    code = run(["sweep", "--domain", "square", "--alphas", "1,2", "--n", "2",
                "--h", "0.25", "--out", str(tmp_path)])
    assert code == 0
    body = (tmp_path / "sweep.csv").read_text().splitlines()
    assert body[0] == "alpha,n,lambda,ratio,residual,mesh_level"
    assert len(body) == 5
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["tool"] == "robinlab"
    assert "config_hash" in manifest


def test_concentration_command(tmp_path):
    code = run(["concentration", "--domain", "square", "--alphas", "1,2",
                "--n", "1", "--margin", "0.25", "--h", "0.25",
                "--out", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "concentration.csv").read_text().splitlines()
    assert lines[0].startswith("alpha,n,p,q,r")
    assert len(lines) == 3


def test_bound_command(tmp_path, capsys):
    # spec surface: bound JSON carries the bound and the next eigenvalue
    code = run(["bound", "--domain", "disk", "--segments", "22", "--h", "0.25",
                "--alpha", "10", "--n", "2", "--m", "16", "--delta", "0.5",
                "--out", str(tmp_path)])
    assert code == 0
    record = json.loads((tmp_path / "bound.json").read_text())
    assert record["bound"] >= record["lambda_next"] - 1e-6
    assert len(record["overlaps"]) == 2


def test_env_var_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("ROBINLAB_OUT", str(tmp_path / "envout"))
    code = run(["analytic", "--disk", "--alpha", "1.5"])
    assert code == 0
    assert (tmp_path / "envout" / "disk_branches.csv").exists()


def test_config_file_merge(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"domain": "square", "h": 0.25, "alphas": "1,2",
                               "n": 2}))
    code = run(["sweep", "--config", str(cfg), "--out", str(tmp_path)])
    assert code == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["n_max"] == 2


def test_verify_square_passes(tmp_path):
    code = run(["verify", "--domain", "square", "--alphas", "3,6", "--n", "2",
                "--h", "0.25", "--out", str(tmp_path)])
    assert code == 0
    body = (tmp_path / "verify.csv").read_text().splitlines()
    assert body[0] == "check,alpha,n,lhs,rhs,margin,status"
    assert not any(",fail" in line for line in body)


def test_verify_mixed_hash_refused(tmp_path, capsys):
    assert run(["verify", "--domain", "square", "--alphas", "3,6", "--n", "2",
                "--h", "0.25", "--out", str(tmp_path)]) == 0
    code = run(["verify", "--domain", "square", "--alphas", "3,7", "--n", "2",
                "--h", "0.25", "--out", str(tmp_path)])
    assert code == 2
    assert "refusing" in capsys.readouterr().err


def test_no_command_prints_help(capsys):
    assert run([]) == 2
