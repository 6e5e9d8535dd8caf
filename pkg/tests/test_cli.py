import json

import numpy as np
import pytest

from fracstep.cli import main
from fracstep.kernels import kernel_table
from fracstep.meshes import MeshSpec, build_mesh
from fracstep.spectral import load_field


def write_cfg(tmp_path, name, payload):
    p = tmp_path / name
    p.write_text(json.dumps(payload))
    return str(p)


def test_kernels_beta_one_diagonal(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "c.json", {
        "beta": 1.0,
        "mesh": {"kind": "uniform", "n": 5, "horizon": 1.0},
    })
    out = tmp_path / "out"
    assert main(["kernels", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "kernels.csv").read_text().splitlines()
    assert lines[0] == "n,k,a,method"
    for line in lines[1:]:
        n, k, a, method = line.split(",")
        expect = 0.5 if n == k else 1.0
        assert float(a) == expect
    assert (out / "mesh.csv").exists()
    assert json.loads((out / "manifest.json").read_text())["command"] == "kernels"


def test_kernels_missing_beta_is_config_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "c.json", {
        "mesh": {"kind": "uniform", "n": 5, "horizon": 1.0},
    })
    assert main(["kernels", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "beta" in capsys.readouterr().err


def test_kernels_matches_library_and_is_deterministic(tmp_path):
    payload = {
        "beta": 0.5,
        "mesh": {"kind": "graded", "n": 10, "horizon": 1.0, "gamma": 2.0},
        "method": "closed",
    }
    cfg = write_cfg(tmp_path, "c.json", payload)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["kernels", "--config", cfg, "--out", str(out1)]) == 0
    assert main(["kernels", "--config", cfg, "--out", str(out2)]) == 0
    b1 = (out1 / "kernels.csv").read_bytes()
    assert b1 == (out2 / "kernels.csv").read_bytes()
    table = kernel_table(
        build_mesh(MeshSpec(kind="graded", n=10, horizon=1.0, gamma=2.0)),
        0.5, method="closed",
    )
    rows = [line.split(",") for line in b1.decode().splitlines()[1:]]
    for n, k, a, method in rows:
        assert float(a) == table.rows[int(n) - 1][int(n) - int(k)]
        assert method == "closed"


def test_verify_pass_and_corruption(tmp_path, capsys):
    payload = {
        "beta": 0.5,
        "mesh": {"kind": "graded", "n": 40, "horizon": 1.0, "gamma": 2.0},
        "sequences": 5,
    }
    cfg = write_cfg(tmp_path, "v.json", payload)
    out = tmp_path / "ok"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["passed"] is True
    assert "dgs_max_rel_residual" in report
    assert report["identities"]["passed"] is True
    payload["inject_defect"] = True
    cfg = write_cfg(tmp_path, "v2.json", payload)
    assert main(["verify", "--config", cfg, "--out", str(tmp_path / "bad")]) == 1


def test_verify_flags_noncompliant_mesh(tmp_path):
    cfg = write_cfg(tmp_path, "v.json", {
        "beta": 0.5,
        "mesh": {"kind": "random", "n": 60, "horizon": 1.0, "seed": 1},
        "sequences": 2,
    })
    out = tmp_path / "o"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 1
    report = json.loads((out / "report.json").read_text())
    assert report["ratio_condition"]["rstar"]["passed"] is False


def test_eig_graded_single_level(tmp_path):
    cfg = write_cfg(tmp_path, "e.json", {
        "mode": "graded-table", "betas": [0.4], "gammas": [2.0], "ns": [1, 30],
    })
    out = tmp_path / "o"
    assert main(["eig", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "eig.csv").read_text().splitlines()
    assert lines[0] == "mesh,n,beta,gamma,seed,lambda_min,sigma,margin"
    first = lines[1].split(",")
    # a single-level table has eigenvalue exactly 2 a_0
    mesh = build_mesh(MeshSpec(kind="graded", n=1, horizon=1.0, gamma=2.0))
    a0 = kernel_table(mesh, 0.4).rows[0][0]
    assert float(first[5]) == pytest.approx(2.0 * a0, rel=1e-12)


def test_eig_random_scan_records_seeds(tmp_path):
    cfg = write_cfg(tmp_path, "e.json", {
        "mode": "random-scan", "betas": [0.5], "ns": [20], "seeds": 3, "seed": 5,
    })
    out = tmp_path / "o"
    assert main(["eig", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "eig.csv").read_text().splitlines()[1:]
    seeds = [int(line.split(",")[4]) for line in lines]
    assert seeds == [5, 5 + 7919, 5 + 2 * 7919]
    margins = [float(line.split(",")[7]) for line in lines]
    assert all(m > 0.0 for m in margins)


def test_converge_outputs(tmp_path):
    cfg = write_cfg(tmp_path, "c.json", {
        "model": "tfac", "order": 0.8, "sigma": 0.8,
        "gammas": [1.0], "ns": [24, 48], "grid_n": 16,
    })
    out = tmp_path / "o"
    assert main(["converge", "--config", cfg, "--out", str(out)]) == 0
    slopes = (out / "slopes.csv").read_text().splitlines()
    assert slopes[0] == "model,sigma,gamma,fitted_order,expected_order"
    row = slopes[1].split(",")
    assert float(row[4]) == pytest.approx(0.8)
    errs = (out / "errors.csv").read_text().splitlines()[1:]
    assert len(errs) == 2


def test_simulate_outputs_and_determinism(tmp_path):
    payload = {
        "model": "tfac", "order": 0.5, "horizon": 0.2, "eta": 100.0,
        "epsilon": 0.01, "warmup_t": 0.01, "warmup_n": 10, "seed": 2,
        "snapshot_times": [0.2],
    }
    cfg = write_cfg(tmp_path, "s.json", payload)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["simulate", "--config", cfg, "--out", str(out1)]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(out2)]) == 0
    assert (out1 / "energy.csv").read_bytes() == (out2 / "energy.csv").read_bytes()
    header = (out1 / "energy.csv").read_text().splitlines()[0]
    assert header == "n,t,tau,E,E_mod,rate,law_residual,fp_iters"
    snap = load_field(out1 / "field_t0.2.bin")
    assert snap.shape == (32, 32)
    assert np.all(np.isfinite(snap))
    manifest = json.loads((out1 / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 2
    assert "fracstep" in manifest["versions"]


def test_simulate_rejects_unknown_fields(tmp_path):
    cfg = write_cfg(tmp_path, "s.json", {
        "model": "tfac", "order": 0.5, "horizon": 0.2, "eta": 1.0, "bogus": 1,
    })
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_bad_config_file(tmp_path):
    bad = tmp_path / "nope.json"
    assert main(["verify", "--config", str(bad), "--out", str(tmp_path)]) == 2
    bad.write_text("{not json")
    assert main(["verify", "--config", str(bad), "--out", str(tmp_path)]) == 2
