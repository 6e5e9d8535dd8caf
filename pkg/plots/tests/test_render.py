import csv

import numpy as np
import pytest
from conftest import DATA

import render


def read_col(path, name):
    with open(path, newline="") as fh:
        return np.array([float(r[name]) for r in csv.DictReader(fh)])


@pytest.mark.parametrize(
    "kind,src",
    [
        ("convergence", "errors.csv"),
        ("energy", "energy.csv"),
        ("steps", "energy.csv"),
        ("ratio-curves", "ratio_curves.csv"),
    ],
)
def test_render_all_kinds(tmp_path, kind, src):
    out = tmp_path / kind.replace("-", "_")
    info = render.render(kind, DATA / src, out)
    png, svg = out.with_suffix(".png"), out.with_suffix(".svg")
    assert png.stat().st_size > 1000
    assert svg.stat().st_size > 1000
    assert info


def test_convergence_slopes_match_csv(tmp_path):
    info = render.render("convergence", DATA / "errors.csv", tmp_path / "c")
    with open(DATA / "errors.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for gamma in sorted({float(r["gamma"]) for r in rows}):
        ns = np.array([float(r["n"]) for r in rows if float(r["gamma"]) == gamma])
        es = np.array([float(r["error"]) for r in rows if float(r["gamma"]) == gamma])
        slope = -np.polyfit(np.log(ns), np.log(es), 1)[0]
        assert info["slopes"][gamma] == pytest.approx(slope, abs=0.01)
    # and the library-side fit recorded in slopes.csv agrees too
    with open(DATA / "slopes.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            assert info["slopes"][float(row["gamma"])] == pytest.approx(
                float(row["fitted_order"]), abs=0.01
            )


def test_energy_monotone_info(tmp_path):
    info = render.render("energy", DATA / "energy.csv", tmp_path / "e")
    assert info["monotone"] is True
    assert info["E_mod_final"] <= read_col(DATA / "energy.csv", "E_mod")[0]


def test_reruns_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    render.render("energy", DATA / "energy.csv", a)
    render.render("energy", DATA / "energy.csv", b)
    assert a.with_suffix(".png").read_bytes() == b.with_suffix(".png").read_bytes()
    assert a.with_suffix(".svg").read_bytes() == b.with_suffix(".svg").read_bytes()


def test_missing_column_fails_fast(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,E\n0,1\n1,0.5\n")
    with pytest.raises(render.SchemaError, match="E_mod"):
        render.render("energy", bad, tmp_path / "x")
    assert render.main(["--kind", "energy", "--in", str(bad),
                        "--out", str(tmp_path / "y")]) == 2


def test_cli_entry(tmp_path):
    rc = render.main([
        "--kind", "ratio-curves",
        "--in", str(DATA / "ratio_curves.csv"),
        "--out", str(tmp_path / "rc"),
        "--title", "bounds",
    ])
    assert rc == 0
    assert (tmp_path / "rc.png").exists()
    assert (tmp_path / "rc.svg").exists()
