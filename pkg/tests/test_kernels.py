import math

import numpy as np
import pytest
from conftest import naive_kernel_row

from fracstep.kernels import (
    FracWeight,
    appendix_audit,
    cancellation_estimate,
    gamma_fn,
    kernel_row_closed,
    kernel_row_quadrature,
    kernel_table,
    psi_chain,
    rho,
)
from fracstep.meshes import MeshSpec, TimeMesh, build_mesh


def extreme_ratio_mesh(seed=3, n=24):
    rng = np.random.default_rng(seed)
    taus = 10.0 ** rng.uniform(-6.0, 0.0, n)
    return TimeMesh.from_levels(np.concatenate([[0.0], np.cumsum(taus)]))


def test_gamma_fn_values():
    assert gamma_fn(1.0) == 1.0
    assert gamma_fn(5.0) == 24.0
    # frozen from a 40-digit series evaluation
    assert gamma_fn(2.5) == pytest.approx(1.3293403881791370205, rel=1e-14)


def test_gamma_fn_recurrence():
    for x in (0.3, 0.77, 1.9, 4.2):
        assert gamma_fn(x + 1.0) == pytest.approx(x * gamma_fn(x), rel=1e-14)


def test_gamma_fn_rejects_nonpositive():
    with pytest.raises(ValueError):
        gamma_fn(0.0)
    with pytest.raises(ValueError):
        gamma_fn(-1.3)


def test_frac_weight():
    w1 = FracWeight(1.0)
    assert w1(0.37) == 1.0
    w = FracWeight(0.5)
    assert w(4.0) == pytest.approx(0.5 / math.gamma(0.5), rel=1e-14)
    with pytest.raises(ValueError):
        FracWeight(0.0)


def test_rho_values():
    assert rho(0.0, 0.7) == 0.0
    assert rho(1.0, 0.5) == pytest.approx(2.0**1.5 - 2.0, rel=1e-15)
    with pytest.raises(ValueError):
        rho(-0.1, 0.5)


def test_rho_increasing():
    z = np.linspace(0.0, 50.0, 400)
    for beta in (0.1, 0.5, 0.9):
        assert np.all(np.diff(rho(z, beta)) > 0.0)


def test_beta_one_row_any_mesh():
    for mesh in (
        build_mesh(MeshSpec(kind="uniform", n=6, horizon=6.0)),
        build_mesh(MeshSpec(kind="graded", n=6, horizon=1.0, gamma=3.0)),
    ):
        row = kernel_row_closed(mesh, 1.0, 5)
        assert row[0] == 0.5
        assert np.array_equal(row[1:], np.ones(4))
        qrow = kernel_row_quadrature(mesh, 1.0, 5)
        assert np.allclose(qrow, row, rtol=1e-13)


def test_beta_zero_limit_row():
    mesh = build_mesh(MeshSpec(kind="graded", n=8, horizon=1.0, gamma=2.0))
    row = kernel_row_closed(mesh, 0.0, 6)
    assert row[0] == pytest.approx(1.0 / mesh.steps[5], rel=1e-15)
    assert np.array_equal(row[1:], np.zeros(5))
    # the general path approaches the limit row
    near = kernel_row_closed(mesh, 1e-6, 6)
    assert near[0] * mesh.steps[5] == pytest.approx(1.0, abs=1e-4)
    assert np.abs(near[1:]).max() < 1e-4 / mesh.steps[5]


def test_diagonal_identity():
    mesh = build_mesh(MeshSpec(kind="random", n=20, horizon=1.0, seed=5))
    for beta in (0.1, 0.4, 0.9):
        g = math.gamma(2.0 + beta)
        for n in (1, 7, 20):
            row = kernel_row_closed(mesh, beta, n)
            ref = mesh.steps[n - 1] ** (beta - 1.0) / g
            assert row[0] == pytest.approx(ref, rel=1e-12)


def test_closed_matches_naive_on_benign_mesh():
    mesh = build_mesh(MeshSpec(kind="uniform", n=12, horizon=1.0))
    for beta in (0.25, 0.75):
        for n in (2, 7, 12):
            c = kernel_row_closed(mesh, beta, n)
            nv = naive_kernel_row(mesh, beta, n)
            assert np.allclose(c, nv, rtol=1e-11)


def test_closed_matches_quadrature_random_mesh():
    mesh = build_mesh(MeshSpec(kind="random", n=10, horizon=1.0, seed=17))
    c = kernel_row_closed(mesh, 0.4, 6)
    q = kernel_row_quadrature(mesh, 0.4, 6, tol=1e-15)
    assert np.max(np.abs(c - q) / q) < 1e-12


def test_closed_matches_quadrature_extreme_ratios():
    mesh = extreme_ratio_mesh()
    worst = 0.0
    for n in range(1, mesh.n + 1):
        c = kernel_row_closed(mesh, 0.1, n)
        q = kernel_row_quadrature(mesh, 0.1, n, tol=1e-14)
        worst = max(worst, float(np.max(np.abs(c - q) / q)))
    assert worst < 1e-10


def test_rows_positive_and_chain():
    # interior monotonicity: (1+beta) a_0 > a_1 > ... > a_{n-1} > 0
    for mesh in (
        build_mesh(MeshSpec(kind="random", n=30, horizon=1.0, seed=2)),
        build_mesh(MeshSpec(kind="graded", n=30, horizon=1.0, gamma=3.0)),
    ):
        for beta in (0.1, 0.5, 0.9):
            table = kernel_table(mesh, beta, method="closed")
            for n in range(2, 31):
                row = table.rows[n - 1]
                assert np.all(row > 0.0)
                assert (1.0 + beta) * row[0] > row[1]
                assert np.all(np.diff(row[1:]) < 0.0) or n == 2


def test_cancellation_estimate_flags_lossy_entries():
    mesh = extreme_ratio_mesh()
    beta = 0.1
    n = mesh.n
    closed = kernel_row_closed(mesh, beta, n)
    quad = kernel_row_quadrature(mesh, beta, n, tol=1e-15)
    naive = naive_kernel_row(mesh, beta, n)
    est = cancellation_estimate(mesh, beta, n, closed)
    lossy = est > 1e6
    assert lossy.any()
    # where flagged, the naive evaluation really has lost > 6 digits
    rel_naive = np.abs(naive - quad) / quad
    assert rel_naive[lossy].max() > 1e-9


def test_kernel_table_auto_uses_quadrature_where_flagged():
    mesh = extreme_ratio_mesh()
    table = kernel_table(mesh, 0.1, method="auto", tol=1e-14)
    flagged = sum(int((c == 1).sum()) for c in table.method_codes)
    assert flagged > 0
    qtable = kernel_table(mesh, 0.1, method="quadrature", tol=1e-14)
    for r1, r2 in zip(table.rows, qtable.rows):
        assert np.allclose(r1, r2, rtol=1e-10)


def test_psi_chain_explicit_and_monotone():
    mesh = build_mesh(MeshSpec(kind="graded", n=40, horizon=1.0, gamma=2.0))
    for beta in (0.2, 0.5, 0.8):
        for n in (3, 17, 40):
            psi, psi1 = psi_chain(mesh, beta, n)
            assert psi[0] == pytest.approx(psi1, rel=1e-12)
            assert np.all(np.diff(psi) > 0.0)
            assert psi[-1] < 1.0


def test_psi_chain_uniform_two_ways():
    mesh = build_mesh(MeshSpec(kind="uniform", n=5, horizon=5.0))
    psi, psi1 = psi_chain(mesh, 0.5, 5)
    row5 = kernel_row_closed(mesh, 0.5, 5)
    row4 = kernel_row_closed(mesh, 0.5, 4)
    ref = np.concatenate([[row5[1] / (2.0 * row4[0])], row5[2:] / row4[1:]])
    assert np.allclose(psi, ref, rtol=1e-13)
    assert psi1 == pytest.approx(rho(1.0, 0.5) / 2.0, rel=1e-13)


def test_appendix_audit_passes():
    reports = appendix_audit()
    for name, rep in reports.items():
        assert rep.passed, f"{name}: {rep.violations[:3]}"
        assert rep.checked > 100


def test_appendix_equality_point():
    # the growth cap is tight at z = 1: rho(1) = 2(2^beta - 1)
    for beta in (0.1, 0.5, 0.9):
        assert rho(1.0, beta) == pytest.approx(2.0 * (2.0**beta - 1.0), rel=1e-14)


def test_table_dense_lower_layout():
    mesh = build_mesh(MeshSpec(kind="graded", n=5, horizon=1.0, gamma=2.0))
    table = kernel_table(mesh, 0.5, method="closed")
    m = table.dense_lower()
    for n in range(1, 6):
        for k in range(1, n + 1):
            assert m[n - 1, k - 1] == table.rows[n - 1][n - k]
    assert np.array_equal(np.triu(m, 1), np.zeros_like(m))


def test_invalid_arguments():
    mesh = build_mesh(MeshSpec(kind="uniform", n=4, horizon=1.0))
    with pytest.raises(ValueError):
        kernel_row_closed(mesh, 1.5, 2)
    with pytest.raises(ValueError):
        kernel_row_closed(mesh, 0.5, 5)
    with pytest.raises(ValueError):
        kernel_row_quadrature(mesh, 0.5, 2, tol=1e-20)
    with pytest.raises(ValueError):
        kernel_table(mesh, 0.5, method="magic")
