import numpy as np
import pytest
from conftest import compliant_composite

from fracstep.compkernels import (
    ModifiedKernelTable,
    build_complementary,
    dcc_kernels,
    doc_kernels,
    rcc_kernels,
    verify_identities,
)
from fracstep.kernels import kernel_table
from fracstep.meshes import MeshSpec, build_mesh


def make_set(mesh, beta, sigma_min=0.0, method="closed"):
    table = kernel_table(mesh, beta, method=method)
    mod = ModifiedKernelTable(table, sigma_min=sigma_min)
    return table, mod, build_complementary(mod)


def test_modified_table_doubles_diagonal():
    mesh = build_mesh(MeshSpec(kind="graded", n=6, horizon=1.0, gamma=2.0))
    table = kernel_table(mesh, 0.5, method="closed")
    mod = ModifiedKernelTable(table)
    for n in range(1, 7):
        row = mod.row(n)
        assert row[0] == pytest.approx(2.0 * table.rows[n - 1][0], rel=1e-15)
        assert np.array_equal(row[1:], table.rows[n - 1][1:])
    with pytest.raises(ValueError):
        ModifiedKernelTable(table, sigma_min=2.0)


def test_gradient_flow_limit_rows():
    # kernel order 0 (the alpha -> 1 gradient-flow limit): diagonal 1/tau
    mesh = build_mesh(MeshSpec(kind="graded", n=8, horizon=1.0, gamma=2.0))
    _, _, cs = make_set(mesh, 0.0)
    for n in range(1, 9):
        tau_n = mesh.steps[n - 1]
        assert cs.theta[n - 1][0] == pytest.approx(tau_n / 2.0, rel=1e-15)
        assert np.array_equal(cs.theta[n - 1][1:], np.zeros(n - 1))
        # DCC rows carry tau_k/2; RCC rows are flat at tau_n/2
        p = cs.p[n - 1]
        for k in range(1, n + 1):
            assert p[n - k] == pytest.approx(mesh.steps[k - 1] / 2.0, rel=1e-15)
        assert np.allclose(cs.phat[n - 1], tau_n / 2.0, rtol=1e-15)
    rep = verify_identities(cs)
    assert rep.max_residual == 0.0


def test_wave_limit_rows():
    # kernel order 1: the modified table is all ones
    mesh = build_mesh(MeshSpec(kind="random", n=8, horizon=1.0, seed=4))
    _, _, cs = make_set(mesh, 1.0)
    for n in range(1, 9):
        th = cs.theta[n - 1]
        assert th[0] == 1.0
        if n > 1:
            assert th[1] == -1.0
            assert np.array_equal(th[2:], np.zeros(n - 2))
        assert cs.p[n - 1][0] == 1.0
        assert np.array_equal(cs.p[n - 1][1:], np.zeros(n - 1))
        assert cs.phat[n - 1][0] == 1.0
        assert np.array_equal(cs.phat[n - 1][1:], np.zeros(n - 1))
    rep = verify_identities(cs)
    assert rep.max_residual == 0.0


def test_identities_random_mesh():
    mesh = build_mesh(MeshSpec(kind="random", n=8, horizon=1.0, seed=21))
    _, _, cs = make_set(mesh, 0.5)
    rep = verify_identities(cs, tol=1e-13)
    assert rep.passed
    assert rep.max_residual <= 1e-13


def test_identities_graded_n100():
    mesh = build_mesh(MeshSpec(kind="graded", n=100, horizon=1.0, gamma=2.0))
    _, _, cs = make_set(mesh, 0.5)
    rep = verify_identities(cs, tol=1e-11)
    assert rep.passed
    assert set(rep.residuals) == {"doc-left", "doc-right", "dcc", "rcc"}


def test_theta_zero_level_value():
    mesh = build_mesh(MeshSpec(kind="graded", n=5, horizon=1.0, gamma=2.0))
    table, mod, cs = make_set(mesh, 0.37)
    for n in range(1, 6):
        assert cs.theta[n - 1][0] == pytest.approx(
            1.0 / (2.0 * table.rows[n - 1][0]), rel=1e-15
        )


def test_dcc_standalone_matches_incremental():
    mesh = build_mesh(MeshSpec(kind="random", n=12, horizon=1.0, seed=8))
    _, mod, cs = make_set(mesh, 0.6)
    thetas = [doc_kernels(mod, j) for j in range(1, 13)]
    assert np.allclose(dcc_kernels(thetas), cs.p[11], atol=1e-15)
    assert np.allclose(rcc_kernels(thetas[11]), cs.phat[11], atol=1e-15)


def test_corrupted_entry_detected():
    mesh = build_mesh(MeshSpec(kind="graded", n=20, horizon=1.0, gamma=2.0))
    _, _, cs = make_set(mesh, 0.5)
    cs.theta[19][7] *= 1.0 + 1e-6
    rep = verify_identities(cs, tol=1e-11)
    assert not rep.passed


@pytest.mark.parametrize("beta", [0.1, 0.5, 0.9])
def test_dcc_nonnegative_and_rcc_monotone(beta):
    # admissible mesh: DCC rows nonnegative, RCC rows positive decreasing
    mesh = compliant_composite(60, 3.0, beta, seed=5)
    _, mod, cs = make_set(mesh, beta)
    for n in range(1, cs.n + 1):
        assert cs.p[n - 1].min() >= -1e-13
        ph = cs.phat[n - 1]
        assert ph.min() > 0.0
        if n > 1:
            assert np.diff(ph).max() <= 1e-13
    # the sufficient assumptions themselves: column decrease and
    # geometric-like convexity of the modified table
    m = mod.matrix
    for n in range(2, cs.n + 1):
        prev = mod.row(n - 1)
        cur = mod.row(n)
        assert np.all(prev[: n - 1] - cur[1:] > -1e-13 * prev[: n - 1])
        if n > 2:
            lhs = prev[: n - 2] * cur[2:]
            rhs = prev[1 : n - 1] * cur[1 : n - 1]
            assert np.all(lhs - rhs >= -1e-12 * np.abs(rhs))


def test_zero_diagonal_rejected():
    mesh = build_mesh(MeshSpec(kind="uniform", n=3, horizon=1.0))
    table = kernel_table(mesh, 0.5, method="closed")
    mod = ModifiedKernelTable(table)
    mod.matrix[1, 1] = 0.0
    with pytest.raises(ValueError, match="diagonal"):
        doc_kernels(mod, 3)
