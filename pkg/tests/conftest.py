"""Shared helpers for the test suite."""

from __future__ import annotations

import numpy as np

from fracstep.meshes import MeshSpec, TimeMesh, build_mesh, check_ratio_condition, rg


def compliant_composite(n: int, gamma: float, beta: float, seed: int,
                        horizon: float = 1.0) -> TimeMesh:
    """Composite-style mesh repaired to satisfy the weak ratio condition.

    Raw random tails violate the admissibility bound with near certainty
    once they are more than a few steps long, so steps that undershoot
    rg(r_k) * tau_k are raised just above the bound (a forward pass, so
    later ratios see the repaired values).
    """
    mesh = build_mesh(
        MeshSpec(kind="composite", n=n, horizon=horizon, gamma=gamma, seed=seed)
    )
    taus = mesh.steps.copy()
    for k in range(2, taus.size):
        lo = rg(taus[k - 1] / taus[k - 2], beta) * taus[k - 1]
        if taus[k] < lo:
            taus[k] = lo * 1.0000001
    repaired = TimeMesh.from_levels(np.concatenate([[0.0], np.cumsum(taus)]))
    report = check_ratio_condition(repaired, beta, "rg")
    assert report.passed, report.describe()
    return repaired


def naive_kernel_row(mesh: TimeMesh, beta: float, n: int) -> np.ndarray:
    """Textbook four-term antiderivative evaluation (cancellation-prone)."""
    import math

    t, tau = mesh.levels, mesh.steps
    g = math.gamma(2.0 + beta)
    p = lambda u: u ** (1.0 + beta) / g
    row = np.empty(n)
    row[0] = tau[n - 1] ** (beta - 1.0) / g
    for k in range(1, n):
        br = p(t[n] - t[k - 1]) - p(t[n - 1] - t[k - 1]) - p(t[n] - t[k]) + p(t[n - 1] - t[k])
        row[n - k] = br / (tau[n - 1] * tau[k - 1])
    return row
