"""Discrete gradient structure checks and positive-definiteness certification.

The kernel quadratic form 2 sum_k w_k sum_j a_{k-j}^{(k)} w_j admits an
exact rewriting as a telescoping difference of DCC-weighted sums of the
transformed sequence v plus a nonnegative dissipation sum.  This module
evaluates both sides of that identity, the quadratic form itself, and the
minimum eigenvalue of its symmetric matrix, which is conjectured to stay
above sigma_beta = (1 - beta) min_k a_0^{(beta,k)}.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .compkernels import ComplementarySet, ModifiedKernelTable, build_complementary
from .kernels import KernelTable, kernel_table
from .meshes import MeshSpec, build_mesh

try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    _njit = None

__all__ = [
    "DgsBreakdown",
    "EigenReport",
    "transformed_sequence",
    "dgs_check",
    "quadratic_form",
    "QuadraticFormResult",
    "jacobi_eigenvalues",
    "min_eigenvalue",
    "sigma_conjecture_scan",
]


# The identity's right-hand side mixes terms up to ~tau_1^(2 beta - 2)
# while the left side stays O(1); certifying a 1e-10 residual therefore
# needs more than double precision for small beta on strongly graded
# meshes.  Use the 80-bit type where the platform provides one.
_LONG = np.longdouble if np.finfo(np.longdouble).eps < 1e-18 else np.float64


def transformed_sequence(mod: ModifiedKernelTable, w: np.ndarray) -> np.ndarray:
    """v_j = sum_l modified_a_{j-l}^{(j)} w_l for j = 1..len(w)."""
    w = np.asarray(w, dtype=float)
    n = w.size
    if n < 1:
        raise ValueError("need at least one entry in w")
    if n > mod.n:
        raise ValueError(f"w has {n} entries but the table holds {mod.n} levels")
    return mod.matrix[:n, :n] @ w


@dataclass(frozen=True)
class DgsBreakdown:
    """Both sides of the gradient-structure identity at one level.

    ``p_term_diff`` is the telescoping difference p_term_new - p_term_old
    evaluated stably (the stored DCC rows are subtracted entry by entry
    before weighting by v^2, so the large canceling sums never meet); the
    residual uses it, while both absolute sums are reported as well.
    """

    n: int
    lhs: float
    p_term_new: float
    p_term_old: float
    p_term_diff: float
    sigma_term: float
    rate_term: float

    @property
    def rhs(self) -> float:
        return self.p_term_diff + self.sigma_term + self.rate_term

    @property
    def residual(self) -> float:
        return self.lhs - self.rhs

    @property
    def rel_residual(self) -> float:
        return abs(self.residual) / (1.0 + abs(self.lhs))


def dgs_check(table: KernelTable, comp: ComplementarySet,
              w: np.ndarray) -> DgsBreakdown:
    """Evaluate the gradient-structure identity at level n = len(w).

    ``table`` supplies the unmodified kernels on the left-hand side;
    ``comp`` must be built from the matching modified table.  The rate
    term is assembled from the RCC reciprocal increments; weights whose
    RCC entries vanish (the beta -> 1 limit) contribute nothing because
    the corresponding partial sums vanish identically.
    """
    w = np.asarray(w, dtype=float)
    n = w.size
    mod = comp.source
    if table.n < n or mod.n < n or comp.n < n:
        raise ValueError("kernel table and complementary set are inconsistent")
    wl = w.astype(_LONG)
    v = mod.matrix[:n, :n].astype(_LONG) @ wl
    arow = table.row(n).astype(_LONG)  # subscript order
    lhs = 2.0 * wl[n - 1] * np.dot(arow[::-1], wl)
    p_n = comp.p[n - 1].astype(_LONG)
    v2 = v * v
    p_term_new = np.dot(p_n[::-1], v2)
    if n > 1:
        p_o = comp.p[n - 2].astype(_LONG)
        p_term_old = np.dot(p_o[::-1], v2[: n - 1])
        dp = p_n[::-1][: n - 1] - p_o[::-1]  # = theta_{n-j}^{(n)}, j < n
        p_term_diff = np.dot(dp, v2[: n - 1]) + p_n[0] * v2[n - 1]
    else:
        p_term_old = _LONG(0.0)
        p_term_diff = p_term_new
    sigma_term = mod.sigma_min * arow[0] * wl[n - 1] ** 2
    rate_term = _LONG(0.0)
    if n > 1:
        ph = comp.phat[n - 1].astype(_LONG)
        dv = np.diff(v, prepend=_LONG(0.0))
        # partial sums S_j = sum_{k<=j} phat_{n-k} dv_k, j = 1..n-1
        s = np.cumsum(ph[::-1] * dv)[: n - 1]
        sub = ph[1:n][::-1]  # phat_{n-j}, ordered by j = 1..n-1
        prev = ph[: n - 1][::-1]  # phat_{n-j-1}
        ok = (sub > 0.0) & (prev > 0.0)
        weights = np.zeros(n - 1, dtype=_LONG)
        weights[ok] = 1.0 / sub[ok] - 1.0 / prev[ok]
        rate_term = np.dot(weights, s * s)
    return DgsBreakdown(
        n=n,
        lhs=float(lhs),
        p_term_new=float(p_term_new),
        p_term_old=float(p_term_old),
        p_term_diff=float(p_term_diff),
        sigma_term=float(sigma_term),
        rate_term=float(rate_term),
    )


@dataclass(frozen=True)
class QuadraticFormResult:
    value: float
    dcc_bound: float  # sum_k p_{n-k}^{(n)} v_k^2 <= value on admissible meshes


def quadratic_form(table: KernelTable, w: np.ndarray,
                   comp: ComplementarySet | None = None) -> QuadraticFormResult:
    """2 sum_k w_k sum_{j<=k} a_{k-j}^{(k)} w_j plus its DCC lower bound."""
    w = np.asarray(w, dtype=float)
    n = w.size
    if n > table.n:
        raise ValueError(f"w has {n} entries but the table holds {table.n} levels")
    m = table.dense_lower()[:n, :n]
    value = 2.0 * float(w @ (m @ w))
    if comp is None:
        comp = build_complementary(ModifiedKernelTable(table, sigma_min=0.0), up_to=n)
    v = transformed_sequence(comp.source, w)
    bound = math.fsum(comp.p[n - 1][::-1] * v * v)
    return QuadraticFormResult(value=value, dcc_bound=bound)


def _jacobi_kernel(a, rel_tol):  # pragma: no cover - exercised via jacobi_eigenvalues
    n = a.shape[0]
    fro = 0.0
    for i in range(n):
        for j in range(n):
            fro += a[i, j] * a[i, j]
    fro = math.sqrt(fro)
    if fro == 0.0:
        return 0
    for sweep in range(100):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += 2.0 * a[i, j] * a[i, j]
        off = math.sqrt(off)
        if off <= rel_tol * fro:
            return sweep
        thresh = off / n if sweep < 3 else 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= thresh or apq == 0.0:
                    continue
                d = (a[q, q] - a[p, p]) / (2.0 * apq)
                if d >= 0.0:
                    t = 1.0 / (d + math.sqrt(d * d + 1.0))
                else:
                    t = -1.0 / (-d + math.sqrt(d * d + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for i in range(n):
                    aip = a[i, p]
                    aiq = a[i, q]
                    a[i, p] = c * aip - s * aiq
                    a[i, q] = s * aip + c * aiq
                for i in range(n):
                    api = a[p, i]
                    aqi = a[q, i]
                    a[p, i] = c * api - s * aqi
                    a[q, i] = s * api + c * aqi
    return -1


if _njit is not None:
    _jacobi_compiled = _njit(cache=True, nogil=True)(_jacobi_kernel)
else:
    _jacobi_compiled = _jacobi_kernel


def jacobi_eigenvalues(s: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm drops below ``tol``
    relative to the full Frobenius norm.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError("need a square matrix")
    if not np.allclose(s, s.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(s).max())):
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (s + s.T)  # symmetrize exactly before rotating
    sweeps = _jacobi_compiled(a, tol)
    if sweeps < 0:
        raise RuntimeError("Jacobi eigensolver did not converge in 100 sweeps")
    return np.sort(np.diag(a))


@dataclass(frozen=True)
class EigenReport:
    """Minimum eigenvalue of the kernel quadratic form and its conjectured bound."""

    n: int
    beta: float
    mesh_label: str
    lam_min: float
    sigma_beta: float
    seed: int | None = None

    @property
    def margin(self) -> float:
        return self.lam_min - self.sigma_beta

    @property
    def satisfies_bound(self) -> bool:
        return self.lam_min >= self.sigma_beta


def min_eigenvalue(table: KernelTable, tol: float = 1e-12,
                   mesh_label: str = "", seed: int | None = None) -> EigenReport:
    """Minimum eigenvalue of S = A + A^T for the lower-triangular kernel matrix A."""
    if table.n > 1000:
        raise ValueError("eigenvalue certification is limited to n <= 1000")
    a = table.dense_lower()
    lam = jacobi_eigenvalues(a + a.T, tol=tol)
    return EigenReport(
        n=table.n,
        beta=table.beta,
        mesh_label=mesh_label,
        lam_min=float(lam[0]),
        sigma_beta=table.sigma_bound(),
        seed=seed,
    )


def sigma_conjecture_scan(specs: list[tuple[MeshSpec, float]], tol: float = 1e-12,
                          threads: int = 1) -> list[EigenReport]:
    """Eigenvalue bound check over a family of (mesh spec, beta) instances.

    Violations of lam_min >= sigma_beta are findings, not errors: the
    bound is an unproven conjecture.  Instances run independently, so
    they parallelize over a thread pool.
    """

    def run(item):
        spec, beta = item
        mesh = build_mesh(spec)
        table = kernel_table(mesh, beta, method="closed")
        return min_eigenvalue(
            table, tol=tol, mesh_label=spec.kind, seed=spec.seed
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, specs))
    return [run(item) for item in specs]
