"""Orthogonal and complementary kernel families derived from a kernel table.

Given the (diagonal-modified) kernels, three derived families drive the
discrete gradient structure:

* DOC rows (theta): the discrete orthogonality convolution kernels, a
  one-sided convolution inverse of the modified kernels.
* DCC rows (p): left-complementary kernels, cumulative over levels; they
  convolve with the kernels to the constant 1 and stay nonnegative when
  the kernel rows decrease in the subscript.
* RCC rows (phat): right-complementary kernels, cumulative within one
  level; positive and decreasing on admissible meshes.

The DOC recursion mixes signs and its products multiply values spanning
many orders of magnitude on strongly graded meshes, so certification
builds accumulate in extended precision (80-bit where the platform has
it, exactly rounded ``math.fsum`` otherwise); pass ``compensated=False``
to trade a couple of digits for BLAS speed inside long solver runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import KernelTable

_LONG = np.longdouble if np.finfo(np.longdouble).eps < 1e-18 else None

__all__ = [
    "ModifiedKernelTable",
    "ComplementarySet",
    "doc_row_from_matrix",
    "doc_kernels",
    "dcc_kernels",
    "rcc_kernels",
    "build_complementary",
    "IdentityReport",
    "verify_identities",
]


@dataclass
class ModifiedKernelTable:
    """Kernel table with the diagonal scaled by (2 - sigma_min).

    ``matrix[i, j]`` holds the modified entry for level n = i+1 and
    k = j+1 (subscript i-j); column slices of this lower-triangular
    layout are what the DOC recursion consumes.
    """

    base: KernelTable
    sigma_min: float = 0.0
    matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.sigma_min < 2.0:
            raise ValueError(f"sigma_min must lie in [0, 2), got {self.sigma_min}")
        m = self.base.dense_lower()
        idx = np.arange(m.shape[0])
        m[idx, idx] *= 2.0 - self.sigma_min
        self.matrix = m

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def row(self, n: int) -> np.ndarray:
        """Modified row n in subscript order."""
        return self.matrix[n - 1, :n][::-1].copy()


def doc_row_from_matrix(m: np.ndarray, n: int, *,
                        compensated: bool = True) -> np.ndarray:
    """DOC row at level n for a lower-triangular modified-kernel matrix.

    With ``compensated`` the recursion runs in extended precision (or
    exactly rounded sums when the platform has no wide float), which the
    identity certificates need on strongly graded meshes.
    """
    if compensated and _LONG is not None:
        m = m.astype(_LONG, copy=False)
    diag = np.diag(m)[:n]
    if np.any(diag == 0.0):
        raise ValueError("modified table has a zero diagonal entry")
    use_fsum = compensated and _LONG is None
    x = np.empty(n, dtype=m.dtype)
    x[0] = 1.0 / diag[n - 1]
    for k in range(n - 1, 0, -1):
        col = m[k : n, k - 1][::-1]  # a_{j-k}^{(j)} for j = n..k+1
        terms = x[: n - k] * col
        s = math.fsum(terms) if use_fsum else terms.sum()
        x[n - k] = -s / diag[k - 1]
    return x


def doc_kernels(mod: ModifiedKernelTable, n: int, *,
                compensated: bool = True) -> np.ndarray:
    """DOC row at level n, in subscript order theta_0..theta_{n-1}.

    theta_0 = 1/a_0^{(n)}; the remaining entries follow from the backward
    recursion that enforces orthogonality against the kernel columns.
    """
    if n < 1 or n > mod.n:
        raise ValueError(f"level n={n} outside 1..{mod.n}")
    return doc_row_from_matrix(mod.matrix, n, compensated=compensated)


def dcc_kernels(thetas: list[np.ndarray]) -> np.ndarray:
    """DCC row at level n = len(thetas) from the DOC rows of levels 1..n.

    Entry i (= n-k) sums theta_{j-k}^{(j)} over levels j = k..n, i.e. one
    column of the DOC triangle.
    """
    n = len(thetas)
    row = np.empty(n, dtype=thetas[-1].dtype)
    for i in range(n):
        k = n - i
        row[i] = np.sum(
            np.array([thetas[j - 1][j - k] for j in range(k, n + 1)],
                     dtype=row.dtype)
        )
    return row


def rcc_kernels(theta_row: np.ndarray) -> np.ndarray:
    """RCC row at one level: cumulative sums of that level's DOC row."""
    return np.cumsum(theta_row)


@dataclass
class ComplementarySet:
    """DOC/DCC/RCC rows 1..N for one modified kernel table."""

    source: ModifiedKernelTable
    theta: list[np.ndarray]
    p: list[np.ndarray]
    phat: list[np.ndarray]

    @property
    def n(self) -> int:
        return len(self.theta)


def build_complementary(mod: ModifiedKernelTable, up_to: int | None = None, *,
                        compensated: bool = True) -> ComplementarySet:
    """Assemble DOC, DCC and RCC rows level by level.

    The DCC row at level n is the previous row plus the new DOC row, so
    the whole set costs one DOC recursion per level.
    """
    n_max = mod.n if up_to is None else up_to
    theta: list[np.ndarray] = []
    p: list[np.ndarray] = []
    phat: list[np.ndarray] = []
    for n in range(1, n_max + 1):
        th = doc_kernels(mod, n, compensated=compensated)
        row = np.empty(n, dtype=th.dtype)
        row[0] = th[0]
        if n > 1:
            row[1:] = p[-1] + th[1:]
        theta.append(th)
        p.append(row)
        phat.append(np.cumsum(th))
    return ComplementarySet(source=mod, theta=theta, p=p, phat=phat)


@dataclass(frozen=True)
class IdentityReport:
    """Max absolute residuals of the four convolution identities."""

    residuals: dict
    tol: float
    checked: int

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values())

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol

    def to_dict(self) -> dict:
        return {
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "max_residual": float(self.max_residual),
            "tolerance": self.tol,
            "checked_pairs": self.checked,
            "passed": bool(self.passed),
        }


def verify_identities(cs: ComplementarySet, tol: float = 1e-11,
                      exhaustive_up_to: int = 200, samples_per_level: int = 32,
                      seed: int = 0) -> IdentityReport:
    """Residuals of the orthogonality and complementary identities.

    For every level n the sums over j = k..n are checked against the
    Kronecker delta (DOC, both orders) and against 1 (DCC and RCC).  All
    k are checked for n <= ``exhaustive_up_to``; beyond that a random
    subset of k per level keeps the cost out of the cubic regime.
    """
    dtype = cs.theta[-1].dtype
    fsum = math.fsum if dtype == np.float64 else (lambda xs: xs.sum())
    m = cs.source.matrix.astype(dtype, copy=False)
    nn = cs.n
    # dense triangles keyed like the kernel matrix: X[j-1, k-1] = x_{j-k}^{(j)}
    th_m = np.zeros((nn, nn), dtype=dtype)
    ph_m = np.zeros((nn, nn), dtype=dtype)
    for i in range(nn):
        th_m[i, : i + 1] = cs.theta[i][::-1]
        ph_m[i, : i + 1] = cs.phat[i][::-1]
    rng = np.random.default_rng(seed)
    worst = {"doc-left": 0.0, "doc-right": 0.0, "dcc": 0.0, "rcc": 0.0}
    checked = 0
    for n in range(1, nn + 1):
        if n <= exhaustive_up_to:
            ks = range(1, n + 1)
        else:
            ks = np.unique(
                np.concatenate([[1, n], rng.integers(1, n + 1, samples_per_level)])
            )
        th_n = cs.theta[n - 1]
        p_n = cs.p[n - 1]
        arow_rev = m[n - 1, :n][::-1]  # arow_rev[n-j] = a_{n-j}^{(n)}
        for k in ks:
            col = m[k - 1 : n, k - 1][::-1]  # a_{j-k}^{(j)}, j = n..k
            delta = 1.0 if k == n else 0.0
            s = fsum(th_n[: n - k + 1] * col)
            worst["doc-left"] = max(worst["doc-left"], float(abs(s - delta)))
            s = fsum(arow_rev[: n - k + 1] * th_m[k - 1 : n, k - 1][::-1])
            worst["doc-right"] = max(worst["doc-right"], float(abs(s - delta)))
            s = fsum(p_n[: n - k + 1] * col)
            worst["dcc"] = max(worst["dcc"], float(abs(s - 1.0)))
            s = fsum(arow_rev[: n - k + 1] * ph_m[k - 1 : n, k - 1][::-1])
            worst["rcc"] = max(worst["rcc"], float(abs(s - 1.0)))
            checked += 1
    return IdentityReport(residuals=worst, tol=tol, checked=checked)
