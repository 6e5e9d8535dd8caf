"""Nonuniform time meshes and step-ratio admissibility rules.

Mesh kinds
----------
uniform    equal steps on [0, T]
graded     t_k = T (k/N)^gamma, clustering steps near t = 0
composite  graded head on [0, T0] followed by normalized random steps
random     all steps drawn uniformly and normalized to reach T

A mesh is admissible for the kernel certification machinery when each
step ratio r_{k+1} = tau_{k+1}/tau_k stays above an admissibility curve
(``rstar`` is the proven sufficient bound, ``rg`` the weaker empirical
one).  ``check_ratio_condition`` reports the first violation; it never
raises, because the bound is sufficient rather than necessary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TimeMesh",
    "MeshSpec",
    "RatioReport",
    "build_mesh",
    "rstar",
    "rg",
    "check_ratio_condition",
]

_RATIO_RTOL = 1e-14


@dataclass(frozen=True)
class TimeMesh:
    """Strictly increasing time levels t_0 = 0 < t_1 < ... < t_N = T.

    ``steps[i]`` is tau_{i+1} = t_{i+1} - t_i and ``ratios[i]`` is
    r_{i+2} = tau_{i+2}/tau_{i+1}, so ``ratios`` covers k = 2..N.
    """

    levels: np.ndarray
    steps: np.ndarray
    ratios: np.ndarray

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        if lv.ndim != 1 or lv.size < 2:
            raise ValueError("mesh needs at least levels t_0 and t_1")
        if lv[0] != 0.0:
            raise ValueError(f"t_0 must be 0, got {lv[0]}")
        if not np.all(np.isfinite(lv)):
            raise ValueError("mesh levels must be finite")
        if np.any(np.diff(lv) <= 0.0):
            k = int(np.argmax(np.diff(lv) <= 0.0)) + 1
            raise ValueError(f"levels not strictly increasing at k={k}")
        if np.any(self.steps <= 0.0):
            raise ValueError("every step must be positive")
        expect = self.steps[1:] / self.steps[:-1]
        if self.ratios.size != expect.size or np.any(
            np.abs(self.ratios - expect) > _RATIO_RTOL * np.abs(expect)
        ):
            raise ValueError("step ratios inconsistent with steps")

    @classmethod
    def from_levels(cls, levels) -> TimeMesh:
        lv = np.asarray(levels, dtype=float)
        steps = np.diff(lv)
        if np.any(steps <= 0.0):
            k = int(np.argmax(steps <= 0.0)) + 1
            raise ValueError(f"levels not strictly increasing at k={k}")
        return cls(levels=lv, steps=steps, ratios=steps[1:] / steps[:-1])

    @property
    def n(self) -> int:
        """Number of steps N."""
        return self.steps.size

    @property
    def horizon(self) -> float:
        return float(self.levels[-1])

    def to_rows(self):
        """Rows (k, t_k, tau_k, r_k) for CSV export; r_1 is empty."""
        out = []
        for k in range(1, self.n + 1):
            r = self.ratios[k - 2] if k >= 2 else None
            out.append((k, float(self.levels[k]), float(self.steps[k - 1]), r))
        return out


@dataclass(frozen=True)
class MeshSpec:
    """Parameters describing how to generate a mesh.

    ``t0``/``n0`` are the graded-head length and step count of composite
    meshes; when omitted they default to t0 = min(1/gamma, T) and
    n0 = ceil(N / (T + 1 - 1/gamma)).
    """

    kind: str
    n: int
    horizon: float
    gamma: float = 1.0
    t0: float | None = None
    n0: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "graded", "composite", "random"):
            raise ValueError(f"unknown mesh kind {self.kind!r}")
        if self.n < 1:
            raise ValueError(f"step count must be >= 1, got {self.n}")
        if not (self.horizon > 0.0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.gamma < 1.0:
            raise ValueError(f"grading exponent must be >= 1, got {self.gamma}")
        if self.t0 is not None and not (0.0 < self.t0 <= self.horizon):
            raise ValueError(f"t0 must lie in (0, T], got {self.t0}")
        if self.n0 is not None and not (1 <= self.n0 <= self.n):
            raise ValueError(f"n0 must lie in [1, N], got {self.n0}")

    @classmethod
    def from_dict(cls, d: dict) -> MeshSpec:
        known = {"kind", "n", "horizon", "gamma", "t0", "n0", "seed"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown mesh spec fields: {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ValueError(f"incomplete mesh spec: {exc}") from exc


def _graded_levels(n: int, horizon: float, gamma: float) -> np.ndarray:
    k = np.arange(n + 1, dtype=float)
    return horizon * (k / n) ** gamma


def build_mesh(spec: MeshSpec) -> TimeMesh:
    """Generate the mesh described by ``spec``; deterministic given the seed."""
    n, horizon = spec.n, spec.horizon
    if spec.kind == "uniform":
        return TimeMesh.from_levels(np.linspace(0.0, horizon, n + 1))
    if spec.kind == "graded":
        return TimeMesh.from_levels(_graded_levels(n, horizon, spec.gamma))
    if spec.kind == "random":
        if spec.seed is None:
            raise ValueError("random mesh requires a seed")
        s = np.random.default_rng(spec.seed).random(n)
        taus = horizon * s / s.sum()
        return TimeMesh.from_levels(np.concatenate([[0.0], np.cumsum(taus)]))

    # composite: graded head on [0, t0], random tail on [t0, T]
    t0 = spec.t0 if spec.t0 is not None else min(1.0 / spec.gamma, horizon)
    if spec.n0 is not None:
        n0 = spec.n0
    else:
        n0 = math.ceil(n / (horizon + 1.0 - 1.0 / spec.gamma))
    if not (0.0 < t0 <= horizon):
        raise ValueError(f"composite head length t0={t0} outside (0, T]")
    if n0 > n:
        raise ValueError(f"composite head steps n0={n0} exceed N={n}")
    head = _graded_levels(n0, t0, spec.gamma)
    n1 = n - n0
    if t0 == horizon:
        if n1 != 0:
            raise ValueError("composite head covers [0, T] but n0 < N")
        return TimeMesh.from_levels(head)
    if n1 == 0:
        raise ValueError("composite tail [t0, T] is nonempty but n0 == N")
    if spec.seed is None:
        raise ValueError("composite mesh requires a seed for the random tail")
    s = np.random.default_rng(spec.seed).random(n1)
    taus = (horizon - t0) * s / s.sum()
    return TimeMesh.from_levels(np.concatenate([head, t0 + np.cumsum(taus)]))


def rstar(r_prev: float, beta: float):
    """Proven lower admissibility bound on the next step ratio; always < 1."""
    from .kernels import rho

    r_prev = np.asarray(r_prev, dtype=float)
    if np.any(r_prev <= 0.0):
        raise ValueError("step ratio must be positive")
    if not 0.0 < beta < 1.0:
        raise ValueError(f"fractional index must lie in (0, 1), got {beta}")
    num = (2.0**beta - 1.0) * np.asarray(rho(r_prev, beta))
    den = np.asarray(rho(2.0 * r_prev, beta)) - np.asarray(rho(r_prev, beta))
    out = np.asarray((num / den) ** (1.0 / (1.0 - beta)))
    return float(out) if out.ndim == 0 else out


def rg(r_prev: float, beta: float):
    """Empirical (unproven but weaker) admissibility bound; always < 1."""
    r_prev = np.asarray(r_prev, dtype=float)
    if np.any(r_prev <= 0.0):
        raise ValueError("step ratio must be positive")
    out = 1.0 / (1.0 + 5.0 * r_prev ** (-beta))
    return float(out) if out.ndim == 0 else out


_RULES = {"rstar": rstar, "rg": rg}


@dataclass(frozen=True)
class RatioReport:
    """Outcome of scanning r_{k+1} >= rule(r_k) over a mesh."""

    rule: str
    passed: bool
    checked: int
    first_violation: int | None = None  # level index k+1 of the violating ratio
    required: float | None = None
    actual: float | None = None

    def describe(self) -> str:
        if self.passed:
            return f"ratio condition {self.rule}: pass ({self.checked} pairs)"
        return (
            f"ratio condition {self.rule}: r_{self.first_violation} = "
            f"{self.actual:.6g} < required {self.required:.6g}"
        )


def check_ratio_condition(mesh: TimeMesh, beta: float, rule: str = "rstar") -> RatioReport:
    """Scan adjacent step-ratio pairs against an admissibility rule.

    Passes iff r_{k+1} >= rule(r_k) for every k >= 2.  Advisory: returns a
    report rather than raising, since the bound is sufficient only.
    """
    try:
        fn = _RULES[rule]
    except KeyError:
        raise ValueError(f"unknown ratio rule {rule!r}; choose from {sorted(_RULES)}")
    ratios = mesh.ratios  # ratios[i] = r_{i+2}
    checked = 0
    for i in range(ratios.size - 1):
        required = fn(ratios[i], beta)
        checked += 1
        if ratios[i + 1] < required:
            return RatioReport(
                rule=rule,
                passed=False,
                checked=checked,
                first_violation=i + 3,
                required=float(required),
                actual=float(ratios[i + 1]),
            )
    return RatioReport(rule=rule, passed=True, checked=checked)
