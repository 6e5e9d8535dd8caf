"""Fourier pseudo-spectral discretization of the periodic square (0, 2pi)^2.

Fields are real ndarrays of shape (nx, ny) sampled at x_i = 2 pi i / nx,
y_j = 2 pi j / ny.  Real-to-complex transforms are used throughout; the
zero-mode multiplier of the Laplacian is exactly zero so constants stay
constants.  No dealiasing is applied (plain collocation at 32^2).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SpectralGrid",
    "laplacian",
    "gradient",
    "inner",
    "norm",
    "energy",
    "nonlinear_cn",
    "save_field",
    "load_field",
    "field_to_csv",
    "field_from_csv",
]

_MAGIC = b"F2D1"


def _check_power_of_two(n: int, name: str):
    if n < 2 or n & (n - 1):
        raise ValueError(f"{name} must be a power of two >= 2, got {n}")


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform nx-by-ny collocation grid with cached wavenumber multipliers."""

    nx: int = 32
    ny: int = 32
    kx: np.ndarray = field(init=False, repr=False, compare=False)
    ky: np.ndarray = field(init=False, repr=False, compare=False)
    lap_mult: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _check_power_of_two(self.nx, "nx")
        _check_power_of_two(self.ny, "ny")
        kx = np.fft.fftfreq(self.nx, d=1.0 / self.nx)
        ky = np.fft.rfftfreq(self.ny, d=1.0 / self.ny)
        object.__setattr__(self, "kx", kx)
        object.__setattr__(self, "ky", ky)
        object.__setattr__(
            self, "lap_mult", -(kx[:, None] ** 2 + ky[None, :] ** 2)
        )

    @property
    def cell_area(self) -> float:
        return (2.0 * np.pi / self.nx) * (2.0 * np.pi / self.ny)

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        x = 2.0 * np.pi * np.arange(self.nx) / self.nx
        y = 2.0 * np.pi * np.arange(self.ny) / self.ny
        return np.meshgrid(x, y, indexing="ij")

    def check(self, f: np.ndarray, name: str = "field"):
        f = np.asarray(f)
        if f.shape != (self.nx, self.ny):
            raise ValueError(
                f"{name} has shape {f.shape}, expected {(self.nx, self.ny)}"
            )
        if not np.all(np.isfinite(f)):
            raise ValueError(f"{name} contains non-finite values")
        return np.asarray(f, dtype=float)


def laplacian(grid: SpectralGrid, f: np.ndarray) -> np.ndarray:
    """Spectral Laplacian; exact on resolvable trigonometric modes."""
    f = grid.check(f)
    return np.fft.irfft2(grid.lap_mult * np.fft.rfft2(f), s=(grid.nx, grid.ny))


def gradient(grid: SpectralGrid, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Spectral gradient (f_x, f_y); Nyquist derivative zeroed (symmetric convention)."""
    f = grid.check(f)
    fh = np.fft.rfft2(f)
    kx = grid.kx.copy()
    kx[grid.nx // 2] = 0.0
    ky = grid.ky.copy()
    ky[grid.ny // 2] = 0.0
    fx = np.fft.irfft2(1j * kx[:, None] * fh, s=(grid.nx, grid.ny))
    fy = np.fft.irfft2(1j * ky[None, :] * fh, s=(grid.nx, grid.ny))
    return fx, fy


def inner(grid: SpectralGrid, f: np.ndarray, g: np.ndarray) -> float:
    """Discrete L2 inner product h_x h_y sum f g."""
    f = grid.check(f, "f")
    g = grid.check(g, "g")
    return grid.cell_area * float((f * g).sum())


def norm(grid: SpectralGrid, f: np.ndarray) -> float:
    return float(np.sqrt(max(inner(grid, f, f), 0.0)))


def energy(grid: SpectralGrid, f: np.ndarray, eps2: float) -> float:
    """Ginzburg-Landau energy: integral of eps^2/2 |grad f|^2 + (f^2-1)^2/4.

    The squared-gradient term is summed in frequency space as the pairing
    (f, -Laplacian f), which makes it exactly compatible with the
    Laplacian used by the time steppers (the two forms differ only in the
    Nyquist mode and agree on resolved fields).
    """
    f = grid.check(f)
    grad2 = inner(grid, f, -laplacian(grid, f))
    well = 0.25 * grid.cell_area * float(((f * f - 1.0) ** 2).sum())
    return 0.5 * eps2 * max(grad2, 0.0) + well


def nonlinear_cn(fa: np.ndarray, fb: np.ndarray) -> np.ndarray:
    """Second-order midpoint form of the double-well derivative f^3 - f.

    Satisfies the discrete chain rule: pairing with fa - fb telescopes the
    potential (fa^2-1)^2/4 - (fb^2-1)^2/4 exactly, pointwise.
    """
    fa = np.asarray(fa, dtype=float)
    fb = np.asarray(fb, dtype=float)
    mid = 0.5 * (fa + fb)
    return 0.5 * (fa * fa + fb * fb) * mid - mid


def save_field(path, f: np.ndarray):
    """Write a field as magic + uint32 nx, ny + row-major little-endian float64."""
    f = np.asarray(f, dtype=float)
    if f.ndim != 2:
        raise ValueError("field must be 2-d")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", f.shape[0], f.shape[1]))
        fh.write(np.ascontiguousarray(f, dtype="<f8").tobytes())


def load_field(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path} is not a field file")
        nx, ny = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(8 * nx * ny), dtype="<f8")
    return data.reshape(nx, ny).astype(float)


def field_to_csv(path, f: np.ndarray):
    np.savetxt(path, np.asarray(f, dtype=float), delimiter=",", fmt="%.17g")


def field_from_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)
