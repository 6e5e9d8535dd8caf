"""Variable-step fractional time integration with certified gradient structure.

Kernel tables for the step-averaged fractional integral on arbitrary
meshes, their orthogonal/complementary families, numerical certification
of the discrete gradient structure and positive definiteness, and
energy-stable Crank-Nicolson solvers for fractional Allen-Cahn and
Klein-Gordon dynamics with adaptive stepping.
"""

from .compkernels import (
    ComplementarySet,
    IdentityReport,
    ModifiedKernelTable,
    build_complementary,
    dcc_kernels,
    doc_kernels,
    rcc_kernels,
    verify_identities,
)
from .dgscert import (
    DgsBreakdown,
    EigenReport,
    dgs_check,
    jacobi_eigenvalues,
    min_eigenvalue,
    quadratic_form,
    sigma_conjecture_scan,
    transformed_sequence,
)
from .kernels import (
    FracWeight,
    KernelTable,
    appendix_audit,
    gamma_fn,
    kernel_row_closed,
    kernel_row_quadrature,
    kernel_table,
    psi_chain,
    rho,
)
from .meshes import (
    MeshSpec,
    RatioReport,
    TimeMesh,
    build_mesh,
    check_ratio_condition,
    rg,
    rstar,
)
from .quadrature import QuadratureError, gauss_kronrod
from .solvers import (
    AdaptiveConfig,
    ConvergenceResult,
    EnergyRecord,
    FixedPointError,
    PowerForcing,
    SimulationConfig,
    SimulationResult,
    TfacStepper,
    TfkgStepper,
    adaptive_next_step,
    convergence_study,
    energy_tfac,
    energy_tfkg,
    run_simulation,
    tfac_manufactured,
    tfkg_manufactured,
)
from .spectral import SpectralGrid, energy, gradient, inner, laplacian, nonlinear_cn, norm

__version__ = "0.1.0"
