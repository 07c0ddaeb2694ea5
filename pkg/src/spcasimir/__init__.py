"""Sphere-plane Casimir interaction between metallic mirrors.

Exact energy, force and force gradient from the multipole scattering
formula with plasma-model (or perfect) mirrors, the proximity force
approximation references, and fits of the beyond-PFA correction factors.
"""

from __future__ import annotations

from .analysis import (
    BetaReport,
    FitResult,
    RhoRow,
    RhoTable,
    beta_report,
    constrained_quartic_fit,
    fit_arrays,
    rho_scan,
)
from .errors import (
    CasimirError,
    ConfigError,
    ConvergenceError,
    DomainError,
    FitError,
    SingularityError,
)
from .materials import CONSTANTS, GOLD, Material, PhysicalConstants, fresnel_amplitudes, permittivity
from .pfa import PfaEstimates, eta_factors, pfa_estimates, plane_plane_lifshitz, rho_factors
from .roundtrip import ABCD, Geometry, QuadratureSpec, RoundTripBlock, assemble_block, compute_ABCD
from .specfun import (
    AngularFunctions,
    MieCoefficients,
    ScaledValue,
    angular_functions,
    mie_coefficients,
    modified_spherical_bessel,
)
from .spectrum import (
    CasimirResult,
    LmaxChoice,
    adaptive_lmax,
    casimir_energy,
    casimir_force_gradient,
    log_det_one_minus,
    trace_derivatives,
)

__version__ = "0.1.0"

__all__ = [
    "ABCD",
    "AngularFunctions",
    "BetaReport",
    "CONSTANTS",
    "CasimirError",
    "CasimirResult",
    "ConfigError",
    "ConvergenceError",
    "DomainError",
    "FitError",
    "FitResult",
    "GOLD",
    "Geometry",
    "LmaxChoice",
    "Material",
    "MieCoefficients",
    "PfaEstimates",
    "PhysicalConstants",
    "QuadratureSpec",
    "RhoRow",
    "RhoTable",
    "RoundTripBlock",
    "ScaledValue",
    "SingularityError",
    "adaptive_lmax",
    "angular_functions",
    "assemble_block",
    "beta_report",
    "casimir_energy",
    "casimir_force_gradient",
    "compute_ABCD",
    "constrained_quartic_fit",
    "eta_factors",
    "fit_arrays",
    "fresnel_amplitudes",
    "log_det_one_minus",
    "mie_coefficients",
    "modified_spherical_bessel",
    "permittivity",
    "pfa_estimates",
    "plane_plane_lifshitz",
    "rho_factors",
    "rho_scan",
    "trace_derivatives",
]
