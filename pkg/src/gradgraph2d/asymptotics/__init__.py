"""Coefficient extraction, flux formulas and symmetry checks for the expansion at infinity."""

from .fit import (AsymptoticExpansion, fit_A, fit_beta_gamma_d, fit_d1_d2, linearization_check,
                  remainder_check)
from .flux import (FluxReport, FluxResult, FormulaId, flux_d, flux_independence, log_flux_identity,
                   quadrature_selftests)
from .symmetry import RadialityReport, SymmetryReport, radiality_check, reflections, symmetry_check

__all__ = [
    "AsymptoticExpansion",
    "fit_A",
    "fit_beta_gamma_d",
    "fit_d1_d2",
    "remainder_check",
    "linearization_check",
    "FormulaId",
    "FluxResult",
    "FluxReport",
    "flux_d",
    "flux_independence",
    "log_flux_identity",
    "quadrature_selftests",
    "SymmetryReport",
    "RadialityReport",
    "reflections",
    "symmetry_check",
    "radiality_check",
]
