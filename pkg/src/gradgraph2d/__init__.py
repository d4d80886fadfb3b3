"""Numerical verification toolkit for gradient-graph equations in the plane."""

from .exceptions import *  # noqa: F401,F403
from .expansion import ExpansionCoeffs, evaluate_expansion
from .operators import (Branch, GeneralCoeffs, Sym2, TauParams, admissibility,
                        arctan_identity_gap, df_matrix, df_tau, eigen_sym2, f_tau,
                        general_normalize, partner_deviation, q_matrix,
                        solve_partner_eigenvalue, tau_params)
from .solutions import (AffineFrame, ExteriorSolution, RadialProfile, RingSamples,
                        ma_radial_exact, quadratic, radial_ode_solution, radial_ode_solve,
                        sample_rings, sl_radial_exact, three_term_radial, transform)

__version__ = "0.1.0"
