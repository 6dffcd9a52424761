"""Integral-formula solvers for dbar, dbar_b and the Poincare-Lelong equation
on convex model domains in C^2, with the quadrature, kernel and type-analysis
tools needed to verify them numerically."""
from ._accel import USE_NUMBA, set_threads
from .errors import (ConfigError, CRError, DataError, GeometryError, OutOfChartError,
                     PreconditionError, RangeError, ResolutionError, SingularityError,
                     UnsupportedSettingError)
from .geometry import (ModelDomain, Setting, d_alpha, eval_rho, grad_rho, make_domain,
                       outward_normal, unit_ball)
from .grids import build_boundary_grid, build_volume_grid
from .profiles import FType, check_f_conditions, exponential, f_inverse, monomial

__version__ = "0.1.0"

__all__ = [
    "USE_NUMBA", "set_threads", "ConfigError", "CRError", "DataError", "GeometryError",
    "OutOfChartError", "PreconditionError", "RangeError", "ResolutionError",
    "SingularityError", "UnsupportedSettingError", "ModelDomain", "Setting", "d_alpha",
    "eval_rho", "grad_rho", "make_domain", "outward_normal", "unit_ball",
    "build_boundary_grid", "build_volume_grid", "FType", "check_f_conditions", "exponential",
    "f_inverse", "monomial",
]
