"""Polynomial surrogate models for PDE learning on tensor Legendre grids.

Subpackage map: grids and cubature (grid), bases and surrogates (basis),
truncated operators (operators), Sobolev-cubature metrics (sobolev), loss
assembly (loss), coefficient solvers (solvers), benchmark problems
(problems) and the command line front end (cli).
"""

from .grid import (
    FaceGrid,
    LegendreRule1D,
    MultiIndexSet,
    ResourceLimitError,
    ResourceLimits,
    TensorGrid,
    boundary_grids,
    legendre_rule_1d,
    multi_index_set,
    tensor_grid,
)
from .basis import (
    BasisTransform,
    Surrogate,
    basis_transform,
    chebyshev_eval,
    interpolate,
    l2_project,
    lagrange_eval,
)
from .operators import OperatorCache, diff_matrix_1d, operator_cache

__all__ = [
    "BasisTransform",
    "FaceGrid",
    "LegendreRule1D",
    "MultiIndexSet",
    "OperatorCache",
    "ResourceLimitError",
    "ResourceLimits",
    "Surrogate",
    "TensorGrid",
    "basis_transform",
    "boundary_grids",
    "chebyshev_eval",
    "diff_matrix_1d",
    "interpolate",
    "l2_project",
    "lagrange_eval",
    "legendre_rule_1d",
    "multi_index_set",
    "operator_cache",
    "tensor_grid",
]

__version__ = "0.1.0"
