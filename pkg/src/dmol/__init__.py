"""Direct method of lines for anisotropic elasticity on star-shaped domains.

The forward solver discretises the angle by finite elements and solves the
radial ODE system exactly through a quadratic eigenvalue problem, which keeps
corner and interface singularities in closed form. On top of it sits an
energy-functional inversion that recovers piecewise-constant anisotropic
tensors from one full-field measurement.
"""

from .errors import (
    ConfigurationError,
    DegenerateMaterial,
    DMOLError,
    IllConditionedModalBasis,
    NumericalError,
)
from .forward import ForwardProblem, convergence_study, exact_crack_solution, solve_forward
from .geometry import BoundaryShape, DomainSpec, preset_shapes
from .material import AnisoTensor, PiecewiseMaterial

__version__ = "0.1.0"

__all__ = [
    "AnisoTensor",
    "BoundaryShape",
    "ConfigurationError",
    "DMOLError",
    "DegenerateMaterial",
    "DomainSpec",
    "ForwardProblem",
    "IllConditionedModalBasis",
    "NumericalError",
    "PiecewiseMaterial",
    "convergence_study",
    "exact_crack_solution",
    "preset_shapes",
    "solve_forward",
]
