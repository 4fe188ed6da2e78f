"""Ready-made problems used by the demos, experiment configs and tests."""

from __future__ import annotations

import numpy as np

from .forward import ForwardProblem, constant_vector, exact_crack_solution, radial_unit_field
from .geometry import DomainSpec, preset_shapes
from .material import AnisoTensor, PiecewiseMaterial

CRACK_TENSOR = AnisoTensor(4.8, 3.3, 1.2, 2.1, 0.3, 0.2)
STAR5_BASE = AnisoTensor(4.0, 3.0, 1.0, 2.0, 0.2, 0.1)
STAR5_GAMMA3 = 0.80480727808626

ROUNDED_TRUTH = (
    AnisoTensor(6, 5, 4, 1, 1, 1),
    AnisoTensor(5, 4, 3, 1, 1, 1),
    AnisoTensor(4, 3, 2, 1, 1, 1),
)
ROUNDED_INIT = AnisoTensor(5, 4, 3, 1, 1, 1)
STAR3_TRUTH = (AnisoTensor(8, 6, 4, 1, 1, 1), AnisoTensor(4, 3, 2, 1, 0.5, 0.5))
STAR3_INIT = AnisoTensor(6, 4.5, 3, 0.75, 0.75, 0.75)


def crack_problem(M: int = 64, order: int = 1, tensor: AnisoTensor = CRACK_TENSOR):
    """Slit domain with a single material and the exact crack field as boundary data.

    Returns ``(problem, exact_field)``.
    """
    shape = preset_shapes("crack3piece")
    domain = DomainSpec(shape, (shape.phi_min,))
    material = PiecewiseMaterial.from_domain(domain, [tensor])
    exact = exact_crack_solution(tensor)
    pb = ForwardProblem(domain, material, exact.boundary_data(shape), None, M, order, "crack")
    return pb, exact.field(shape)


def star5_problem(M: int = 128, order: int = 1) -> ForwardProblem:
    """Four sectors with tensors 10a, 5a, a, 5a, unit body force and unit boundary data."""
    shape = preset_shapes("star5")
    domain = DomainSpec(shape, tuple(k * np.pi / 2 for k in range(4)))
    tensors = [STAR5_BASE.scaled(c) for c in (10.0, 5.0, 1.0, 5.0)]
    material = PiecewiseMaterial.from_domain(domain, tensors)
    one = constant_vector(1.0, 1.0)
    return ForwardProblem(domain, material, one, one, M, order, "star5")


def rounded_square_problem(M: int = 128, order: int = 1) -> ForwardProblem:
    """Three sectors (0, 3pi/4, 5pi/4), unit boundary data and radial unit body force."""
    shape = preset_shapes("roundedSquare")
    domain = DomainSpec(shape, (0.0, 0.75 * np.pi, 1.25 * np.pi))
    material = PiecewiseMaterial.from_domain(domain, list(ROUNDED_TRUTH))
    return ForwardProblem(
        domain, material, constant_vector(1.0, 1.0), radial_unit_field, M, order, "roundedSquare"
    )


def star3_problem(M: int = 128, order: int = 1) -> ForwardProblem:
    """Two sectors split at 0 and pi, unit boundary data and unit body force."""
    shape = preset_shapes("star3")
    domain = DomainSpec(shape, (0.0, np.pi))
    material = PiecewiseMaterial.from_domain(domain, list(STAR3_TRUTH))
    one = constant_vector(1.0, 1.0)
    return ForwardProblem(domain, material, one, one, M, order, "star3")


def uniform_material(pb: ForwardProblem, m: int, tensor: AnisoTensor) -> PiecewiseMaterial:
    """``m`` equal sectors over the range of ``pb``, all holding ``tensor``."""
    shape = pb.shape
    return PiecewiseMaterial.uniform_sectors(shape.phi_min, shape.span, [tensor] * m)


def resample_material(material: PiecewiseMaterial, edges) -> PiecewiseMaterial:
    """Represent ``material`` on the sectors given by ``edges`` (midpoint sampling)."""
    edges = np.asarray(edges, dtype=float)
    mids = 0.5 * (edges[:-1] + edges[1:])
    coef = material.coefficients_at(mids)
    return PiecewiseMaterial.from_vector(edges, coef.T.reshape(-1))
