import numpy as np
import pytest

from dmol.forward import ForwardProblem, constant_vector, solve_forward
from dmol.norms import SeparableField, boundary_functionals, energy_form, energy_norms, h1_norm_sq, h1_relative_error
from dmol.problems import crack_problem, star5_problem

from conftest import random_spd_tensor


def _const_field(shape, c):
    c = np.asarray(c, dtype=complex)

    def v(phi):
        return np.repeat(c[:, None], np.size(phi), axis=1)

    def dv(phi):
        return np.zeros((2, np.size(phi)), dtype=complex)

    return SeparableField(shape, [(0.0 + 0j, v, dv)])


def _random_solution(rng, M=8):
    pb = star5_problem(M, 1)
    mat = type(pb.material).from_domain(pb.domain, [random_spd_tensor(rng) for _ in range(4)])
    coeffs = rng.normal(size=(2, 3))

    def f(phi):
        return np.stack([c[0] + c[1] * np.cos(phi) + c[2] * np.sin(2 * phi) for c in coeffs])

    return solve_forward(ForwardProblem(pb.domain, mat, f, None, M, 1, "rand")), mat


def test_self_error_is_zero(star5_small_solution):
    assert h1_relative_error(star5_small_solution, star5_small_solution) < 1e-12


def test_rigid_translation():
    pb = star5_problem(8, 1)
    v = _const_field(pb.shape, [1.5, -2.0])
    e, star = energy_norms(v, v, pb.material)
    assert abs(e) < 1e-14
    psi1, psi2, _ = boundary_functionals(v)
    # perimeter by an independent rule
    phi = np.linspace(0, 2 * np.pi, 200001)
    r, rp = pb.shape.radius(phi), pb.shape.radius_prime(phi)
    length = np.trapezoid(np.hypot(r, rp), phi) if hasattr(np, "trapezoid") else np.trapz(np.hypot(r, rp), phi)
    assert psi1 == pytest.approx(1.5 * length, rel=1e-8)
    assert psi2 == pytest.approx(-2.0 * length, rel=1e-8)
    assert star > 0


def test_h1_norm_of_constant():
    pb = star5_problem(8, 1)
    # ||c||^2 = |c|^2 * area, area = 1/2 int r^2 = 1/2 * 2 pi * 2
    assert h1_norm_sq(_const_field(pb.shape, [1.0, 0.0])) == pytest.approx(2 * np.pi, rel=1e-12)


def test_energy_symmetric_and_nonnegative(rng):
    for _ in range(5):
        w, mat = _random_solution(rng)
        v, _ = _random_solution(rng)
        v.shape  # same geometry
        assert energy_form(w, v, mat) == pytest.approx(energy_form(v, w, mat), rel=1e-10, abs=1e-12)
    for _ in range(100):
        v, mat = _random_solution(rng, M=4)
        assert energy_form(v, v, mat) >= 0


def test_energy_equals_quadrature(rng):
    from dmol.inverse import MeasurementGrid, _area_weights, _quad_form, _sector_tables, _strain

    v, mat = _random_solution(rng, M=8)
    grid = MeasurementGrid.build(v.shape, 128, 6, -60.0, 512, 6, v.mesh.nodes)
    g = v.gradient_grid(grid.rho, grid.phi)
    e = _strain(g)
    _, c = _sector_tables(mat, grid.phi)
    W = _area_weights(v.shape, grid)
    quad = float(np.sum(W * _quad_form(c[None], e, e)))
    assert energy_form(v, v, mat) == pytest.approx(quad, rel=1e-6)


def test_crack_h1_error_decreases():
    errs = []
    for M in (16, 32):
        pb, exact = crack_problem(M, 1)
        errs.append(h1_relative_error(solve_forward(pb), exact))
    assert errs[1] < errs[0]
    assert 0.5 < np.log2(errs[0] / errs[1]) < 1.5
