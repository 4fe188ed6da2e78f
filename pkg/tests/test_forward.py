import numpy as np
import pytest

from dmol.errors import DegenerateMaterial
from dmol.forward import (
    ErrorReport,
    ForwardProblem,
    constant_vector,
    convergence_study,
    exact_crack_solution,
    gamma_index,
    quartic_residual,
    solve_forward,
)
from dmol.geometry import DomainSpec, circle
from dmol.material import AnisoTensor, PiecewiseMaterial, isotropic_tensor, stress_of_strain
from dmol.problems import CRACK_TENSOR, crack_problem, star5_problem

from conftest import random_spd_tensor


def test_constant_boundary_data_reproduced(rng):
    for _ in range(3):
        pb = star5_problem(16, 1)
        tensors = [random_spd_tensor(rng) for _ in range(4)]
        mat = PiecewiseMaterial.from_domain(pb.domain, tensors)
        c = rng.normal(size=2)
        pb = ForwardProblem(pb.domain, mat, constant_vector(*c), None, 16, 1, "const")
        sol = solve_forward(pb)
        u = sol.evaluate_grid(np.linspace(-6.0, 0.0, 7), np.linspace(0.0, 2 * np.pi, 13))
        assert np.allclose(u[0], c[0], atol=1e-9) and np.allclose(u[1], c[1], atol=1e-9)


@pytest.mark.parametrize("order", [1, 2])
def test_dirichlet_trace(order):
    pb, _ = crack_problem(32, order)
    sol = solve_forward(pb)
    f = pb.dirichlet(sol.mesh.dof_positions)
    u = sol.evaluate(np.zeros(sol.mesh.dof_positions.size), sol.mesh.dof_positions)
    assert np.abs(u - f).max() < 1e-9


def test_disk_body_force_matches_closed_form():
    # u = (1 - r^2)/8 e_x solves -div sigma = e_x for lambda = mu = 1, u = 0 on r = 1
    shape = circle()
    dom = DomainSpec(shape, (0.0,))
    mat = PiecewiseMaterial.from_domain(dom, [isotropic_tensor(1.0, 1.0)])
    pb = ForwardProblem(dom, mat, constant_vector(0.0, 0.0), constant_vector(1.0, 0.0), 32, 2, "disk")
    sol = solve_forward(pb)
    rho = np.array([-5.0, -1.0, -0.3])
    phi = np.array([0.2, 1.9, 4.0])
    u = sol.evaluate_grid(rho, phi)
    r2 = np.exp(2 * rho)[:, None]
    assert np.allclose(u[0], (1 - r2) / 8 * np.ones_like(phi), atol=1e-6)
    assert np.abs(u[1]).max() < 1e-6


def test_quartic_roots():
    for t in (CRACK_TENSOR, AnisoTensor(10, 2, 3, 1, 0.5, -0.4)):
        sol = exact_crack_solution(t)
        assert np.all(sol.mu.imag > 0)
        assert np.abs(quartic_residual(sol)).max() < 1e-12


def test_isotropic_crack_is_degenerate():
    # isotropy gives the double root i
    with pytest.raises(DegenerateMaterial):
        exact_crack_solution(isotropic_tensor(1.0, 1.0))


def test_crack_field_scales_like_sqrt_r(rng):
    sol = exact_crack_solution(CRACK_TENSOR)
    r = rng.uniform(0.01, 1.0, 20)
    phi = rng.uniform(-3.0, 3.0, 20)
    x, y = r * np.cos(phi), r * np.sin(phi)
    ratio = sol.displacement(2 * x, 2 * y) / sol.displacement(x, y)
    assert np.allclose(ratio, np.sqrt(2.0), rtol=1e-10)


def _crack_stress(sol, x, y):
    g = sol.gradient(x, y)
    return np.array(stress_of_strain(sol.tensor, g[0, 0], g[1, 1], 0.5 * (g[0, 1] + g[1, 0])))


def test_crack_faces_are_traction_free():
    sol = exact_crack_solution(CRACK_TENSOR)
    x = -np.array([0.01, 0.1, 0.5, 1.0])
    for side in (1.0, -1.0):
        s11, s22, s12 = _crack_stress(sol, x, side * 1e-13 * np.ones_like(x))
        assert np.abs(s22).max() < 1e-6 * np.abs(s11).max()
        assert np.abs(s12).max() < 1e-6 * np.abs(s11).max()


def test_crack_field_is_in_equilibrium(rng):
    sol = exact_crack_solution(CRACK_TENSOR)
    h = 1e-5
    for _ in range(10):
        r = rng.uniform(0.2, 1.0)
        phi = rng.uniform(-2.5, 2.5)
        x, y = r * np.cos(phi), r * np.sin(phi)
        dx = (_crack_stress(sol, x + h, y) - _crack_stress(sol, x - h, y)) / (2 * h)
        dy = (_crack_stress(sol, x, y + h) - _crack_stress(sol, x, y - h)) / (2 * h)
        assert abs(dx[0] + dy[2]) < 1e-6 and abs(dx[2] + dy[1]) < 1e-6


def test_crack_gradient_matches_differences(rng):
    sol = exact_crack_solution(CRACK_TENSOR)
    h = 1e-6
    for _ in range(20):
        r = rng.uniform(0.1, 1.0)
        phi = rng.uniform(-2.5, 2.5)
        x, y = r * np.cos(phi), r * np.sin(phi)
        fd = np.stack(
            [
                (sol.displacement(x + h, y) - sol.displacement(x - h, y)) / (2 * h),
                (sol.displacement(x, y + h) - sol.displacement(x, y - h)) / (2 * h),
            ],
            axis=1,
        )
        assert np.allclose(sol.gradient(x, y), fd, rtol=1e-6, atol=1e-8)


def test_crack_modal_solution_is_singular():
    pb, _ = crack_problem(64, 1)
    sol = solve_forward(pb)
    assert gamma_index(sol, 3) == pytest.approx(0.5, abs=1e-3)


def test_order_formula():
    rep = ErrorReport([16, 32], [1e-2, 2.5e-3], [0.1, 0.05])
    assert rep.eig_order == [None, pytest.approx(2.0)]
    assert rep.h1_order == [None, pytest.approx(1.0)]


def test_convergence_study_exact_reference(tmp_path):
    pb, exact = crack_problem(16, 1)
    rep = convergence_study(pb, [16, 32], 1, reference="exact", exact=exact)
    assert rep.gamma_ref == pytest.approx(0.5)
    assert rep.eig_error[1] < rep.eig_error[0]
    assert rep.h1_order[1] == pytest.approx(np.log2(rep.h1_rel[0] / rep.h1_rel[1]))
    rep.write_csv(tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "M,eig_error,eig_order,h1_rel,h1_order"
    assert lines[1].split(",")[2] == "" and lines[1].split(",")[4] == ""


def test_convergence_rejects_unsorted_meshes():
    pb, exact = crack_problem(16, 1)
    with pytest.raises(ValueError):
        convergence_study(pb, [32, 16], 1, exact=exact)


def test_solve_counter():
    from dmol.forward import SolveCounter

    c = SolveCounter()
    solve_forward(star5_problem(8, 1), counter=c)
    solve_forward(star5_problem(8, 1), counter=c)
    assert c.calls == 2
