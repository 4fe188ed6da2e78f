import numpy as np
import pytest

from dmol.discretization import build_mesh
from dmol.forward import solve_forward
from dmol.inverse import (
    InverseConfig,
    InverseState,
    MeasurementField,
    MeasurementGrid,
    adam_step,
    compute_J0,
    compute_tv,
    gradient_J0,
    material_hash,
    run_inversion,
    synthesize_measurements,
    tv_subgradient,
)
from dmol.geometry import circle
from dmol.material import AnisoTensor, PiecewiseMaterial, isotropic_tensor
from dmol.problems import STAR3_INIT, resample_material, star3_problem, uniform_material

from conftest import random_spd_tensor

M_FWD = 32


@pytest.fixture(scope="module")
def small():
    """star3 with four sectors, data from the same P1 discretisation."""
    pb = star3_problem(M_FWD, 1)
    init = uniform_material(pb, 4, STAR3_INIT)
    truth = resample_material(pb.material, init.edges)
    pb = pb.with_material(truth)
    mesh = build_mesh(pb.domain, M_FWD, 1, extra_nodes=init.edges)
    grid = MeasurementGrid.build(pb.shape, 32, 4, -12.0, 128, 3, mesh.nodes)
    sol = solve_forward(pb)
    z = synthesize_measurements(truth, pb, 0.0, 0, grid=grid, solution=sol)
    return pb, init, truth, sol, z


def _with_gradients(z, g):
    return MeasurementField(z.grid, z.values, g, z.delta, z.seed, z.meta)


def test_zero_misfit(small):
    pb, _, truth, sol, z = small
    assert np.array_equal(z.values, sol.evaluate_grid(z.grid.rho, z.grid.phi))
    assert compute_J0(truth, sol, z) < 1e-16
    assert np.abs(gradient_J0(truth, sol, z)).max() == 0.0


def test_J0_nonnegative_and_quadratic(small, rng):
    pb, init, _, _, z = small
    for _ in range(5):
        a = PiecewiseMaterial.uniform_sectors(0.0, 2 * np.pi, [random_spd_tensor(rng) for _ in range(4)])
        a = PiecewiseMaterial.from_vector(init.edges, a.to_vector())
        sol = solve_forward(pb.with_material(a))
        J = compute_J0(a, sol, z)
        assert J >= 0
        gu = sol.gradient_grid(z.grid.rho, z.grid.phi)
        z2 = _with_gradients(z, gu + 2.0 * (z.gradients - gu))
        assert compute_J0(a, sol, z2) == pytest.approx(4 * J, rel=1e-12)


def test_cross_term_gradient_matches_independent_quadrature(small):
    # the a12 entries integrate du1/dx du2/dy of the data minus that of u
    pb, init, _, _, z_true = small
    a = init
    sol = solve_forward(pb.with_material(a))
    truth_sol = solve_forward(pb)
    grad = gradient_J0(a, sol, z_true).reshape(6, 4)
    # midpoint rule on a fine independent grid
    n_r, n_p = 4000, 4096
    rho = -25.0 + 25.0 * (np.arange(n_r) + 0.5) / n_r
    phi = 2 * np.pi * (np.arange(n_p) + 0.5) / n_p
    w = (25.0 / n_r) * (2 * np.pi / n_p) * np.exp(2 * rho)[:, None] * pb.shape.radius(phi)[None, :] ** 2
    gz = truth_sol.gradient_grid(rho, phi)
    gu = sol.gradient_grid(rho, phi)
    cross = (gz[0, 0] * gz[1, 1] - gu[0, 0] * gu[1, 1]) * w
    sector = np.minimum((phi // (np.pi / 2)).astype(int), 3)
    ref = np.array([cross[:, sector == t].sum() for t in range(4)])
    assert np.allclose(grad[3], ref, rtol=2e-3, atol=2e-3 * np.abs(ref).max())


def test_synthesis_noise_and_determinism(small):
    pb, _, truth, sol, z0 = small
    grid = z0.grid
    a = synthesize_measurements(truth, pb, 0.01, 7, grid=grid, solution=sol)
    b = synthesize_measurements(truth, pb, 0.01, 7, grid=grid, solution=sol)
    c = synthesize_measurements(truth, pb, 0.01, 8, grid=grid, solution=sol)
    assert np.array_equal(a.values, b.values) and np.array_equal(a.gradients, b.gradients)
    assert not np.array_equal(a.values, c.values)
    assert np.abs(a.values - z0.values).max() <= 0.01 * np.abs(z0.values).max()
    assert np.abs(a.gradients - z0.gradients).max() <= 0.01 * np.abs(z0.gradients).max()


def test_measurement_file_round_trip(small, tmp_path):
    pb, _, truth, sol, z = small
    z.save(tmp_path / "m.npz")
    back = MeasurementField.load(tmp_path / "m.npz")
    assert np.array_equal(back.values, z.values) and np.array_equal(back.gradients, z.gradients)
    assert np.array_equal(back.grid.phi, z.grid.phi)
    assert back.meta["truth_sha256"] == material_hash(truth)
    assert back.delta == 0.0 and back.seed == 0


def test_tv_two_sectors():
    a = PiecewiseMaterial.uniform_sectors(
        0.0, 2 * np.pi, [AnisoTensor(1, 1, 1, 0, 0, 0), AnisoTensor(2, 1, 1, 0, 0, 0)]
    )
    assert compute_tv(a, circle()) == pytest.approx(2.0)
    g = tv_subgradient(a, circle()).reshape(6, 2)
    assert g[0, 0] == pytest.approx(-2.0) and g[0, 1] == pytest.approx(2.0)
    assert np.all(g[1:] == 0)


def test_tv_constant_field():
    a = uniform_material(star3_problem(8), 5, STAR3_INIT)
    assert compute_tv(a, star3_problem(8).shape) == 0.0
    assert np.all(tv_subgradient(a, star3_problem(8).shape) == 0)


def test_tv_subgradient_matches_differences(rng):
    shape = star3_problem(8).shape
    for m in (2, 3, 7):
        edges = np.linspace(0.0, 2 * np.pi, m + 1)
        vec = PiecewiseMaterial.uniform_sectors(0.0, 2 * np.pi, [random_spd_tensor(rng) for _ in range(m)]).to_vector()
        g = tv_subgradient(PiecewiseMaterial.from_vector(edges, vec), shape)
        h = 1e-5
        for i in range(vec.size):
            e = np.zeros_like(vec)
            e[i] = h
            tp = compute_tv(PiecewiseMaterial.from_vector(edges, vec + e), shape)
            tm = compute_tv(PiecewiseMaterial.from_vector(edges, vec - e), shape)
            assert (tp - tm) / (2 * h) == pytest.approx(g[i], abs=1e-8)


def test_tv_is_positively_homogeneous(rng):
    shape = star3_problem(8).shape
    edges = np.linspace(0.0, 2 * np.pi, 5)
    vec = PiecewiseMaterial.uniform_sectors(0.0, 2 * np.pi, [random_spd_tensor(rng) for _ in range(4)]).to_vector()
    t1 = compute_tv(PiecewiseMaterial.from_vector(edges, vec), shape)
    # a uniform shift leaves the jumps unchanged, scaling multiplies them
    assert compute_tv(PiecewiseMaterial.from_vector(edges, vec + 0.0), shape) == pytest.approx(t1)
    assert compute_tv(PiecewiseMaterial.from_vector(edges, 3.0 * vec), shape) == pytest.approx(3.0 * t1)


def _cfg(init, **kw):
    return InverseConfig(m=init.m, init=init, **kw)


def test_adam_first_step_has_length_tau(rng):
    init = uniform_material(star3_problem(8), 4, STAR3_INIT)
    cfg = _cfg(init, tau0=1e-3)
    g = rng.normal(size=24)
    s1 = adam_step(InverseState.start(init), g, cfg)
    step = init.to_vector() - s1.vector
    assert np.allclose(np.abs(step), cfg.tau(1), rtol=1e-6)
    assert np.all(np.sign(step) == np.sign(g))


def test_adam_zero_gradient_is_a_fixed_point():
    init = uniform_material(star3_problem(8), 4, STAR3_INIT)
    s1 = adam_step(InverseState.start(init), np.zeros(24), _cfg(init))
    assert np.array_equal(s1.vector, init.to_vector())


def test_adam_relative_steps():
    init = uniform_material(star3_problem(8), 4, STAR3_INIT)
    cfg = _cfg(init, tau0=0.1, relative_steps=True)
    s1 = adam_step(InverseState.start(init), np.ones(24), cfg)
    assert np.allclose(init.to_vector() - s1.vector, cfg.tau(1) * init.to_vector(), rtol=1e-6)


def test_spd_projection_after_step():
    init = uniform_material(star3_problem(8), 2, isotropic_tensor(0.0, 0.01))
    cfg = _cfg(init, tau0=1.0)
    s1 = adam_step(InverseState.start(init), np.ones(12), cfg)
    for t in s1.a_h.tensors:
        assert np.linalg.eigvalsh(t.matrix).min() >= cfg.spd_floor * (1 - 1e-9)


def test_truth_as_initial_guess_stops_immediately(small):
    pb, _, truth, _, z = small
    cfg = _cfg(truth, M_forward=M_FWD, order_forward=1, max_iter=50)
    res = run_inversion(cfg, pb, z, truth=truth)
    assert len(res.history) <= 2
    assert res.forward_solves == len(res.history)
    assert res.history[0]["l1_rel_error"] == 0.0


def test_inversion_is_deterministic_and_reduces_J(small, tmp_path):
    pb, init, truth, _, z = small
    cfg = _cfg(init, M_forward=M_FWD, order_forward=1, max_iter=8, relative_steps=True, tau0=0.05)
    a = run_inversion(cfg, pb, z, truth=truth)
    b = run_inversion(cfg, pb, z, truth=truth)
    assert np.array_equal(a.a_h.to_vector(), b.a_h.to_vector())
    assert a.history[-1]["J"] < a.history[0]["J"]
    assert a.forward_solves == len(a.history) == 8
    a.write_history(tmp_path / "h.csv")
    b.write_history(tmp_path / "h2.csv")
    assert (tmp_path / "h.csv").read_bytes() == (tmp_path / "h2.csv").read_bytes()
    head = (tmp_path / "h.csv").read_text().splitlines()[0]
    assert head == "k,J,tv,grad_inf_norm,l1_rel_error"
