"""Coefficient identification from one full-field measurement.

The misfit functional is the energy of the difference ``u[a] - z``,

    J0(a) = 1/2 int e(u[a] - z)^T A e(u[a] - z) dx dy,

regularised by the r-weighted total variation of each coefficient across the
``m`` angular sectors. Its gradient with respect to the sector coefficients
needs no derivative of ``u`` with respect to ``a`` (one forward solve per
iteration). Iterations use Adam followed by a projection onto SPD tensors.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DMOLError, NumericalError
from .forward import ForwardProblem, SolveCounter, reference_solution, solve_forward
from .material import COEFF_NAMES, PiecewiseMaterial, project_spd
from .norms import _merge_breakpoints, angular_gauss, rho_panels

log = logging.getLogger(__name__)


# -- measurements ---------------------------------------------------------------


@dataclass(frozen=True)
class MeasurementGrid:
    """Tensor quadrature grid: graded rho panels times composite angular Gauss."""

    rho: np.ndarray
    w_rho: np.ndarray
    phi: np.ndarray
    w_phi: np.ndarray

    @classmethod
    def build(
        cls,
        shape,
        n_panels: int = 64,
        n_rho_gauss: int = 4,
        rho_min: float = -12.0,
        n_ang: int = 512,
        n_ang_gauss: int = 3,
        extra_nodes=(),
    ) -> "MeasurementGrid":
        rho, wr = rho_panels(rho_min, n_panels, n_rho_gauss)
        uniform = shape.phi_min + shape.span * np.arange(n_ang + 1) / n_ang
        bp = _merge_breakpoints([uniform, np.asarray(extra_nodes, dtype=float)], shape, tol=1e-10)
        phi, wp = angular_gauss(bp, n_ang_gauss)
        return cls(rho, wr, phi, wp)

    @property
    def shape2d(self) -> tuple[int, int]:
        return self.rho.size, self.phi.size


@dataclass(frozen=True)
class MeasurementField:
    """Sampled displacement ``z`` and its Cartesian gradient on a grid.

    ``values`` has shape (2, n_rho, n_phi); ``gradients`` (2, 2, n_rho, n_phi)
    with ``gradients[c, 0] = dz_c/dx`` and ``gradients[c, 1] = dz_c/dy``.
    """

    grid: MeasurementGrid
    values: np.ndarray
    gradients: np.ndarray
    delta: float
    seed: int | None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.gradients)) or not np.all(np.isfinite(self.values)):
            raise NumericalError("measurement field contains non-finite entries")

    def save(self, path) -> None:
        """Write an ``.npz`` container with the grid, samples and JSON metadata."""
        meta = dict(self.meta, version=1, delta=float(self.delta), seed=self.seed)
        np.savez(
            path,
            rho=self.grid.rho,
            w_rho=self.grid.w_rho,
            phi=self.grid.phi,
            w_phi=self.grid.w_phi,
            values=self.values,
            gradients=self.gradients,
            meta=np.array(json.dumps(meta, sort_keys=True)),
        )

    @classmethod
    def load(cls, path) -> "MeasurementField":
        with np.load(path, allow_pickle=False) as d:
            meta = json.loads(str(d["meta"]))
            if meta.get("version") != 1:
                raise ConfigurationError(f"unsupported measurement file version {meta.get('version')!r}")
            grid = MeasurementGrid(d["rho"], d["w_rho"], d["phi"], d["w_phi"])
            return cls(grid, d["values"], d["gradients"], meta["delta"], meta["seed"], meta)


def material_hash(material: PiecewiseMaterial) -> str:
    data = np.concatenate([material.edges, material.to_vector()]).astype("<f8").tobytes()
    return hashlib.sha256(data).hexdigest()


def synthesize_measurements(
    truth: PiecewiseMaterial,
    pb: ForwardProblem,
    delta: float,
    seed: int | None,
    grid: MeasurementGrid | None = None,
    M_ref: int = 512,
    order_ref: int = 2,
    solution=None,
) -> MeasurementField:
    """Noisy samples of ``u[truth]`` and its gradient.

    Values get ``delta * |u|_inf * U[-1, 1]`` noise, gradients independent
    ``delta * |grad u|_inf * U[-1, 1]`` noise. A precomputed ``solution`` may
    be passed to skip the reference solve.
    """
    if delta < 0:
        raise ConfigurationError("delta must be nonnegative")
    if grid is None:
        grid = MeasurementGrid.build(pb.shape)
    M_used = None
    if solution is None:
        solution, M_used = reference_solution(pb.with_material(truth), M_ref, order_ref)
    u = solution.evaluate_grid(grid.rho, grid.phi)
    g = solution.gradient_grid(grid.rho, grid.phi)
    rng = np.random.default_rng(seed)
    if delta > 0:
        u = u + delta * np.abs(u).max() * rng.uniform(-1.0, 1.0, size=u.shape)
        g = g + delta * np.abs(g).max() * rng.uniform(-1.0, 1.0, size=g.shape)
    meta = {
        "truth_sha256": material_hash(truth),
        "M_ref": M_used,
        "order_ref": order_ref,
        "shape": pb.shape.name,
    }
    return MeasurementField(grid, u, g, float(delta), seed, meta)


# -- functional and gradients ----------------------------------------------------


def _area_weights(shape, grid: MeasurementGrid) -> np.ndarray:
    r2 = shape.radius(grid.phi) ** 2
    return grid.w_rho[:, None] * np.exp(2.0 * grid.rho)[:, None] * (grid.w_phi * r2)[None, :]


def _strain(grad) -> np.ndarray:
    """(e11, e22, 2 e12) from a gradient array (2, 2, ...)."""
    return np.stack([grad[0, 0], grad[1, 1], grad[0, 1] + grad[1, 0]])


def _sector_tables(a_h: PiecewiseMaterial, phi):
    idx = a_h.sector_index(phi)
    return idx, a_h.coefficient_table()[idx]  # (n_phi, 6)


def _quad_form(c, e, f):
    """``e^T A f`` for coefficient rows c (..., 6) broadcast over strain arrays (3, ...)."""
    a11, a22, a33, a12, a13, a23 = (c[..., i] for i in range(6))
    return (
        a11 * e[0] * f[0] + a22 * e[1] * f[1] + a33 * e[2] * f[2]
        + a12 * (e[0] * f[1] + e[1] * f[0])
        + a13 * (e[0] * f[2] + e[2] * f[0])
        + a23 * (e[1] * f[2] + e[2] * f[1])
    )


def solution_gradients(sol, z: MeasurementField) -> np.ndarray:
    return sol.gradient_grid(z.grid.rho, z.grid.phi)


def compute_J0(a_h: PiecewiseMaterial, sol, z: MeasurementField, grad_u=None) -> float:
    """Energy of ``u[a_h] - z`` with the coefficients of ``a_h``."""
    if grad_u is None:
        grad_u = solution_gradients(sol, z)
    e = _strain(grad_u - z.gradients)
    _, c = _sector_tables(a_h, z.grid.phi)
    W = _area_weights(sol.shape, z.grid)
    return 0.5 * float(np.sum(W * _quad_form(c[None, :, :], e, e)))


def energy_scale(sol, z: MeasurementField, a_h: PiecewiseMaterial, grad=None) -> float:
    """``1/2 int e(z)^T A e(z)``; the natural scale of J0."""
    e = _strain(z.gradients if grad is None else grad)
    _, c = _sector_tables(a_h, z.grid.phi)
    W = _area_weights(sol.shape, z.grid)
    return 0.5 * float(np.sum(W * _quad_form(c[None, :, :], e, e)))


def gradient_J0(a_h: PiecewiseMaterial, sol, z: MeasurementField, grad_u=None) -> np.ndarray:
    """Sector integrals of ``dJ0/da_ij^t``, ordered like :meth:`PiecewiseMaterial.to_vector`.

    For each coefficient the integrand is the difference of the same strain
    product evaluated on ``z`` and on ``u[a_h]``; no derivative of ``u`` with
    respect to the coefficients is needed.
    """
    if grad_u is None:
        grad_u = solution_gradients(sol, z)
    W = _area_weights(sol.shape, z.grid)

    def products(g):
        ex, ey = g[0, 0], g[1, 1]
        sh = g[0, 1] + g[1, 0]
        return np.stack([0.5 * ex * ex, 0.5 * ey * ey, 0.5 * sh * sh, ex * ey, ex * sh, ey * sh])

    diff = products(z.gradients) - products(grad_u)  # (6, n_rho, n_phi)
    per_phi = np.einsum("kij,ij->kj", diff, W)  # integrate over rho
    idx = a_h.sector_index(z.grid.phi)
    m = a_h.m
    out = np.stack([np.bincount(idx, weights=per_phi[k], minlength=m) for k in range(6)])
    return out.reshape(-1)


def _edge_radii(a_h: PiecewiseMaterial, shape) -> np.ndarray:
    """``r(phi_t)`` at the right edge of each sector t = 1..m."""
    edges = a_h.edges[1:]
    return shape.radius(np.clip(edges, shape.phi_min, shape.phi_max))


def compute_tv(a_h: PiecewiseMaterial, shape) -> float:
    """``sum_ij sum_t r(phi_t) |a_ij^{t+1} - a_ij^t|`` with cyclic indexing."""
    tab = a_h.coefficient_table()  # (m, 6)
    jumps = np.abs(np.roll(tab, -1, axis=0) - tab)
    return float(np.sum(_edge_radii(a_h, shape)[:, None] * jumps))


def tv_subgradient(a_h: PiecewiseMaterial, shape) -> np.ndarray:
    """Subgradient of :func:`compute_tv` with ``sgn(0) = 0``, ordered like ``to_vector``.

    ``dTV/da^t = sgn(a^t - a^{t-1}) r(phi_{t-1}) - sgn(a^{t+1} - a^t) r(phi_t)``.
    """
    tab = a_h.coefficient_table()
    r = _edge_radii(a_h, shape)[:, None]
    fwd = np.sign(np.roll(tab, -1, axis=0) - tab)  # sgn(a^{t+1} - a^t)
    bwd = np.sign(tab - np.roll(tab, 1, axis=0))  # sgn(a^t - a^{t-1})
    g = bwd * np.roll(r, 1, axis=0) - fwd * r
    return g.T.reshape(-1)


# -- Adam with SPD projection ----------------------------------------------------


@dataclass(frozen=True)
class InverseConfig:
    """Settings of the reconstruction loop.

    ``tau0=None`` selects ``0.05 * mean(init coefficients)``; the learning
    rate at iteration k is ``tau0 / (1 + k / decay)``. With
    ``relative_steps`` the rate is a fraction of each initial coefficient's
    magnitude instead (``tau0=None`` then means 0.05), which suits tensors
    whose entries differ by an order of magnitude.
    """

    m: int
    init: PiecewiseMaterial
    eta: float = 1e-7
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    tau0: float | None = None
    decay: float = 50.0
    tol: float = 1e-5
    max_iter: int = 1000
    spd_floor: float = 1e-6
    M_forward: int = 128
    order_forward: int = 1
    relative_steps: bool = False

    def __post_init__(self):
        if self.eta < 0:
            raise ConfigurationError("eta must be nonnegative")
        if self.init.m != self.m:
            raise ConfigurationError(f"init has {self.init.m} sectors, expected m={self.m}")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be at least 1")

    @property
    def learning_rate0(self) -> float:
        if self.tau0 is not None:
            return float(self.tau0)
        if self.relative_steps:
            return 0.05
        return 0.05 * float(np.mean(self.init.to_vector()))

    @property
    def step_scale(self) -> np.ndarray | float:
        """Per-coefficient multiplier of the learning rate."""
        if not self.relative_steps:
            return 1.0
        v = np.abs(self.init.to_vector())
        return np.where(v > 0, v, np.mean(v))

    def tau(self, k: int) -> float:
        return self.learning_rate0 / (1.0 + k / self.decay)


@dataclass
class InverseState:
    """Current sector coefficients with the Adam moments."""

    a_h: PiecewiseMaterial
    first: np.ndarray
    second: np.ndarray
    k: int = 0
    history: list = field(default_factory=list)

    @classmethod
    def start(cls, a0: PiecewiseMaterial) -> "InverseState":
        n = 6 * a0.m
        return cls(a0, np.zeros(n), np.zeros(n), 0, [])

    @property
    def vector(self) -> np.ndarray:
        return self.a_h.to_vector()


def project_sectors(vec: np.ndarray, m: int, floor: float) -> np.ndarray:
    """Clip each sector's 3x3 tensor to eigenvalues ``>= floor``."""
    c = vec.reshape(6, m).T  # (m, 6)
    A = np.empty((m, 3, 3))
    A[:, 0, 0], A[:, 1, 1], A[:, 2, 2] = c[:, 0], c[:, 1], c[:, 2]
    A[:, 0, 1] = A[:, 1, 0] = c[:, 3]
    A[:, 0, 2] = A[:, 2, 0] = c[:, 4]
    A[:, 1, 2] = A[:, 2, 1] = c[:, 5]
    P = project_spd(A, floor)
    out = np.stack([P[:, 0, 0], P[:, 1, 1], P[:, 2, 2], P[:, 0, 1], P[:, 0, 2], P[:, 1, 2]], axis=1)
    return out.T.reshape(-1)


def adam_step(state: InverseState, grad: np.ndarray, cfg: InverseConfig, tau: float | None = None) -> InverseState:
    """One bias-corrected Adam update followed by the SPD projection."""
    k = state.k + 1
    g = np.asarray(grad, dtype=float)
    first = cfg.beta1 * state.first + (1.0 - cfg.beta1) * g
    second = cfg.beta2 * state.second + (1.0 - cfg.beta2) * g * g
    mhat = first / (1.0 - cfg.beta1**k)
    vhat = second / (1.0 - cfg.beta2**k)
    step = (cfg.tau(k) if tau is None else tau) * cfg.step_scale * mhat / (np.sqrt(vhat) + cfg.eps)
    vec = project_sectors(state.vector - step, state.a_h.m, cfg.spd_floor)
    a_new = PiecewiseMaterial.from_vector(state.a_h.edges, vec)
    return InverseState(a_new, first, second, k, state.history)


# -- driver ----------------------------------------------------------------------


def l1_relative_error(a_h: PiecewiseMaterial, truth_vec: np.ndarray) -> float:
    return float(np.sum(np.abs(a_h.to_vector() - truth_vec)) / np.sum(np.abs(truth_vec)))


@dataclass
class InversionResult:
    state: InverseState
    history: list[dict]
    forward_solves: int
    stop_reason: str

    @property
    def a_h(self) -> PiecewiseMaterial:
        return self.state.a_h

    def write_history(self, path) -> None:
        cols = ["k", "J", "tv", "grad_inf_norm", "l1_rel_error"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in self.history:
                w.writerow(
                    [row["k"]]
                    + [("" if row.get(c) is None else f"{row[c]:.16e}") for c in cols[1:]]
                )

    def coefficients_dict(self) -> dict:
        a = self.a_h
        out = {"edges": [float(e) for e in a.edges], "sectors": {}}
        for t, vec in enumerate(a.coefficient_table(), start=1):
            out["sectors"][str(t)] = {n: float(v) for n, v in zip(COEFF_NAMES, vec)}
        return out


def run_inversion(
    cfg: InverseConfig,
    pb: ForwardProblem,
    z: MeasurementField,
    truth: PiecewiseMaterial | None = None,
    counter: SolveCounter | None = None,
    callback=None,
) -> InversionResult:
    """Adam iterations with exactly one forward solve per iteration.

    Stops when the relative change of J drops below ``tol``, when the
    gradient sup-norm falls below ``tol`` times its first value, when J0 is
    negligible against the energy of the data (already at the optimum), or
    after ``max_iter`` iterations.
    """
    counter = counter if counter is not None else SolveCounter()
    state = InverseState.start(cfg.init)
    truth_vec = None
    if truth is not None:
        from .problems import resample_material

        truth_vec = resample_material(truth, cfg.init.edges).to_vector()
    base = pb.with_mesh(cfg.M_forward, cfg.order_forward)
    history: list[dict] = []
    J_prev = None
    g0 = None
    reason = "max_iter"
    scale = None
    for k in range(1, cfg.max_iter + 1):
        try:
            sol = solve_forward(base.with_material(state.a_h), counter=counter)
        except DMOLError as exc:
            raise NumericalError(f"forward solve failed at iteration {k}: {exc}") from exc
        gu = solution_gradients(sol, z)
        J0 = compute_J0(state.a_h, sol, z, grad_u=gu)
        tv = compute_tv(state.a_h, pb.shape)
        J = J0 + cfg.eta * tv
        grad = gradient_J0(state.a_h, sol, z, grad_u=gu) + cfg.eta * tv_subgradient(state.a_h, pb.shape)
        ginf = float(np.max(np.abs(grad)))
        if scale is None:
            scale = energy_scale(sol, z, state.a_h)
        row = {
            "k": k,
            "J": J,
            "tv": tv,
            "grad_inf_norm": ginf,
            "l1_rel_error": None if truth_vec is None else l1_relative_error(state.a_h, truth_vec),
        }
        history.append(row)
        if callback is not None:
            callback(row)
        g0 = ginf if g0 is None else g0
        if J_prev is not None and abs(J - J_prev) / max(J, 1e-30) < cfg.tol:
            reason = "relative change of J below tol"
            break
        if g0 > 0 and ginf < cfg.tol * g0 and k > 1:
            reason = "gradient below tol times its initial norm"
            break
        if J0 < 1e-14 * scale:
            reason = "J0 negligible"
            break
        J_prev = J
        if k == cfg.max_iter:
            break
        state = adam_step(state, grad, cfg)
    state.history = history
    return InversionResult(state, history, counter.calls, reason)
