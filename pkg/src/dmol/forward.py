"""Forward solves, the exact anisotropic crack field and convergence studies."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .discretization import assemble, build_mesh, load_vector
from .errors import DegenerateMaterial, IllConditionedModalBasis
from .geometry import BoundaryShape, DomainSpec
from .material import AnisoTensor, PiecewiseMaterial
from .norms import SeparableField, h1_relative_error
from .spectral import ACCEPT_RESIDUAL, ModalSolution, build_modal_solution, select_and_pair, solve_qep

log = logging.getLogger(__name__)


def constant_vector(c1: float, c2: float) -> Callable:
    """Angular function returning the constant vector ``(c1, c2)``."""

    def f(phi):
        phi = np.asarray(phi, dtype=float)
        return np.stack([np.full_like(phi, c1), np.full_like(phi, c2)])

    return f


def radial_unit_field(phi):
    """The unit radial vector ``(x/r, y/r)`` as a function of the angle."""
    phi = np.asarray(phi, dtype=float)
    return np.stack([np.cos(phi), np.sin(phi)])


@dataclass(frozen=True)
class ForwardProblem:
    """Dirichlet problem ``-div sigma = p`` on a star-shaped domain.

    ``dirichlet`` maps angles to boundary values of shape (2, n) on rho = 0.
    ``body_force`` is None or a function of the angle only (forces constant
    along rays), also returning shape (2, n).
    """

    domain: DomainSpec
    material: PiecewiseMaterial
    dirichlet: Callable
    body_force: Callable | None = None
    M: int = 64
    order: int = 1
    name: str = ""

    @property
    def shape(self) -> BoundaryShape:
        return self.domain.boundary

    def with_mesh(self, M: int, order: int | None = None) -> "ForwardProblem":
        return replace(self, M=int(M), order=self.order if order is None else int(order))

    def with_material(self, material: PiecewiseMaterial) -> "ForwardProblem":
        return replace(self, material=material)


@dataclass
class SolveCounter:
    """Counts forward solves; handy for checking per-iteration cost."""

    calls: int = 0


def particular_vector(B, G) -> np.ndarray:
    """``W`` with ``(4 B2 + 2 B1 + B0) W = -G``, so ``exp(2 rho) W`` solves the forced system."""
    return np.linalg.solve(4.0 * B.B2 + 2.0 * B.B1 + B.B0, -G)


def solve_forward(
    pb: ForwardProblem,
    method: str = "cholesky",
    retry: bool = True,
    counter: SolveCounter | None = None,
    accept_residual: float | None = ACCEPT_RESIDUAL,
) -> ModalSolution:
    """Assemble, solve the eigenproblem and match the boundary data.

    An ill-conditioned modal matrix is tolerated when the boundary data are
    still reproduced to ``accept_residual`` (pass None to always reject).
    Otherwise the mesh size is perturbed by one element and the solve
    retried once.
    """
    if counter is not None:
        counter.calls += 1
    try:
        return _solve(pb, method, accept_residual)
    except IllConditionedModalBasis as exc:
        if not retry:
            raise
        log.warning("%s; retrying with M=%d", exc, pb.M + 1)
        return _solve(pb.with_mesh(pb.M + 1), method, accept_residual)


def _solve(pb: ForwardProblem, method: str, accept_residual=ACCEPT_RESIDUAL) -> ModalSolution:
    shape = pb.shape
    mesh = build_mesh(pb.domain, pb.M, pb.order, extra_nodes=pb.material.edges)
    B = assemble(mesh, shape, pb.material)
    modes = select_and_pair(solve_qep(B, method=method))
    f = np.asarray(pb.dirichlet(mesh.dof_positions), dtype=float)
    F = f.reshape(2, -1).reshape(-1)
    W = None
    if pb.body_force is not None:
        W = particular_vector(B, load_vector(mesh, shape, pb.body_force))
    return build_modal_solution(modes, F, mesh, shape, particular=W, accept_residual=accept_residual)


def gamma_index(sol: ModalSolution, j: int) -> float:
    """The j-th retained real eigenvalue, counting from 1 with the two zeros first."""
    g = np.sort(sol.modes.real_gammas)
    return float(g[j - 1])


# -- exact crack-tip field ------------------------------------------------------


@dataclass(frozen=True)
class CrackSolution:
    """Mode-I field of a traction-free crack along the negative x-axis.

    ``u = sqrt(2 r / pi) Re[(mu1 sqrt(c + mu2 s) (p2, q2) - mu2 sqrt(c + mu1 s) (p1, q1)) / (mu1 - mu2)]``
    where ``mu1, mu2`` solve the characteristic quartic of the compliance
    ``b = a^-1``. The principal square root of ``x + mu y`` equals
    ``sqrt(r) sqrt(cos + mu sin)`` and is continuous off the crack.
    """

    tensor: AnisoTensor
    mu: np.ndarray
    p: np.ndarray
    q: np.ndarray

    @property
    def gamma(self) -> float:
        return 0.5

    def _coef(self):
        mu1, mu2 = self.mu
        d = mu1 - mu2
        c2 = mu1 / d * np.array([self.p[1], self.q[1]])
        c1 = -mu2 / d * np.array([self.p[0], self.q[0]])
        return (c1, c2)  # multiply sqrt(x + mu_j y)

    def displacement(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        out = np.zeros((2,) + x.shape, dtype=complex)
        for mu, c in zip(self.mu, self._coef()):
            out += c.reshape((2,) + (1,) * x.ndim) * np.sqrt(x + mu * y + 0j)
        return np.sqrt(2.0 / np.pi) * out.real

    def gradient(self, x, y) -> np.ndarray:
        """Shape (2, 2, ...): ``out[c, 0] = du_c/dx``, ``out[c, 1] = du_c/dy``."""
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        out = np.zeros((2, 2) + x.shape, dtype=complex)
        ex = (1,) * x.ndim
        for mu, c in zip(self.mu, self._coef()):
            h = 0.5 / np.sqrt(x + mu * y + 0j)
            out[:, 0] += c.reshape((2,) + ex) * h
            out[:, 1] += c.reshape((2,) + ex) * (mu * h)
        return np.sqrt(2.0 / np.pi) * out.real

    def polar_profile(self, phi):
        """Complex ``g(phi)`` with ``u = sqrt(r) Re g(phi)``, and ``g'(phi)``."""
        phi = np.asarray(phi, dtype=float)
        s, c = np.sin(phi), np.cos(phi)
        g = np.zeros((2,) + phi.shape, dtype=complex)
        dg = np.zeros_like(g)
        for mu, cf in zip(self.mu, self._coef()):
            w = np.sqrt(c + mu * s + 0j)
            cf = cf.reshape((2,) + (1,) * phi.ndim)
            g += cf * w
            dg += cf * (mu * c - s) / (2.0 * w)
        k = np.sqrt(2.0 / np.pi)
        return k * g, k * dg

    def boundary_data(self, shape: BoundaryShape) -> Callable:
        """Dirichlet values on ``r = r(phi)``."""

        def f(phi):
            g, _ = self.polar_profile(phi)
            return (np.sqrt(shape.radius(phi)) * g).real

        return f

    def field(self, shape: BoundaryShape) -> SeparableField:
        """The field in (rho, phi) form: ``Re(exp(rho / 2) sqrt(r(phi)) g(phi))``."""

        def v(phi):
            g, _ = self.polar_profile(phi)
            return np.sqrt(shape.radius(phi)) * g

        def dv(phi):
            g, dg = self.polar_profile(phi)
            r = shape.radius(phi)
            return 0.5 * shape.radius_prime(phi) / np.sqrt(r) * g + np.sqrt(r) * dg

        bp = np.concatenate([[shape.phi_min, shape.phi_max], shape.breakpoints])
        return SeparableField(shape, [(0.5 + 0j, v, dv)], breakpoints=bp)


def exact_crack_solution(t: AnisoTensor) -> CrackSolution:
    """Closed-form crack field for the tensor ``t`` (see :class:`CrackSolution`)."""
    b = np.linalg.inv(t.matrix)
    coeffs = [b[0, 0], -2 * b[2, 0], 2 * b[1, 0] + b[2, 2], -2 * b[2, 1], b[1, 1]]
    roots = np.roots(coeffs)
    upper = roots[roots.imag > 0]
    if upper.size != 2:
        raise DegenerateMaterial(f"characteristic quartic has roots {roots}; need two in the upper half plane")
    upper = upper[np.argsort(upper.real)]
    # polish once with Newton
    poly = np.poly1d(coeffs)
    dpoly = poly.deriv()
    upper = upper - poly(upper) / dpoly(upper)
    if abs(upper[0] - upper[1]) < 1e-8 * max(1.0, abs(upper[0])):
        raise DegenerateMaterial(f"repeated characteristic roots {upper}; the crack formula is singular")
    mu = upper
    p = b[0, 0] * mu**2 + b[1, 0] - b[2, 0] * mu
    q = b[1, 0] * mu + b[1, 1] / mu - b[2, 1]
    return CrackSolution(t, mu, p, q)


def quartic_residual(sol: CrackSolution) -> np.ndarray:
    b = np.linalg.inv(sol.tensor.matrix)
    mu = sol.mu
    return (
        b[0, 0] * mu**4 - 2 * b[2, 0] * mu**3 + (2 * b[1, 0] + b[2, 2]) * mu**2
        - 2 * b[2, 1] * mu + b[1, 1]
    )


# -- convergence studies --------------------------------------------------------


def _orders(err: Sequence[float]) -> list[float | None]:
    out: list[float | None] = [None]
    for e0, e1 in zip(err[:-1], err[1:]):
        out.append(float(np.log2(e0 / e1)) if e0 > 0 and e1 > 0 else None)
    return out


@dataclass
class ErrorReport:
    """Per-mesh eigenvalue and H1 errors with observed orders ``log2(e_h / e_h/2)``."""

    M: list[int]
    eig_error: list[float]
    h1_rel: list[float]
    gamma_ref: float | None = None
    M_ref: int | None = None
    eig_order: list[float | None] = field(init=False)
    h1_order: list[float | None] = field(init=False)

    def __post_init__(self):
        self.eig_order = _orders(self.eig_error)
        self.h1_order = _orders(self.h1_rel)

    @property
    def h1_rel_last(self) -> float:
        return self.h1_rel[-1]

    def rows(self):
        for i, M in enumerate(self.M):
            yield M, self.eig_error[i], self.eig_order[i], self.h1_rel[i], self.h1_order[i]

    def write_csv(self, path) -> None:
        def fmt(v):
            if v is None or (isinstance(v, float) and not np.isfinite(v)):
                return ""
            return f"{v:.16e}"

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["M", "eig_error", "eig_order", "h1_rel", "h1_order"])
            for M, e, eo, h, ho in self.rows():
                w.writerow([M, fmt(e), fmt(eo), fmt(h), fmt(ho)])


def reference_solution(pb: ForwardProblem, M_ref: int = 512, order_ref: int = 2, M_min: int = 16):
    """High-resolution solve, halving ``M_ref`` while the modal basis is unusable.

    Some piecewise materials produce clusters of nearly parallel high modes
    once the mesh is fine enough; the coarsest usable refinement is then the
    best available reference. Returns ``(solution, M_used)``.
    """
    M = int(M_ref)
    while True:
        try:
            return solve_forward(pb.with_mesh(M, order_ref), retry=False), M
        except IllConditionedModalBasis as exc:
            if M // 2 < M_min:
                raise
            log.warning("reference at M=%d unusable (%s); trying M=%d", M, exc, M // 2)
            M //= 2


def convergence_study(
    template: ForwardProblem,
    M_list: Sequence[int],
    order: int,
    reference="exact",
    exact=None,
    gamma_ref: float | None = None,
    M_ref: int = 512,
    order_ref: int = 2,
    gamma_j: int = 3,
    with_h1: bool = True,
) -> ErrorReport:
    """Eigenvalue and H1 errors over a sequence of meshes.

    Parameters
    ----------
    template : ForwardProblem
        Problem whose mesh size is replaced by each entry of ``M_list``.
    reference : {"exact", "refined"}
        ``"exact"`` compares against ``exact`` (a field with angular terms or
        Cartesian callables); ``"refined"`` against a solve at ``M_ref`` with
        elements of order ``order_ref``.
    gamma_ref : float, optional
        Reference eigenvalue; defaults to the refined solve's value.
    """
    M_list = [int(M) for M in M_list]
    if any(b <= a for a, b in zip(M_list[:-1], M_list[1:])):
        raise ValueError("M_list must be strictly increasing")
    M_ref_used = None
    if reference == "refined":
        ref_sol, M_ref_used = reference_solution(template, M_ref, order_ref)
        ref_field = ref_sol
        if gamma_ref is None:
            gamma_ref = gamma_index(ref_sol, gamma_j)
    elif reference == "exact":
        ref_field = exact
        if gamma_ref is None and exact is not None and hasattr(exact, "profiles"):
            gamma_ref = float(np.real(exact.profiles[0][0]))
    else:
        raise ValueError(f"unknown reference kind {reference!r}")
    eig, h1 = [], []
    for M in M_list:
        sol = solve_forward(template.with_mesh(M, order))
        eig.append(abs(gamma_index(sol, gamma_j) - gamma_ref) if gamma_ref is not None else float("nan"))
        if with_h1 and ref_field is not None:
            h1.append(h1_relative_error(sol, ref_field))
        else:
            h1.append(float("nan"))
    return ErrorReport(M_list, eig, h1, gamma_ref=gamma_ref, M_ref=M_ref_used)
