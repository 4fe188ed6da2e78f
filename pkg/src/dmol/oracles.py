"""Brute-force references used to validate the modal solver and the inverse gradient.

:class:`StripFDSolver` discretises the mapped problem on the truncated strip
``[rho_min, 0] x [phi_min, phi_max]`` with bilinear elements in ``(rho, phi)``.
The strain is formed directly from the Cartesian chain rule and the full
anisotropic tensor, so the oracle shares no code with the angular assembly of
the modal solver. On tensor grids this is a second-order scheme; material
interfaces are grid lines and the interface conditions hold weakly. The strip
is closed by a traction-free (natural) condition at ``rho_min``, which mimics
boundedness as ``rho -> -inf`` once ``rho_min`` is far enough out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import OracleFailure
from .forward import ForwardProblem, solve_forward
from .geometry import jacobian_rows
from .material import PiecewiseMaterial
from .norms import _merge_breakpoints

_G2 = np.array([-1.0, 1.0]) / np.sqrt(3.0)


def _q1_shape(xi, eta):
    """Bilinear shape functions and reference derivatives at (xi, eta) in [-1, 1]^2.

    Local node order: (i, j), (i+1, j), (i, j+1), (i+1, j+1) with i along rho.
    """
    sx = np.array([-1.0, 1.0, -1.0, 1.0])
    sy = np.array([-1.0, -1.0, 1.0, 1.0])
    N = 0.25 * (1 + sx * xi) * (1 + sy * eta)
    dN_dxi = 0.25 * sx * (1 + sy * eta)
    dN_deta = 0.25 * sy * (1 + sx * xi)
    return N, dN_dxi, dN_deta


@dataclass
class StripFDResult:
    """Nodal values on the strip grid; ``U`` has shape (2, n_rho + 1, n_phi_nodes)."""

    pb: ForwardProblem
    rho: np.ndarray
    phi: np.ndarray
    U: np.ndarray

    def _locate(self, grid, x):
        i = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, grid.size - 2)
        t = (x - grid[i]) / (grid[i + 1] - grid[i])
        return i, t

    def evaluate_grid(self, rho, phi) -> np.ndarray:
        """Bilinear interpolation on a tensor grid; shape (2, len(rho), len(phi))."""
        i, s = self._locate(self.rho, np.asarray(rho, float))
        j, t = self._locate(self.phi, np.asarray(phi, float))
        U = self.U
        s, t = s[:, None], t[None, :]
        return (
            (1 - s) * (1 - t) * U[:, i][:, :, j]
            + s * (1 - t) * U[:, i + 1][:, :, j]
            + (1 - s) * t * U[:, i][:, :, j + 1]
            + s * t * U[:, i + 1][:, :, j + 1]
        )

    def gradient_grid(self, rho, phi) -> np.ndarray:
        """Cartesian gradient of the bilinear interpolant; shape (2, 2, len(rho), len(phi))."""
        rho = np.asarray(rho, float)
        phi = np.asarray(phi, float)
        i, s = self._locate(self.rho, rho)
        j, t = self._locate(self.phi, phi)
        hr = (self.rho[i + 1] - self.rho[i])[:, None]
        hp = (self.phi[j + 1] - self.phi[j])[None, :]
        s, t = s[:, None], t[None, :]
        U = self.U
        u00, u10 = U[:, i][:, :, j], U[:, i + 1][:, :, j]
        u01, u11 = U[:, i][:, :, j + 1], U[:, i + 1][:, :, j + 1]
        d_rho = ((1 - t) * (u10 - u00) + t * (u11 - u01)) / hr
        d_phi = ((1 - s) * (u01 - u00) + s * (u11 - u10)) / hp
        R, P = np.meshgrid(rho, phi, indexing="ij")
        Jr = jacobian_rows(self.pb.shape, R, P)
        out = np.empty((2, 2) + R.shape)
        for c in range(2):
            for d in range(2):
                out[c, d] = d_rho[c] * Jr[..., 0, d] + d_phi[c] * Jr[..., 1, d]
        return out


@dataclass
class StripFDSolver:
    """Bilinear-element solver for the mapped problem on a truncated strip.

    Parameters
    ----------
    n_rho, n_phi : int
        Number of cells along rho and (approximately) along phi; material
        interfaces and boundary corners are always inserted as grid lines.
    rho_min : float
        Position of the traction-free closure.
    """

    n_rho: int = 160
    n_phi: int = 256
    rho_min: float = -10.0

    def grid(self, pb: ForwardProblem):
        shape = pb.shape
        rho = np.linspace(self.rho_min, 0.0, self.n_rho + 1)
        uniform = shape.phi_min + shape.span * np.arange(self.n_phi + 1) / self.n_phi
        phi = _merge_breakpoints([uniform, pb.material.edges, pb.domain.interfaces], shape, tol=1e-10)
        return rho, phi

    def solve(self, pb: ForwardProblem) -> StripFDResult:
        shape, mat = pb.shape, pb.material
        rho, phi = self.grid(pb)
        nr, nq = rho.size, phi.size
        periodic = shape.periodic
        nq_free = nq - 1 if periodic else nq  # last column identified with the first

        def node(i, j):
            return i * nq_free + (j % nq_free if periodic else j)

        # element geometry: (n_rho) x (nq - 1) cells, 2x2 Gauss
        I, J = np.meshgrid(np.arange(nr - 1), np.arange(nq - 1), indexing="ij")
        I, J = I.ravel(), J.ravel()
        hr = rho[I + 1] - rho[I]
        hp = phi[J + 1] - phi[J]
        conn = np.stack([node(I, J), node(I + 1, J), node(I, J + 1), node(I + 1, J + 1)], axis=1)
        tab = mat.coefficients_at(0.5 * (phi[J] + phi[J + 1]))  # (n_el, 6)
        A = np.empty((I.size, 3, 3))
        A[:, 0, 0], A[:, 1, 1], A[:, 2, 2] = tab[:, 0], tab[:, 1], tab[:, 2]
        A[:, 0, 1] = A[:, 1, 0] = tab[:, 3]
        A[:, 0, 2] = A[:, 2, 0] = tab[:, 4]
        A[:, 1, 2] = A[:, 2, 1] = tab[:, 5]

        Ke = np.zeros((I.size, 8, 8))
        Fe = np.zeros((I.size, 8))
        for xi in _G2:
            for eta in _G2:
                N, dxi, deta = _q1_shape(xi, eta)
                r_q = rho[I] + 0.5 * (1 + xi) * hr
                p_q = phi[J] + 0.5 * (1 + eta) * hp
                w = 0.25 * hr * hp  # Gauss weights are 1 on [-1, 1]^2
                dNr = dxi[None, :] * (2.0 / hr)[:, None]
                dNp = deta[None, :] * (2.0 / hp)[:, None]
                r = shape.radius(p_q)
                rp = shape.radius_prime(p_q)
                s, c = np.sin(p_q), np.cos(p_q)
                P = rp * s + r * c
                Q = -rp * c + r * s
                # strain numerators (times e^rho r^2); columns u1_a, u2_a interleaved
                B = np.zeros((I.size, 3, 8))
                d1 = P[:, None] * dNr - (r * s)[:, None] * dNp  # d/dx numerator
                d2 = Q[:, None] * dNr + (r * c)[:, None] * dNp  # d/dy numerator
                B[:, 0, 0::2] = d1
                B[:, 1, 1::2] = d2
                B[:, 2, 0::2] = d2
                B[:, 2, 1::2] = d1
                Ke += np.einsum("e,eka,ekl,elb->eab", w / (r * r), B, A, B)
                if pb.body_force is not None:
                    f = np.asarray(pb.body_force(p_q), dtype=float)  # (2, n_el)
                    jac = w * np.exp(2 * r_q) * r * r
                    Fe[:, 0::2] += (jac * f[0])[:, None] * N[None, :]
                    Fe[:, 1::2] += (jac * f[1])[:, None] * N[None, :]

        n_nodes = nr * nq_free
        dofs = np.empty((I.size, 8), dtype=int)
        dofs[:, 0::2] = 2 * conn
        dofs[:, 1::2] = 2 * conn + 1
        rows = np.repeat(dofs, 8, axis=1).ravel()
        cols = np.tile(dofs, (1, 8)).ravel()
        K = sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(2 * n_nodes, 2 * n_nodes))
        F = np.bincount(dofs.ravel(), weights=Fe.ravel(), minlength=2 * n_nodes)

        # Dirichlet data on the rho = 0 row
        top = node(nr - 1, np.arange(nq_free))
        g = np.asarray(pb.dirichlet(phi[:nq_free]), dtype=float)
        fixed = np.concatenate([2 * top, 2 * top + 1])
        vals = np.concatenate([g[0], g[1]])
        free = np.setdiff1d(np.arange(2 * n_nodes), fixed)
        x = np.zeros(2 * n_nodes)
        x[fixed] = vals
        rhs = F[free] - K[free][:, fixed] @ vals
        try:
            x[free] = spla.spsolve(K[free][:, free].tocsc(), rhs)
        except RuntimeError as exc:  # singular factor
            raise OracleFailure(f"strip system is singular: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise OracleFailure("strip solve produced non-finite values")

        U = x.reshape(n_nodes, 2).T.reshape(2, nr, nq_free)
        if periodic:
            U = np.concatenate([U, U[:, :, :1]], axis=2)
        return StripFDResult(pb, rho, phi, U)


def fd_solve(pb: ForwardProblem, n_rho: int = 160, n_phi: int = 256, rho_min: float = -10.0) -> StripFDResult:
    """Solve ``pb`` with :class:`StripFDSolver`."""
    return StripFDSolver(n_rho, n_phi, rho_min).solve(pb)


def compare_h1(fd: StripFDResult, sol, r_min: float = 0.1, n_gauss: int = 3) -> float:
    """Relative H1 difference between ``fd`` and ``sol`` over the part of the domain with r > r_min.

    Integration uses ``n_gauss`` points per strip cell in each direction; the
    modal solution is the normaliser.
    """
    xg, wg = np.polynomial.legendre.leggauss(n_gauss)

    def composite(nodes):
        h = np.diff(nodes)
        pts = (nodes[:-1, None] + 0.5 * (1 + xg)[None, :] * h[:, None]).ravel()
        wts = (0.5 * h[:, None] * wg[None, :]).ravel()
        return pts, wts

    shape = fd.pb.shape
    rho, wr = composite(fd.rho)
    phi, wp = composite(fd.phi)
    r_t = shape.radius(phi)
    mask = np.exp(rho)[:, None] * r_t[None, :] > r_min
    W = wr[:, None] * np.exp(2 * rho)[:, None] * (wp * r_t**2)[None, :] * mask
    du = fd.evaluate_grid(rho, phi) - sol.evaluate_grid(rho, phi)
    dg = fd.gradient_grid(rho, phi) - sol.gradient_grid(rho, phi)
    u = sol.evaluate_grid(rho, phi)
    g = sol.gradient_grid(rho, phi)
    num = np.sum(W * (np.sum(du**2, axis=0) + np.sum(dg**2, axis=(0, 1))))
    den = np.sum(W * (np.sum(u**2, axis=0) + np.sum(g**2, axis=(0, 1))))
    return float(np.sqrt(num / den))


def fd_gradient_of_J(cfg, pb: ForwardProblem, z, a_h: PiecewiseMaterial, step: float = 1e-4) -> np.ndarray:
    """Central differences of ``J = J0 + eta TV``, re-solving the forward problem per evaluation."""
    from .inverse import compute_J0, compute_tv

    base = pb.with_mesh(cfg.M_forward, cfg.order_forward)
    vec0 = a_h.to_vector()

    def J(vec):
        a = PiecewiseMaterial.from_vector(a_h.edges, vec)
        sol = solve_forward(base.with_material(a))
        return compute_J0(a, sol, z) + cfg.eta * compute_tv(a, pb.shape)

    out = np.empty_like(vec0)
    for i in range(vec0.size):
        e = np.zeros_like(vec0)
        e[i] = step
        out[i] = (J(vec0 + e) - J(vec0 - e)) / (2 * step)
    return out
